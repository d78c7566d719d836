"""Built-in word lists used by the fallback syntax tagger and sentiment features.

These are small, hand-curated lists. They exist so the pipeline runs
without an external parser or sentiment toolkit; richer vectors should be
supplied through sidecar files.
"""

UPOS = (
    "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM",
    "PART", "PRON", "PROPN", "PUNCT", "SCONJ", "SYM", "VERB", "X",
)

PERSON = {
    1: frozenset("i me my mine myself we us our ours ourselves im i'm i've i'll i'd we're we've we'll".split()),
    2: frozenset("you your yours yourself yourselves ya y'all you're you've you'll".split()),
    3: frozenset(
        "he him his himself she her hers herself it its itself they them their theirs "
        "themselves he's she's it's they're".split()
    ),
}

CLOSED_CLASS = {
    "PRON": frozenset().union(*PERSON.values()) | frozenset(
        "who whom whose what which whoever whatever someone somebody something anyone anybody "
        "anything everyone everybody everything nobody nothing one oneself".split()
    ),
    "DET": frozenset("a an the this that these those each every some any no another all both either neither".split()),
    "ADP": frozenset(
        "of in on at by for with about against between into through during before after above below "
        "to from up down over under around among across behind beyond near off onto upon within without".split()
    ),
    "AUX": frozenset(
        "am is are was were be been being have has had do does did will would shall should can could "
        "may might must 's 're 've 'll 'd".split()
    ),
    "CCONJ": frozenset("and or but nor yet so".split()),
    "SCONJ": frozenset("if because although though while whereas unless since whether until than".split()),
    "PART": frozenset("not n't to 's".split()),
    "INTJ": frozenset("oh ah wow hey yeah yes no um uh hmm okay ok oops ouch hi hello bye please".split()),
    "ADV": frozenset(
        "very really just also too quite so now then here there never always often sometimes "
        "still already even again soon maybe perhaps not".split()
    ),
    "NUM": frozenset("zero one two three four five six seven eight nine ten hundred thousand million".split()),
}
# pronoun lookups win over determiners for "that"/"this"-style overlaps only where listed above
POS_PRIORITY = ("PRON", "AUX", "PART", "CCONJ", "SCONJ", "ADP", "DET", "NUM", "INTJ", "ADV")

SUFFIX_RULES = (
    ("ly", "ADV"),
    ("ing", "VERB"),
    ("ed", "VERB"),
    ("ize", "VERB"),
    ("ise", "VERB"),
    ("ate", "VERB"),
    ("ous", "ADJ"),
    ("ful", "ADJ"),
    ("less", "ADJ"),
    ("able", "ADJ"),
    ("ible", "ADJ"),
    ("ive", "ADJ"),
    ("ical", "ADJ"),
    ("est", "ADJ"),
    ("tion", "NOUN"),
    ("sion", "NOUN"),
    ("ment", "NOUN"),
    ("ness", "NOUN"),
    ("ity", "NOUN"),
    ("ship", "NOUN"),
    ("er", "NOUN"),
)

NEGATORS = frozenset(
    "not no never none nobody nothing neither nor without hardly barely n't cannot cant dont doesnt "
    "didnt isnt wasnt arent werent wont wouldnt shouldnt couldnt".split()
)

SENTIMENT_LEXICONS = {
    "positive": "good great love happy nice wonderful amazing awesome best excellent fantastic glad "
    "beautiful enjoy fun like perfect pleased proud thank thanks win brilliant lovely",
    "negative": "bad terrible hate awful worst horrible sad angry poor wrong problem fail failure "
    "ugly annoying stupid sick pain hurt lose loss boring",
    "joy": "joy happy laugh laughing delighted cheerful smile excited celebrate fun glad thrilled",
    "anger": "angry mad furious rage annoyed irritated outraged hate frustrated fight yell damn",
    "fear": "afraid scared fear terrified nervous worried anxious panic danger dangerous threat frightened",
    "sadness": "sad cry crying depressed lonely miss grief sorry unhappy tears heartbroken lost",
    "disgust": "disgusting gross sick nasty yuck awful revolting vile filthy creepy",
    "surprise": "surprised wow amazing shocked unexpected suddenly incredible unbelievable whoa astonished",
    "trust": "trust believe honest sure faith reliable true loyal safe confident",
    "anticipation": "hope expect wait soon plan looking forward ready tomorrow future eager",
    "arousal_high": "excited crazy wild intense screaming thrilled furious panic energetic rush",
    "arousal_low": "calm quiet tired relaxed sleepy slow peaceful bored gentle rest",
    "dominance_high": "control power strong lead win must command boss demand confident",
    "dominance_low": "weak helpless afraid lost confused small powerless sorry guess maybe",
    "certainty": "definitely certainly absolutely always never clearly obviously surely exactly totally",
    "hedge": "maybe perhaps possibly probably guess think seems might kind sort",
}
SENTIMENT_LEXICONS = {name: frozenset(words.split()) for name, words in SENTIMENT_LEXICONS.items()}
