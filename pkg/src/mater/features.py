"""Word-, utterance- and embedding-level feature assembly.

Word rows are ``syntax (20) || prosody (22)``; the utterance vector is
``sentiment (D_s) || rhythm (34)``. Slot layouts are listed in
``WORD_PROSODY_FIELDS`` and ``UTTERANCE_RHYTHM_FIELDS``.
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import dsp
from .dataio import Sample, WordAlignment, read_matrix
from .lexicons import CLOSED_CLASS, NEGATORS, PERSON, POS_PRIORITY, SENTIMENT_LEXICONS, SUFFIX_RULES, UPOS

SYNTAX_DIM = 20
PROSODY_DIM = 22
WORD_DIM = SYNTAX_DIM + PROSODY_DIM
RHYTHM_DIM = 34
SENTIMENT_DIM = 517
SEMITONE_REF_HZ = 27.5

WORD_PROSODY_FIELDS = (
    "loudness_mean", "loudness_std", "loudness_max", "loudness_slope",
    "jitter_local", "jitter_ppq5", "shimmer_local", "shimmer_db",
    "alpha_ratio_mean", "hnr_mean", "hnr_std",
    "f0_mean_st", "f0_std_st", "f0_range_st", "f0_slope_st",
    "voiced_fraction", "voiced_segment_count", "voiced_segment_mean_dur", "unvoiced_segment_mean_dur",
    "word_duration", "pre_pause_dur", "post_pause_dur",
)
UTTERANCE_RHYTHM_FIELDS = (
    "loudness_mean", "loudness_std", "loudness_max", "loudness_range", "loudness_slope",
    "jitter_mean", "jitter_std", "shimmer_mean", "shimmer_std", "hnr_mean", "hnr_std",
    "f0_mean_st", "f0_std_st", "f0_range_st", "f0_slope_st", "f0_q20_st", "f0_q50_st", "f0_q80_st",
    "voiced_fraction",
    "voiced_segment_count", "voiced_segment_rate", "voiced_segment_mean_dur", "voiced_segment_std_dur",
    "unvoiced_segment_count", "unvoiced_segment_mean_dur", "unvoiced_segment_std_dur",
    "pause_count", "pause_rate", "pause_mean_dur", "pause_std_dur", "pause_fraction",
    "speech_rate", "articulation_rate", "duration",
)
assert len(WORD_PROSODY_FIELDS) == PROSODY_DIM and len(UTTERANCE_RHYTHM_FIELDS) == RHYTHM_DIM


class FeatureError(RuntimeError):
    """Feature extraction failed for a sample; the message starts with the sample id."""


class ShortSpanWarning(UserWarning):
    """A word span is shorter than one analysis frame; its prosody vector is all zeros."""


@dataclass(frozen=True)
class FeatureConfig:
    sentiment_dim: int = SENTIMENT_DIM
    f0_min: float = dsp.DEFAULT_F0_MIN
    f0_max: float = dsp.DEFAULT_F0_MAX
    frame_len: float = dsp.DEFAULT_FRAME_LEN
    hop: float = dsp.DEFAULT_HOP
    pause_db_threshold: float = dsp.PAUSE_DB_THRESHOLD
    min_pause: float = dsp.MIN_PAUSE
    lexicons: dict | None = None
    syntax_sidecar: dict = field(default_factory=dict)
    sentiment_sidecar: dict = field(default_factory=dict)
    load_embeddings: bool = True


@dataclass
class FeatureBundle:
    word_seq: np.ndarray
    utterance: np.ndarray
    embeddings: dict[str, np.ndarray] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)


# ---------------------------------------------------------------------------
# whole-utterance acoustic analysis shared by the word and utterance levels


@dataclass(frozen=True)
class Analysis:
    audio: dsp.AudioBuffer
    f0: dsp.F0Track
    loudness: dsp.FrameTrack
    hnr: np.ndarray  # dB per frame, NaN where unvoiced
    alpha: np.ndarray  # dB per frame
    periods: dsp.PeriodList
    kinds: np.ndarray  # per frame: 0 unvoiced, 1 voiced, 2 pause
    segments: list
    frame_n: int
    hop_n: int

    @property
    def hop(self) -> float:
        return self.f0.hop

    def frame_slice(self, start_sample: int, end_sample: int) -> slice:
        """Frames whose centre sample lies in ``[start_sample, end_sample)``."""
        centre = self.frame_n // 2
        lo = max(-(-(start_sample - centre) // self.hop_n), 0)
        hi = max(-(-(end_sample - centre) // self.hop_n), 0)
        n = len(self.f0)
        return slice(min(lo, n), min(hi, n))



def analyze(audio: dsp.AudioBuffer, config: FeatureConfig = FeatureConfig()) -> Analysis:
    frame_n, hop_n = dsp.frame_params(audio.sample_rate, config.frame_len, config.hop)
    if len(audio) < frame_n:
        empty = np.zeros(0)
        f0 = dsp.F0Track(empty, empty, config.hop, config.frame_len, f0_min=config.f0_min, f0_max=config.f0_max)
        periods = dsp.PeriodList(empty, empty, empty, np.zeros(0, dtype=np.int64), empty, np.zeros(0, dtype=np.int64))
        return Analysis(audio, f0, dsp.FrameTrack(empty, config.frame_len, config.hop), empty, empty, periods,
                        np.zeros(0, dtype=np.int64), [], frame_n, hop_n)
    frames = dsp.frame_signal(audio, config.frame_len, config.hop)
    f0 = dsp.estimate_f0(audio, config.f0_min, config.f0_max, config.frame_len, config.hop)
    loud = dsp.loudness_track(audio, config.frame_len, config.hop)
    sr = audio.sample_rate
    hnr = np.full(len(f0), np.nan)
    for t in np.flatnonzero(f0.voiced):
        hnr[t] = dsp.hnr(frames[t], f0.f0_hz[t], sr)
    if sr >= 10000:
        alpha = np.array([dsp.alpha_ratio(fr, sr) for fr in frames])
    else:
        alpha = np.zeros(len(f0))
    periods = dsp.extract_periods(audio, f0)
    segments = dsp.segment_voicing(f0, loud, config.pause_db_threshold, config.min_pause, duration=audio.duration)
    kinds = dsp.frame_kinds(f0, loud, config.pause_db_threshold, config.min_pause)
    return Analysis(audio, f0, loud, hnr, alpha, periods, kinds, segments, frame_n, hop_n)


# ---------------------------------------------------------------------------
# small statistics helpers; empty input gives 0


def _mean(x) -> float:
    return float(np.mean(x)) if len(x) else 0.0


def _std(x) -> float:
    return float(np.std(x)) if len(x) else 0.0


def _max(x) -> float:
    return float(np.max(x)) if len(x) else 0.0


def _range(x) -> float:
    return float(np.max(x) - np.min(x)) if len(x) else 0.0


def _slope(t, y) -> float:
    """Least-squares slope of ``y`` against ``t``."""
    if len(y) < 2:
        return 0.0
    t = np.asarray(t, dtype=np.float64)
    tc = t - t.mean()
    den = np.dot(tc, tc)
    return float(np.dot(tc, y) / den) if den > 0 else 0.0


def _semitones(f0_hz) -> np.ndarray:
    return 12.0 * np.log2(np.asarray(f0_hz) / SEMITONE_REF_HZ)


def _runs_of(kinds, code) -> list[int]:
    return [b - a for a, b in dsp.boolean_runs(np.asarray(kinds) == code)]


# ---------------------------------------------------------------------------
# word level


def word_prosody(
    audio: dsp.AudioBuffer,
    span: WordAlignment,
    analysis: Analysis | None = None,
    prev_end: float = 0.0,
    next_start: float | None = None,
    config: FeatureConfig = FeatureConfig(),
) -> np.ndarray:
    """22 prosodic descriptors of one aligned word (layout: ``WORD_PROSODY_FIELDS``).

    ``prev_end``/``next_start`` bound the surrounding silence; they default
    to the start and end of the audio.
    """
    duration = audio.duration
    if span.start < -1e-9 or span.end > duration + 1e-9 or not span.end > span.start:
        raise ValueError(f"word {span.token!r} [{span.start}, {span.end}] lies outside audio of {duration:.3f} s")
    if analysis is None:
        analysis = analyze(audio, config)
    if next_start is None:
        next_start = duration
    out = np.zeros(PROSODY_DIM)
    word_dur = span.end - span.start
    if word_dur < analysis.f0.frame_len:
        warnings.warn(f"word {span.token!r} spans {word_dur:.4f} s, shorter than one frame", ShortSpanWarning, stacklevel=2)
        return out
    sr = audio.sample_rate
    s0 = int(round(span.start * sr))
    s1 = int(round(span.end * sr))
    sl = analysis.frame_slice(s0, s1)
    hop = analysis.hop
    loud = analysis.loudness.values[sl]
    local_t = np.arange(len(loud)) * hop
    f0 = analysis.f0.f0_hz[sl]
    voiced = f0 > 0
    kinds = analysis.kinds[sl]

    per = analysis.periods
    rel = per.onset_index - s0
    in_word = (rel + per.onset_frac >= 0) & ((per.onset_index - s1) + per.onset_frac < 0)
    periods = per.periods[in_word]
    amps = per.amplitudes[in_word]

    hnr = analysis.hnr[sl][voiced]
    st = _semitones(f0[voiced])
    out[0] = _mean(loud)
    out[1] = _std(loud)
    out[2] = _max(loud)
    out[3] = _slope(local_t, loud)
    out[4] = dsp.jitter_local(periods)
    out[5] = dsp.jitter_ppq5(periods)
    out[6] = dsp.shimmer_local(amps)
    out[7] = dsp.shimmer_db(amps)
    out[8] = _mean(analysis.alpha[sl])
    out[9] = _mean(hnr)
    out[10] = _std(hnr)
    out[11] = _mean(st)
    out[12] = _std(st)
    out[13] = _range(st)
    out[14] = _slope(local_t[voiced], st)
    out[15] = float(voiced.mean()) if len(voiced) else 0.0
    voiced_runs = _runs_of(kinds, 1)
    unvoiced_runs = [b - a for a, b in dsp.boolean_runs(kinds != 1)]
    out[16] = len(voiced_runs)
    out[17] = _mean(voiced_runs) * hop
    out[18] = _mean(unvoiced_runs) * hop
    out[19] = word_dur
    out[20] = max(span.start - prev_end, 0.0)
    out[21] = max(next_start - span.end, 0.0)
    return out


def word_syntax(token: str, sidecar=None) -> np.ndarray:
    """20-dim syntax vector: a sidecar vector verbatim, or the built-in tagger's output.

    The fallback is a 17-way universal POS one-hot (lexicon plus suffix
    rules) followed by a 3-way grammatical-person one-hot for pronouns.
    """
    if sidecar is not None:
        vec = np.asarray(sidecar, dtype=np.float64)
        if vec.shape != (SYNTAX_DIM,):
            raise ValueError(f"syntax sidecar vector for {token!r} has shape {vec.shape}, expected ({SYNTAX_DIM},)")
        return vec.copy()
    if not token or not token.strip():
        raise ValueError("empty token")
    out = np.zeros(SYNTAX_DIM)
    pos = tag_pos(token)
    out[UPOS.index(pos)] = 1.0
    if pos == "PRON":
        word = _normalize_token(token)
        for person, words in PERSON.items():
            if word in words:
                out[len(UPOS) + person - 1] = 1.0
                break
    return out


_PUNCT = re.compile(r"^[^\w]+$")
_STRIP = re.compile(r"^[^\w']+|[^\w']+$")


def _normalize_token(token: str) -> str:
    return _STRIP.sub("", token.strip()).lower().replace("’", "'")


def tag_pos(token: str) -> str:
    """Coarse universal POS tag from a closed-class lexicon and suffix rules."""
    raw = token.strip()
    if _PUNCT.match(raw):
        return "SYM" if any(ch in "$%&+<=>@#^~|*" for ch in raw) else "PUNCT"
    word = _normalize_token(raw)
    if re.fullmatch(r"[\d.,]+", word):
        return "NUM"
    for pos in POS_PRIORITY:
        if word in CLOSED_CLASS[pos]:
            return pos
    if raw[:1].isupper() and len(word) > 1:
        return "PROPN"
    for suffix, pos in SUFFIX_RULES:
        if word.endswith(suffix) and len(word) > len(suffix) + 2:
            return pos
    if word.isalpha():
        return "NOUN"
    return "X"


# ---------------------------------------------------------------------------
# utterance level


def utterance_rhythm(
    audio: dsp.AudioBuffer,
    alignments,
    analysis: Analysis | None = None,
    config: FeatureConfig = FeatureConfig(),
) -> np.ndarray:
    """34 rhythm descriptors of the whole utterance (layout: ``UTTERANCE_RHYTHM_FIELDS``)."""
    if len(audio) == 0:
        raise ValueError("empty audio")
    if analysis is None:
        analysis = analyze(audio, config)
    out = np.zeros(RHYTHM_DIM)
    duration = audio.duration
    hop = analysis.hop
    loud = analysis.loudness.values
    f0 = analysis.f0.f0_hz
    voiced = f0 > 0
    t = np.arange(len(f0)) * hop
    st = _semitones(f0[voiced])
    hnr = analysis.hnr[voiced]

    per = analysis.periods
    jit, shim = [], []
    for r in np.unique(per.chain):
        sel = per.chain == r
        if sel.sum() >= 2:
            jit.append(dsp.jitter_local(per.periods[sel]))
            shim.append(dsp.shimmer_local(per.amplitudes[sel]))

    segs = analysis.segments
    vdur = [s.duration for s in segs if s.kind == "voiced"]
    udur = [s.duration for s in segs if s.kind == "unvoiced"]
    pdur = [s.duration for s in segs if s.kind == "pause"]
    n_words = len(alignments)

    out[0] = _mean(loud)
    out[1] = _std(loud)
    out[2] = _max(loud)
    out[3] = _range(loud)
    out[4] = _slope(t, loud)
    out[5] = _mean(jit)
    out[6] = _std(jit)
    out[7] = _mean(shim)
    out[8] = _std(shim)
    out[9] = _mean(hnr)
    out[10] = _std(hnr)
    out[11] = _mean(st)
    out[12] = _std(st)
    out[13] = _range(st)
    out[14] = _slope(t[voiced], st)
    if st.size:
        out[15:18] = np.quantile(st, [0.2, 0.5, 0.8])
    out[18] = float(voiced.mean()) if len(voiced) else 0.0
    out[19] = len(vdur)
    out[20] = len(vdur) / duration
    out[21] = _mean(vdur)
    out[22] = _std(vdur)
    out[23] = len(udur)
    out[24] = _mean(udur)
    out[25] = _std(udur)
    out[26] = len(pdur)
    out[27] = len(pdur) / duration
    out[28] = _mean(pdur)
    out[29] = _std(pdur)
    out[30] = sum(pdur) / duration
    out[31] = n_words / duration
    speaking = duration - sum(pdur)
    out[32] = n_words / speaking if speaking > 0 else 0.0
    out[33] = duration
    return out


_WORD = re.compile(r"[a-z]+(?:'[a-z]+)?")


def tokenize(text: str) -> list[str]:
    return _WORD.findall(text.lower().replace("’", "'"))


def utterance_sentiment(
    transcript: str,
    sidecar=None,
    lexicons: dict | None = None,
    dim: int = SENTIMENT_DIM,
) -> np.ndarray:
    """Sentiment vector of length ``dim``: a sidecar vector verbatim, or lexicon hit rates.

    The fallback emits, per lexicon, the fraction of tokens in the list, the
    fraction of those hits that follow a negator within three tokens, and the
    fraction of un-negated hits. Zero-padded or truncated to ``dim``.
    """
    if dim <= 0:
        raise ValueError("sentiment dimension must be positive")
    if sidecar is not None:
        vec = np.asarray(sidecar, dtype=np.float64)
        if vec.shape != (dim,):
            raise ValueError(f"sentiment sidecar has shape {vec.shape}, expected ({dim},)")
        return vec.copy()
    lexicons = SENTIMENT_LEXICONS if lexicons is None else {k: frozenset(v) for k, v in lexicons.items()}
    tokens = tokenize(transcript)
    n = len(tokens)
    negated = np.zeros(n, dtype=bool)
    for i, tok in enumerate(tokens):
        if tok in NEGATORS or tok.endswith("n't"):
            negated[i + 1 : i + 4] = True
    feats = []
    for words in lexicons.values():
        hits = np.array([tok in words for tok in tokens], dtype=bool)
        n_hits = int(hits.sum())
        n_neg = int((hits & negated).sum())
        feats.append(n_hits / n if n else 0.0)
        feats.append(n_neg / n_hits if n_hits else 0.0)
        feats.append((n_hits - n_neg) / n if n else 0.0)
    out = np.zeros(dim)
    k = min(dim, len(feats))
    out[:k] = feats[:k]
    return out


# ---------------------------------------------------------------------------
# assembly


def build_bundle(sample: Sample, config: FeatureConfig = FeatureConfig(), audio: dsp.AudioBuffer | None = None) -> FeatureBundle:
    """All feature levels for one sample; errors are re-raised as ``FeatureError`` naming the sample."""
    try:
        if audio is None:
            audio = dsp.read_wav(sample.wav_path)
        analysis = analyze(audio, config)
        syntax_rows = config.syntax_sidecar.get(sample.id)
        if syntax_rows is not None and len(syntax_rows) != len(sample.words):
            raise ValueError(f"syntax sidecar has {len(syntax_rows)} rows for {len(sample.words)} words")
        rows = []
        notes = []
        words = sample.words
        for i, w in enumerate(words):
            prev_end = words[i - 1].end if i else 0.0
            next_start = words[i + 1].start if i + 1 < len(words) else audio.duration
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always", ShortSpanWarning)
                pros = word_prosody(audio, w, analysis, prev_end, next_start, config)
            notes.extend(str(c.message) for c in caught if issubclass(c.category, ShortSpanWarning))
            syn = word_syntax(w.token, None if syntax_rows is None else syntax_rows[i])
            rows.append(np.concatenate([syn, pros]))
        word_seq = np.array(rows).reshape(len(rows), WORD_DIM)
        sentiment = utterance_sentiment(
            sample.transcript, config.sentiment_sidecar.get(sample.id), config.lexicons, config.sentiment_dim
        )
        rhythm = utterance_rhythm(audio, words, analysis, config)
        embeddings = {}
        if config.load_embeddings:
            for name, path in sample.embedding_paths().items():
                if not path.exists():
                    raise FileNotFoundError(f"embedding {name!r} not found at {path}")
                embeddings[name] = read_matrix(path).astype(np.float64)
    except FeatureError:
        raise
    except (OSError, ValueError) as exc:
        raise FeatureError(f"{sample.id}: {exc}") from exc
    bundle = FeatureBundle(word_seq, np.concatenate([sentiment, rhythm]), embeddings, notes)
    if not np.all(np.isfinite(bundle.word_seq)) or not np.all(np.isfinite(bundle.utterance)):
        raise FeatureError(f"{sample.id}: non-finite feature values")
    return bundle
