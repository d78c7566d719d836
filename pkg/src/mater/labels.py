"""Emotion category and attribute vocabularies."""

CATEGORIES = ("A", "C", "D", "F", "H", "N", "S", "U")
CATEGORY_NAMES = {
    "A": "Angry",
    "C": "Contempt",
    "D": "Disgust",
    "F": "Fear",
    "H": "Happy",
    "N": "Neutral",
    "S": "Sad",
    "U": "Surprise",
}
# alternative category order for callers that need ranks or ties resolved in it
ALTERNATE_ORDER = ("A", "C", "D", "S", "H", "U", "F", "N")

ATTRIBUTES = ("valence", "arousal", "dominance")
ATTRIBUTE_RANGE = (1.0, 7.0)


def category_index(label: str, categories=CATEGORIES) -> int:
    try:
        return categories.index(label)
    except ValueError:
        raise ValueError(f"unknown emotion category {label!r}; expected one of {list(categories)}") from None
