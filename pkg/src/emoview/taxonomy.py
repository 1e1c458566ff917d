"""The 10-class viewer-emotion taxonomy.

Two orderings exist and must never be confused:

* ``CANONICAL_ORDER`` — the order labels are defined in; ties between
  aggregated scores resolve to the earliest label in this order.
* ``PROMPT_ORDER`` — the alphabetical listing used verbatim in every prompt's
  "Emotion categories:" line.
"""

from __future__ import annotations

from enum import Enum

from .errors import UnknownEmotion


class EmotionLabel(str, Enum):
    ANGRY = "angry"
    FUNNY = "funny"
    FEAR = "fear"
    HAPPY = "happy"
    SAD = "sad"
    SURPRISED = "surprised"
    NEUTRAL = "neutral"
    EXCITED = "excited"
    TOUCHED = "touched"
    TENSE = "tense"

    def __str__(self) -> str:  # serialization is the lowercase word
        return self.value


CANONICAL_ORDER: tuple[EmotionLabel, ...] = tuple(EmotionLabel)
CANONICAL_NAMES: tuple[str, ...] = tuple(label.value for label in CANONICAL_ORDER)
_CANONICAL_INDEX: dict[EmotionLabel, int] = {l: i for i, l in enumerate(CANONICAL_ORDER)}

PROMPT_ORDER: tuple[str, ...] = tuple(sorted(CANONICAL_NAMES))
PROMPT_CATEGORY_LINE: str = ", ".join(PROMPT_ORDER)

NUM_CLASSES: int = len(CANONICAL_ORDER)


def parse_label(name: object) -> EmotionLabel:
    """Parse a serialized label, rejecting anything outside the taxonomy."""
    if isinstance(name, EmotionLabel):
        return name
    try:
        return EmotionLabel(name)
    except ValueError:
        raise UnknownEmotion(name) from None


def canonical_index(label: EmotionLabel) -> int:
    return _CANONICAL_INDEX[label]


def canonical_first(labels) -> EmotionLabel:
    """Return the member of ``labels`` that comes first in canonical order."""
    return min(labels, key=canonical_index)
