"""Rule-based Myanmar syllable segmentation.

Every scalar is mapped to a :class:`CharClass`; a syllable boundary is placed
before each syllable-initial scalar.  Whitespace separates but is never part
of a syllable.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass


class CharClass(enum.Enum):
    CONSONANT = "Consonant"
    MEDIAL = "Medial"
    DEPENDENT_VOWEL = "DependentVowel"
    ASAT = "Asat"
    VIRAMA = "Virama"
    INDEPENDENT_VOWEL_OR_SIGN = "IndependentVowelOrSign"
    DIGIT = "Digit"
    PUNCTUATION = "Punctuation"
    VARIOUS_SIGN = "VariousSign"
    NON_MYANMAR = "NonMyanmar"
    WHITESPACE = "Whitespace"


C = CharClass

ASAT = "\u103a"
VIRAMA = "\u1039"
DOT_BELOW = "\u1037"

# Classes that open a new syllable.
_INITIAL = frozenset({C.CONSONANT, C.INDEPENDENT_VOWEL_OR_SIGN, C.DIGIT, C.PUNCTUATION})
# Classes that can only continue a syllable.
_MARKS = frozenset({C.MEDIAL, C.DEPENDENT_VOWEL, C.ASAT, C.VIRAMA, C.VARIOUS_SIGN})
_MYANMAR_LETTERISH = _MARKS | {C.CONSONANT, C.INDEPENDENT_VOWEL_OR_SIGN}

_EXTRA_SPACE = frozenset({"\u00a0", "\u200b", "\ufeff"})


def _build_table() -> dict[int, CharClass]:
    table: dict[int, CharClass] = {}
    for cp in range(0x1000, 0x10A0):
        table[cp] = C.INDEPENDENT_VOWEL_OR_SIGN
    ranges = [
        (0x1000, 0x1021, C.CONSONANT),
        (0x103F, 0x103F, C.CONSONANT),
        (0x103B, 0x103E, C.MEDIAL),
        (0x102B, 0x1032, C.DEPENDENT_VOWEL),
        (0x103A, 0x103A, C.ASAT),
        (0x1039, 0x1039, C.VIRAMA),
        (0x1036, 0x1038, C.VARIOUS_SIGN),
        (0x1023, 0x102A, C.INDEPENDENT_VOWEL_OR_SIGN),
        (0x104C, 0x104F, C.INDEPENDENT_VOWEL_OR_SIGN),
        (0x1040, 0x1049, C.DIGIT),
        (0x104A, 0x104B, C.PUNCTUATION),
    ]
    for lo, hi, cls in ranges:
        for cp in range(lo, hi + 1):
            table[cp] = cls
    return table


_TABLE = _build_table()


def classify_char(c: str) -> CharClass:
    """Return the segmentation class of a single Unicode scalar."""
    if len(c) != 1:
        raise ValueError(f"expected a single scalar, got {c!r}")
    cls = _TABLE.get(ord(c))
    if cls is not None:
        return cls
    if c.isspace() or c in _EXTRA_SPACE:
        return C.WHITESPACE
    return C.NON_MYANMAR


@dataclass(frozen=True)
class Violation:
    offset: int
    char: str
    message: str


class IllFormedTextError(ValueError):
    def __init__(self, violations: list[Violation]):
        self.violations = violations
        first = violations[0]
        super().__init__(
            f"{len(violations)} ill-formed sequence(s); first at offset "
            f"{first.offset} (U+{ord(first.char):04X}): {first.message}"
        )


def _is_final_consonant(text: str, i: int, classes: list[CharClass]) -> bool:
    # consonant killed by a following asat: C [medial|dot-below]? asat
    j = i + 1
    if j < len(text) and (classes[j] is C.MEDIAL or text[j] == DOT_BELOW):
        j += 1
    if j < len(text) and text[j] == ASAT:
        return True
    # upper half of a stacked pair belongs to the preceding syllable
    return i + 1 < len(text) and text[i + 1] == VIRAMA


def _breaks_before(text: str, i: int, classes: list[CharClass]) -> bool:
    cls = classes[i]
    prev = classes[i - 1]
    if cls is C.NON_MYANMAR:
        return prev is not C.NON_MYANMAR
    if prev is C.NON_MYANMAR:
        return True
    if cls not in _INITIAL:
        return False
    if text[i - 1] == VIRAMA:
        return False
    if cls is C.CONSONANT and _is_final_consonant(text, i, classes):
        return False
    return True


def find_violations(text: str) -> list[Violation]:
    """List combining marks that have no Myanmar base to attach to."""
    out = []
    prev = C.WHITESPACE
    for i, ch in enumerate(text):
        cls = classify_char(ch)
        if cls in _MARKS and prev not in _MYANMAR_LETTERISH:
            out.append(Violation(i, ch, f"{cls.value} without a preceding base"))
        prev = cls
    return out


def segment(text: str, strict: bool = False) -> list[str]:
    """Split ``text`` into syllables.

    Whitespace runs are dropped; concatenating the result reproduces the
    input with whitespace removed.  Ill-formed sequences are attached to the
    preceding syllable (or start one after a separator) unless ``strict`` is
    set, in which case :class:`IllFormedTextError` is raised.

    >>> segment("နိုင်ငံ")
    ['နိုင်', 'ငံ']
    """
    if strict:
        violations = find_violations(text)
        if violations:
            raise IllFormedTextError(violations)
    classes = [classify_char(ch) for ch in text]
    syllables: list[str] = []
    start = None
    for i, cls in enumerate(classes):
        if cls is C.WHITESPACE:
            if start is not None:
                syllables.append(text[start:i])
                start = None
            continue
        if start is None:
            start = i
        elif _breaks_before(text, i, classes):
            syllables.append(text[start:i])
            start = i
    if start is not None:
        syllables.append(text[start:])
    return syllables


def chars_of(syllable: str) -> list[str]:
    return list(syllable)
