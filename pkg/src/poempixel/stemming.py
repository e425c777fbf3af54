"""Deterministic table-driven English suffix stripper.

Used only by the METEOR stem-match stage. This is intentionally not a full
Porter stemmer: one ordered rule table, longest suffix first, a single
replacement per word, then consonant undoubling after bare -ing/-ed
removal. The behavior is frozen by golden tests; changing the table changes
metric scores.
"""

from __future__ import annotations

# (suffix, replacement); first match wins. A rule applies only when at
# least _MIN_STEM characters remain before the suffix.
_RULES: tuple[tuple[str, str], ...] = (
    ("ational", "ate"),
    ("ization", "ize"),
    ("fulness", "ful"),
    ("ousness", "ous"),
    ("iveness", "ive"),
    ("tional", "tion"),
    ("ingly", ""),
    ("ously", "ous"),
    ("fully", "ful"),
    ("ments", "ment"),
    ("edly", ""),
    ("sses", "ss"),
    ("ies", "y"),
    ("ied", "y"),
    ("ing", ""),
    ("est", ""),
    ("ers", "er"),
    ("ed", ""),
    ("ly", ""),
    ("es", ""),
    ("s", ""),
)

_MIN_STEM = 2
_DOUBLABLE = set("bdfglmnprt")


def stem(word: str) -> str:
    """Stem one lowercase token. Tokens shorter than 4 characters pass through."""
    if len(word) < 4:
        return word
    for suffix, replacement in _RULES:
        if not word.endswith(suffix):
            continue
        stem_len = len(word) - len(suffix)
        if stem_len < _MIN_STEM:
            continue
        if suffix == "s" and word.endswith(("ss", "us")):
            continue
        result = word[:stem_len] + replacement
        if suffix in ("ing", "ed") and len(result) >= 3:
            if result[-1] == result[-2] and result[-1] in _DOUBLABLE:
                result = result[:-1]
        return result
    return word
