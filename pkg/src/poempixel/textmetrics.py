"""Self-contained ROUGE-1/2/L, BLEU-1..4, and METEOR.

All metrics are pure functions of token sequences produced by
:func:`tokenize` (lowercase, whitespace split, leading/trailing punctuation
stripped). Parameter choices, frozen here and exercised by golden tests:

- ROUGE: clipped n-gram counts, F1 = harmonic mean of precision/recall.
- BLEU: sentence level, modified n-gram precision with clipping, brevity
  penalty exp(1 - r/c) for c < r (r = closest reference length), optional
  epsilon smoothing that replaces zero precisions with 1e-9 (default on:
  short texts rarely share 4-grams).
- METEOR: exact then stem matching (no synonym stage), alpha=0.9, beta=3,
  gamma=0.5.
"""

from __future__ import annotations

import math
import unicodedata
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import ValidationError
from .stemming import stem

BLEU_EPSILON = 1e-9
METEOR_ALPHA = 0.9
METEOR_BETA = 3.0
METEOR_GAMMA = 0.5


@dataclass(frozen=True)
class TokenSequence:
    tokens: tuple[str, ...]
    source_text: str = ""

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)


@dataclass(frozen=True)
class MetricTriple:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class BleuResult:
    score: float
    per_n_precision: tuple[float, ...]
    brevity_penalty: float


def _strip_punct(token: str) -> str:
    start, end = 0, len(token)
    while start < end and unicodedata.category(token[start]).startswith("P"):
        start += 1
    while end > start and unicodedata.category(token[end - 1]).startswith("P"):
        end -= 1
    return token[start:end]


def tokenize(text: str) -> TokenSequence:
    """Lowercase, split on whitespace, strip edge punctuation, drop empties."""
    tokens = []
    for raw in text.split():
        token = _strip_punct(raw.lower())
        if token:
            tokens.append(token)
    return TokenSequence(tokens=tuple(tokens), source_text=text)


def _tokens(seq: TokenSequence | Sequence[str]) -> list[str]:
    if isinstance(seq, TokenSequence):
        return list(seq.tokens)
    return [str(t) for t in seq]


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def ngrams(tokens: Sequence[str], n: int) -> list[tuple[str, ...]]:
    return [tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)]


def rouge_n(
    candidate: TokenSequence | Sequence[str],
    reference: TokenSequence | Sequence[str],
    n: int,
) -> MetricTriple:
    """Clipped n-gram overlap; zero denominators yield 0."""
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    cand = ngrams(_tokens(candidate), n)
    ref = ngrams(_tokens(reference), n)
    overlap = sum((Counter(cand) & Counter(ref)).values())
    precision = overlap / len(cand) if cand else 0.0
    recall = overlap / len(ref) if ref else 0.0
    return MetricTriple(precision, recall, _f1(precision, recall))


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for i in range(1, len(a) + 1):
        cur = [0] * (len(b) + 1)
        ai = a[i - 1]
        for j in range(1, len(b) + 1):
            if ai == b[j - 1]:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = max(prev[j], cur[j - 1])
        prev = cur
    return prev[len(b)]


def rouge_l(
    candidate: TokenSequence | Sequence[str],
    reference: TokenSequence | Sequence[str],
) -> MetricTriple:
    """Longest-common-subsequence overlap via dynamic programming."""
    cand = _tokens(candidate)
    ref = _tokens(reference)
    lcs = _lcs_length(cand, ref)
    precision = lcs / len(cand) if cand else 0.0
    recall = lcs / len(ref) if ref else 0.0
    return MetricTriple(precision, recall, _f1(precision, recall))


def bleu(
    candidate: TokenSequence | Sequence[str],
    references: Iterable[TokenSequence | Sequence[str]],
    max_n: int = 4,
    smoothing: str = "epsilon",
) -> BleuResult:
    """Sentence-level BLEU with multi-reference clipping.

    An empty candidate short-circuits to score 0 with a neutral brevity
    penalty of 1.
    """
    if not 1 <= max_n <= 4:
        raise ValidationError(f"max_n must be in 1..4, got {max_n}")
    if smoothing not in ("none", "epsilon"):
        raise ValidationError(f"unknown smoothing {smoothing!r}")
    refs = [_tokens(r) for r in references]
    if not refs:
        raise ValidationError("bleu requires at least one reference")
    cand = _tokens(candidate)
    if not cand:
        return BleuResult(0.0, (0.0,) * max_n, 1.0)

    precisions = []
    for n in range(1, max_n + 1):
        cand_counts = Counter(ngrams(cand, n))
        total = sum(cand_counts.values())
        if total == 0:
            precisions.append(0.0)
            continue
        clipped = 0
        for gram, count in cand_counts.items():
            clipped += min(count, max(Counter(ngrams(r, n))[gram] for r in refs))
        precisions.append(clipped / total)

    c = len(cand)
    # effective reference length: closest to c, ties to the shorter
    r = min((abs(len(ref) - c), len(ref)) for ref in refs)[1]
    brevity_penalty = math.exp(1 - r / c) if c < r else 1.0

    smoothed = [
        BLEU_EPSILON if (p == 0.0 and smoothing == "epsilon") else p for p in precisions
    ]
    if any(p == 0.0 for p in smoothed):
        score = 0.0
    else:
        score = brevity_penalty * math.exp(sum(math.log(p) for p in smoothed) / max_n)
    return BleuResult(score, tuple(precisions), brevity_penalty)


def _align(cand: list[str], ref: list[str]) -> list[tuple[int, int]]:
    """Greedy two-stage unigram alignment: exact matches, then stem matches.

    Each stage scans the candidate left to right and takes the first unused
    reference position.
    """
    pairs: list[tuple[int, int]] = []
    used_c: set[int] = set()
    used_r: set[int] = set()
    for ci, token in enumerate(cand):
        for ri, rtoken in enumerate(ref):
            if ri in used_r:
                continue
            if token == rtoken:
                pairs.append((ci, ri))
                used_c.add(ci)
                used_r.add(ri)
                break
    cand_stems = [stem(t) for t in cand]
    ref_stems = [stem(t) for t in ref]
    for ci, ctoken in enumerate(cand_stems):
        if ci in used_c:
            continue
        for ri, rtoken in enumerate(ref_stems):
            if ri in used_r:
                continue
            if ctoken == rtoken:
                pairs.append((ci, ri))
                used_c.add(ci)
                used_r.add(ri)
                break
    return sorted(pairs)


def meteor(
    candidate: TokenSequence | Sequence[str],
    reference: TokenSequence | Sequence[str],
) -> float:
    """Alignment-based score: F_mean weighted toward recall, chunk penalty."""
    cand = _tokens(candidate)
    ref = _tokens(reference)
    if not cand or not ref:
        return 0.0
    pairs = _align(cand, ref)
    matches = len(pairs)
    if matches == 0:
        return 0.0
    precision = matches / len(cand)
    recall = matches / len(ref)
    f_mean = precision * recall / (METEOR_ALPHA * precision + (1 - METEOR_ALPHA) * recall)
    chunks = 1
    for (pc, pr), (cc, cr) in zip(pairs, pairs[1:]):
        if cc != pc + 1 or cr != pr + 1:
            chunks += 1
    penalty = METEOR_GAMMA * (chunks / matches) ** METEOR_BETA
    return f_mean * (1 - penalty)
