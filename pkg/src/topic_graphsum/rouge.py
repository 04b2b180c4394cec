"""ROUGE-1, ROUGE-2 and ROUGE-L F1 over token sequences.

Multi-sentence texts are scored as one flattened token sequence. No stemming
and no stopword removal is applied, so scores are comparable only with other
scores produced here.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractError


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, overlap: float, cand_total: float, ref_total: float) -> "PRF":
        if cand_total <= 0 or ref_total <= 0:
            return cls(0.0, 0.0, 0.0)
        p = overlap / cand_total
        r = overlap / ref_total
        f = 2.0 * p * r / (p + r) if p + r > 0 else 0.0
        return cls(p, r, f)


@dataclass(frozen=True)
class RougeScore:
    rouge1: PRF
    rouge2: PRF
    rougeL: PRF

    def f1s(self) -> tuple[float, float, float]:
        return self.rouge1.f1, self.rouge2.f1, self.rougeL.f1


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate: Sequence[str], reference: Sequence[str], n: int) -> PRF:
    """Clipped n-gram overlap precision/recall/F1."""
    if n not in (1, 2):
        raise ContractError(f"rouge_n: n must be 1 or 2, got {n}")
    cand = ngrams(candidate, n)
    ref = ngrams(reference, n)
    overlap = sum((cand & ref).values())
    return PRF.from_counts(overlap, sum(cand.values()), sum(ref.values()))


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: Sequence[str], reference: Sequence[str]) -> PRF:
    return PRF.from_counts(lcs_length(candidate, reference), len(candidate), len(reference))


def rouge(candidate: Sequence[str], reference: Sequence[str]) -> RougeScore:
    return RougeScore(
        rouge_n(candidate, reference, 1),
        rouge_n(candidate, reference, 2),
        rouge_l(candidate, reference),
    )


def flatten(sentences: Iterable[Sequence[str]]) -> list[str]:
    return [tok for sent in sentences for tok in sent]


def mean_f1(scores: Sequence[RougeScore]) -> tuple[float, float, float]:
    """Corpus-level mean F1 for (R-1, R-2, R-L); zeros for an empty list."""
    if not scores:
        return 0.0, 0.0, 0.0
    arr = np.array([s.f1s() for s in scores])
    r1, r2, rl = arr.mean(axis=0)
    return float(r1), float(r2), float(rl)
