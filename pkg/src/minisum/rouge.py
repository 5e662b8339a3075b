"""ROUGE-1/2/L scoring with the two summary-evaluation protocols.

Word tokenization is a fixed rule (lowercase, punctuation split off);
bit-compatibility with the official Perl script is a non-goal.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction


class EmptyCorpus(ValueError):
    pass


@dataclass
class RougeScore:
    precision: float
    recall: float
    f1: float


class EvalProtocol(Enum):
    FULL_LENGTH_F1 = "f1"
    LIMITED_LENGTH_RECALL = "limited-recall"


_WORD = re.compile(r"\w+|[^\w\s]")


def tokenize_words(text: str) -> list[str]:
    """Lowercase and split into words, punctuation as separate tokens."""
    return _WORD.findall(text.lower())


def _score(match: int, n_cand: int, n_ref: int) -> RougeScore:
    # Exact rational arithmetic so hand-derived fixtures match to 1e-12.
    p = Fraction(match, n_cand) if n_cand else Fraction(0)
    r = Fraction(match, n_ref) if n_ref else Fraction(0)
    f = 2 * p * r / (p + r) if p + r > 0 else Fraction(0)
    return RougeScore(float(p), float(r), float(f))


def _ngrams(words: list[str], n: int) -> Counter:
    return Counter(tuple(words[i:i + n]) for i in range(len(words) - n + 1))


def rouge_n(candidate: list[str], reference: list[str], n: int) -> RougeScore:
    """Clipped n-gram overlap precision/recall/F1."""
    if n < 1:
        raise ValueError("n must be >= 1")
    cand = _ngrams(candidate, n)
    ref = _ngrams(reference, n)
    match = sum((cand & ref).values())
    return _score(match, sum(cand.values()), sum(ref.values()))


def lcs_length(a: list[str], b: list[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b, 1):
            cur[j] = prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def rouge_l(candidate: list[str], reference: list[str]) -> RougeScore:
    """Longest-common-subsequence precision/recall/F1."""
    return _score(lcs_length(candidate, reference), len(candidate), len(reference))


def score_pair(candidate: str, reference: str, variant: str,
               protocol: EvalProtocol = EvalProtocol.FULL_LENGTH_F1) -> RougeScore:
    cand = tokenize_words(candidate)
    ref = tokenize_words(reference)
    if protocol is EvalProtocol.LIMITED_LENGTH_RECALL:
        cand = cand[:len(ref)]
    if variant == "rl":
        return rouge_l(cand, ref)
    if variant in ("r1", "r2"):
        return rouge_n(cand, ref, int(variant[1]))
    raise ValueError(f"unknown ROUGE variant: {variant!r}")


def score_corpus(pairs: list[tuple[str, str]], variant: str,
                 protocol: EvalProtocol = EvalProtocol.FULL_LENGTH_F1) -> RougeScore:
    """Macro-average over pairs; the headline number depends on protocol.

    Full-length F1 averages per-pair F1 scores; limited-length recall
    truncates each candidate to its reference's word count and averages
    recall.
    """
    if not pairs:
        raise EmptyCorpus("no (candidate, reference) pairs to score")
    scores = [score_pair(c, r, variant, protocol) for c, r in pairs]
    n = len(scores)
    return RougeScore(
        precision=sum(s.precision for s in scores) / n,
        recall=sum(s.recall for s in scores) / n,
        f1=sum(s.f1 for s in scores) / n,
    )


def headline(score: RougeScore, protocol: EvalProtocol) -> float:
    """The single number a protocol reports: F1 or recall."""
    return score.f1 if protocol is EvalProtocol.FULL_LENGTH_F1 else score.recall
