"""Content-reordering analysis: summary-to-document sentence alignment,
inversion detection, and the Lead3 baseline."""

from __future__ import annotations

from dataclasses import dataclass

from minisum.rouge import rouge_n, tokenize_words
from minisum.text_core import SentenceSplit


class EmptySide(ValueError):
    pass


class EmptyCorpus(ValueError):
    pass


@dataclass
class AlignmentMap:
    assignments: list[int]
    scores: list[float]


@dataclass
class ReorderReport:
    n_pairs: int
    n_reordered: int

    @property
    def fraction(self) -> float:
        return self.n_reordered / self.n_pairs if self.n_pairs else 0.0


def _pair_score(summary_sent: str, doc_sent: str, raw_counts: bool) -> float:
    cand = tokenize_words(summary_sent)
    ref = tokenize_words(doc_sent)
    score = rouge_n(cand, ref, 2)
    if raw_counts:
        # overlapped-bigram count variant, for sensitivity analysis
        return score.recall * max(len(ref) - 1, 0)
    return score.f1


def align_summary_sentences(doc: SentenceSplit, summary: SentenceSplit,
                            raw_counts: bool = False) -> AlignmentMap:
    """Assign each summary sentence its best-matching document sentence.

    Score is ROUGE-2 F1 (or raw overlapped-bigram count when
    raw_counts). Ties break to the smallest document index; assignments
    are independent, so many-to-one is allowed.
    """
    if doc.m == 0 or summary.m == 0:
        raise EmptySide("both document and summary need at least one sentence")
    assignments = []
    scores = []
    for sent in summary.sentences:
        best_i = 0
        best = -1.0
        for i, doc_sent in enumerate(doc.sentences):
            s = _pair_score(sent, doc_sent, raw_counts)
            if s > best:
                best = s
                best_i = i
        assignments.append(best_i)
        scores.append(best)
    return AlignmentMap(assignments, scores)


def detect_reordering(alignment: AlignmentMap) -> bool:
    """True iff the assignment sequence is not non-decreasing."""
    a = alignment.assignments
    if not a:
        raise ValueError("alignment must cover at least one summary sentence")
    return any(a[i] > a[i + 1] for i in range(len(a) - 1))


def corpus_reorder_stat(pairs: list[tuple[SentenceSplit, SentenceSplit]],
                        raw_counts: bool = False) -> ReorderReport:
    """Fraction of (document, summary) pairs showing content reordering."""
    if not pairs:
        raise EmptyCorpus("no pairs to analyze")
    n_reordered = sum(
        detect_reordering(align_summary_sentences(doc, summ, raw_counts))
        for doc, summ in pairs
    )
    return ReorderReport(n_pairs=len(pairs), n_reordered=n_reordered)


def lead3(doc: SentenceSplit) -> str:
    """Baseline summary: the first three sentences, space-joined."""
    if doc.m == 0:
        raise EmptySide("document has no sentences")
    return " ".join(doc.sentences[:3])
