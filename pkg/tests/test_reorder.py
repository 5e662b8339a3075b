import itertools

import pytest

from minisum import reorder as ro
from minisum.synthetic import SyntheticSpec, gen_synthetic
from minisum.text_core import SentenceSplit, segment_sentences

DOC = SentenceSplit([
    "alice sees the red tree near the park.",
    "ben takes the old lamp near the market.",
    "carla paints the tiny boat near the harbor.",
    "dev drops the green stone near the garden.",
    "elena finds the heavy book near the cellar.",
])


class TestAlign:
    def test_verbatim_copy(self):
        summary = SentenceSplit([DOC.sentences[4]])
        amap = ro.align_summary_sentences(DOC, summary)
        assert amap.assignments == [4]
        assert amap.scores == [1.0]

    def test_all_zero_scores_tie_break(self):
        summary = SentenceSplit(["zz qq ww ee rr tt."])
        amap = ro.align_summary_sentences(DOC, summary)
        assert amap.assignments == [0]

    def test_equal_nonzero_tie_break(self):
        doc = SentenceSplit(["x y z one.", "x y z two."])
        summary = SentenceSplit(["x y z three."])
        amap = ro.align_summary_sentences(doc, summary)
        assert amap.assignments == [0]

    def test_empty_side(self):
        with pytest.raises(ro.EmptySide):
            ro.align_summary_sentences(SentenceSplit([]), DOC)
        with pytest.raises(ro.EmptySide):
            ro.align_summary_sentences(DOC, SentenceSplit([]))

    def test_permutation_covariant(self):
        summary = SentenceSplit([DOC.sentences[1], DOC.sentences[3]])
        amap = ro.align_summary_sentences(DOC, summary)
        assert amap.assignments == [1, 3]
        reversed_doc = SentenceSplit(list(reversed(DOC.sentences)))
        amap2 = ro.align_summary_sentences(reversed_doc, summary)
        assert amap2.assignments == [3, 1]


class TestDetect:
    def test_inversion(self):
        assert ro.detect_reordering(ro.AlignmentMap([3, 1], [1, 1])) is True

    def test_non_decreasing_with_ties(self):
        assert ro.detect_reordering(ro.AlignmentMap([1, 2, 2, 5], [1] * 4)) is False

    def test_single_sentence(self):
        assert ro.detect_reordering(ro.AlignmentMap([7], [1.0])) is False

    def test_matches_pairwise_brute_force(self):
        for n in range(1, 5):
            for assignment in itertools.product(range(3), repeat=n):
                brute = any(assignment[i] > assignment[j]
                            for i in range(n) for j in range(i + 1, n))
                got = ro.detect_reordering(ro.AlignmentMap(list(assignment), [0.0] * n))
                assert got == brute


class TestCorpusStat:
    def _pair(self, idx_first, idx_second):
        return DOC, SentenceSplit([DOC.sentences[idx_first], DOC.sentences[idx_second]])

    def test_half_reordered(self):
        pairs = [self._pair(0, 2), self._pair(1, 4), self._pair(3, 1), self._pair(4, 0)]
        report = ro.corpus_reorder_stat(pairs)
        assert report.n_pairs == 4
        assert report.n_reordered == 2
        assert report.fraction == 0.5

    def test_lead3_summaries_never_reordered(self):
        pairs = [(DOC, segment_sentences(ro.lead3(DOC)))]
        assert ro.corpus_reorder_stat(pairs).fraction == 0.0

    def test_reversed_documents_always_reordered(self):
        pairs = [(DOC, SentenceSplit(list(reversed(DOC.sentences))))]
        assert ro.corpus_reorder_stat(pairs).fraction == 1.0

    def test_empty(self):
        with pytest.raises(ro.EmptyCorpus):
            ro.corpus_reorder_stat([])

    def test_planted_fractions_exact(self):
        for fraction in (0.0, 0.25, 0.5, 1.0):
            _, pairs = gen_synthetic(
                SyntheticSpec(n_docs=40, reorder_fraction=fraction), seed=11)
            splits = [(segment_sentences(p["document"]),
                       segment_sentences(p["summary"])) for p in pairs]
            report = ro.corpus_reorder_stat(splits)
            assert report.fraction == fraction


class TestLead3:
    def test_five_sentences(self):
        assert ro.lead3(DOC) == " ".join(DOC.sentences[:3])

    def test_two_sentences(self):
        doc = SentenceSplit(DOC.sentences[:2])
        assert ro.lead3(doc) == " ".join(DOC.sentences[:2])

    def test_exactly_three(self):
        doc = SentenceSplit(DOC.sentences[:3])
        assert ro.lead3(doc) == " ".join(DOC.sentences[:3])

    def test_empty(self):
        with pytest.raises(ro.EmptySide):
            ro.lead3(SentenceSplit([]))
