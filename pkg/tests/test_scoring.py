"""Sum-to-one normalization, alignment, term-weighted value and fusion."""

import math

import numpy as np
import pytest

from oracles import dense_grid_twv, optimal_matching_count
from ppbkws.lattice import Hit, ReferenceOccurrence
from ppbkws.scoring import (
    ScoringConfig,
    align_hits,
    compute_mtwv,
    fuse_lists,
    score_hits,
    sto_normalize,
)

CFG = ScoringConfig(total_speech_seconds=1000.0)


def hit(kwid="K", utt="u", tbeg=0.0, dur=1.0, score=0.0) -> Hit:
    return Hit(kwid, utt, tbeg, dur, score)


def ref(kwid="K", utt="u", tbeg=0.0, dur=1.0) -> ReferenceOccurrence:
    return ReferenceOccurrence(kwid, utt, tbeg, dur)


class TestSto:
    def test_equal_scores_split_evenly(self):
        out = sto_normalize([hit(tbeg=0.0, score=-2.0), hit(tbeg=5.0, score=-2.0)])
        assert [h.score for h in out] == [0.5, 0.5]

    def test_single_hit_gets_one(self):
        out = sto_normalize([hit(score=-17.3)])
        assert out[0].score == 1.0

    def test_hand_values(self):
        out = sto_normalize([hit(tbeg=0.0, score=math.log(0.6)), hit(tbeg=5.0, score=math.log(0.2))])
        assert out[0].score == pytest.approx(0.75, abs=1e-12)
        assert out[1].score == pytest.approx(0.25, abs=1e-12)

    def test_per_keyword_sums_to_one(self, rng):
        hits = [
            hit(kwid=f"K{i % 7}", utt=f"u{i % 3}", tbeg=float(i), score=float(rng.uniform(-30, 0)))
            for i in range(200)
        ]
        out = sto_normalize(hits)
        sums = {}
        for h in out:
            sums[h.kwid] = sums.get(h.kwid, 0.0) + h.score
        for total in sums.values():
            assert total == pytest.approx(1.0, abs=1e-9)

    def test_decisions_untouched(self):
        out = sto_normalize([Hit("K", "u", 0.0, 1.0, -1.0, "NO")])
        assert out[0].decision == "NO"

    def test_gamma_exponent(self):
        out = sto_normalize([hit(tbeg=0.0, score=math.log(0.6)), hit(tbeg=5.0, score=math.log(0.2))], gamma=2.0)
        assert out[0].score == pytest.approx(0.36 / 0.40, abs=1e-12)

    def test_empty_passthrough(self):
        assert sto_normalize([]) == []


class TestAlign:
    def test_exact_cover_is_tp(self):
        a = align_hits([hit()], [ref()], CFG)
        assert len(a.true_positives) == 1
        assert a.false_alarms == [] and a.misses == []

    def test_distant_hit_is_fa_plus_miss(self):
        a = align_hits([hit(tbeg=10.0)], [ref(tbeg=0.0)], CFG)
        assert a.true_positives == []
        assert len(a.false_alarms) == 1 and len(a.misses) == 1

    def test_nearer_hit_wins(self):
        near = hit(tbeg=0.1)
        far = hit(tbeg=0.4)
        a = align_hits([far, near], [ref(tbeg=0.0)], CFG)
        assert a.true_positives == [(near, ref(tbeg=0.0))]
        assert a.false_alarms == [far]

    def test_two_hits_one_ref_agrees_with_optimal(self):
        # the two-candidate case: greedy and exhaustive matching coincide
        near = hit(tbeg=0.1)
        far = hit(tbeg=0.4)
        a = align_hits([far, near], [ref(tbeg=0.0)], CFG)
        want = optimal_matching_count(
            [near.midpoint, far.midpoint], [ref(tbeg=0.0).midpoint], CFG.align_tolerance_seconds
        )
        assert len(a.true_positives) == want == 1

    def test_greedy_is_one_to_one_within_tolerance(self, rng):
        for _ in range(30):
            hits = [hit(tbeg=float(rng.uniform(0, 6))) for _ in range(int(rng.integers(1, 5)))]
            refs = [ref(tbeg=float(rng.uniform(0, 6))) for _ in range(int(rng.integers(1, 5)))]
            a = align_hits(hits, refs, CFG)
            assert len({id(h) for h, _ in a.true_positives}) == len(a.true_positives)
            assert len({id(r) for _, r in a.true_positives}) == len(a.true_positives)
            for h, r in a.true_positives:
                assert abs(h.midpoint - r.midpoint) <= CFG.align_tolerance_seconds
            assert len(a.true_positives) <= optimal_matching_count(
                [h.midpoint for h in hits], [r.midpoint for r in refs], CFG.align_tolerance_seconds
            )
            assert len(a.true_positives) + len(a.false_alarms) == len(hits)
            assert len(a.true_positives) + len(a.misses) == len(refs)

    def test_keywords_do_not_cross_match(self):
        a = align_hits([hit(kwid="A")], [ref(kwid="B")], CFG)
        assert a.true_positives == []


class TestMtwv:
    def test_three_hit_hand_example(self):
        refs = [ref(tbeg=1.0, dur=0.5), ref(tbeg=5.0, dur=0.5)]
        hits = [
            hit(tbeg=1.0, dur=0.5, score=0.9),
            hit(tbeg=5.0, dur=0.5, score=0.4),
            hit(tbeg=9.0, dur=0.5, score=0.6),
        ]
        report = score_hits(hits, refs, CFG)
        assert report.mtwv == 0.5
        assert report.best_threshold == 0.9
        curve = dict(report.curve)
        assert curve[0.9] == 0.5
        assert curve[0.6] == pytest.approx(1 - (0.5 + 999.9 / 998.0))
        assert curve[0.4] == pytest.approx(1 - 999.9 / 998.0)
        assert report.per_keyword["K"] == (0.5, 0.0)

    def test_perfect_system(self):
        refs = [ref(tbeg=float(i) * 3) for i in range(4)]
        hits = [hit(tbeg=float(i) * 3, score=0.25) for i in range(4)]
        assert score_hits(hits, refs, CFG).mtwv == 1.0

    def test_zero_hits_gives_zero(self):
        report = score_hits([], [ref()], CFG)
        assert report.mtwv == 0.0

    def test_no_references_is_an_error(self):
        with pytest.raises(ValueError, match="references"):
            score_hits([hit()], [], CFG)

    def test_keywords_without_refs_ignored_but_reported(self):
        refs = [ref(kwid="A")]
        hits = [hit(kwid="A"), hit(kwid="B", tbeg=7.0)]
        report = score_hits(hits, refs, CFG)
        assert report.ignored_kwids == ("B",)
        assert report.mtwv == 1.0

    def test_monotone_transform_invariance(self, rng):
        refs = [ref(kwid=f"K{i % 4}", tbeg=float(i) * 2) for i in range(10)]
        hits = [
            hit(kwid=f"K{int(rng.integers(0, 5))}", tbeg=float(rng.uniform(0, 22)),
                score=float(rng.uniform(0.01, 1.0)))
            for _ in range(40)
        ]
        base = score_hits(hits, refs, CFG).mtwv
        for transform in (lambda s: s**2, math.sqrt, lambda s: 0.5 * s + 0.1):
            mapped = [Hit(h.kwid, h.utt_id, h.tbeg, h.dur, transform(h.score), h.decision) for h in hits]
            assert score_hits(mapped, refs, CFG).mtwv == base

    def test_sweep_matches_dense_grid(self, rng):
        refs = [ref(kwid=f"K{i % 3}", tbeg=float(i) * 2) for i in range(9)]
        hits = [
            hit(kwid=f"K{int(rng.integers(0, 3))}", tbeg=float(rng.uniform(0, 20)),
                score=float(rng.uniform(0.01, 1.0)))
            for _ in range(30)
        ]
        aligned = align_hits(hits, refs, CFG)
        report = compute_mtwv(aligned, refs, CFG)
        n_true = {}
        for r in refs:
            n_true[r.kwid] = n_true.get(r.kwid, 0) + 1
        tp_scores, fa_scores = {}, {}
        for h, _ in aligned.true_positives:
            tp_scores.setdefault(h.kwid, []).append(h.score)
        for h in aligned.false_alarms:
            fa_scores.setdefault(h.kwid, []).append(h.score)
        grid = np.linspace(0.0, 1.01, 400)
        dense = dense_grid_twv(tp_scores, fa_scores, n_true, CFG.beta, CFG.total_speech_seconds, grid)
        assert dense.max() == pytest.approx(report.mtwv, abs=1e-12)
        attained = set(np.round(report.twvs, 12))
        assert all(round(v, 12) in attained for v in dense)


class TestFusion:
    def test_single_input_identity(self):
        hits = sto_normalize([
            hit(tbeg=0.0, score=math.log(0.7)),
            hit(tbeg=10.0, score=math.log(0.3)),
        ])
        out = fuse_lists({"A": hits})
        assert [(h.tbeg, h.dur) for h in out] == [(0.0, 1.0), (10.0, 1.0)]
        for a, b in zip(out, hits):
            assert a.score == pytest.approx(b.score, abs=1e-12)

    def test_identical_singletons(self):
        a = [hit(score=1.0)]
        out = fuse_lists({"A": a, "B": a}, {"A": 1.0, "B": 1.0})
        assert len(out) == 1 and out[0].score == 1.0

    def test_weighted_mean_hand_value(self):
        a = [hit(tbeg=1.0, dur=0.5, score=0.8), hit(tbeg=10.0, dur=0.5, score=0.2)]
        b = [hit(tbeg=1.0, dur=0.5, score=0.4), hit(tbeg=10.0, dur=0.5, score=0.6)]
        out = fuse_lists({"A": a, "B": b}, {"A": 2.0, "B": 1.0})
        assert out[0].score == pytest.approx(2.0 / 3.0, abs=1e-12)
        assert out[1].score == pytest.approx(1.0 / 3.0, abs=1e-12)

    def test_absent_system_contributes_zero(self):
        a = [hit(tbeg=1.0, score=0.6), hit(tbeg=10.0, score=0.4)]
        b = [hit(tbeg=1.0, score=1.0)]
        out = fuse_lists({"A": a, "B": b}, {"A": 1.0, "B": 1.0})
        # cluster at 10 s has only system A: (0.4 + 0) / 2 pre-normalization
        assert out[1].score == pytest.approx(0.2 / (0.8 + 0.2), abs=1e-12)

    def test_timing_from_highest_weight(self):
        a = [hit(tbeg=1.00, dur=0.5, score=0.5)]
        b = [hit(tbeg=1.05, dur=0.7, score=0.5)]
        out = fuse_lists({"A": a, "B": b}, {"A": 1.0, "B": 3.0})
        assert (out[0].tbeg, out[0].dur) == (1.05, 0.7)

    def test_mtwv_preserved_by_single_system_fusion(self, rng):
        refs = [ref(kwid=f"K{i % 3}", tbeg=float(i) * 2) for i in range(9)]
        hits = sto_normalize([
            hit(kwid=f"K{int(rng.integers(0, 3))}", tbeg=float(rng.uniform(0, 20)),
                score=float(rng.uniform(-8, 0)))
            for _ in range(30)
        ])
        fused = fuse_lists({"only": hits})
        assert score_hits(fused, refs, CFG).mtwv == pytest.approx(score_hits(hits, refs, CFG).mtwv)

    def test_errors(self):
        with pytest.raises(ValueError, match="at least one"):
            fuse_lists({})
        with pytest.raises(ValueError, match="zero"):
            fuse_lists({"A": [hit()]}, {"A": 0.0})
        with pytest.raises(ValueError, match="non-negative"):
            fuse_lists({"A": [hit()]}, {"A": -1.0})

    def test_config_invariants(self):
        with pytest.raises(ValueError):
            ScoringConfig(total_speech_seconds=0.0)
        with pytest.raises(ValueError):
            ScoringConfig(total_speech_seconds=10.0, beta=0.0)
