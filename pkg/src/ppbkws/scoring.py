"""Score normalization, hit/reference alignment, term-weighted value and fusion.

Scores arrive from the decoder as natural-log probabilities. Sum-to-one
normalization turns each keyword's scores into shares of that keyword's
total mass; the term-weighted value sweep then only depends on the order
of scores, so any monotone rescaling leaves MTWV unchanged.
"""

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from .lattice import Hit, ReferenceOccurrence, sort_hits


@dataclass(frozen=True)
class ScoringConfig:
    """beta is the miss/false-alarm cost ratio; total_speech_seconds the
    amount of audio searched (the non-target trial count is derived from
    it); alignment matches hits to references by midpoint distance."""

    total_speech_seconds: float
    beta: float = 999.9
    align_tolerance_seconds: float = 0.5

    def __post_init__(self):
        if not self.total_speech_seconds > 0:
            raise ValueError("total_speech_seconds must be positive")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if not self.align_tolerance_seconds > 0:
            raise ValueError("align_tolerance_seconds must be positive")


def sto_normalize(hits: Iterable[Hit], gamma: float = 1.0) -> list[Hit]:
    """Per keyword, replace each log score with its share of the keyword's
    probability mass: exp(gamma * score_i) / sum_j exp(gamma * score_j).

    A keyword with a single hit gets score 1.0. Decisions are untouched.
    """
    by_kwid: dict[str, list[Hit]] = {}
    for h in hits:
        by_kwid.setdefault(h.kwid, []).append(h)
    out: list[Hit] = []
    for kwid in sorted(by_kwid):
        group = by_kwid[kwid]
        scores = np.array([h.score for h in group]) * gamma
        shifted = np.exp(scores - scores.max())
        shares = shifted / shifted.sum()
        out.extend(
            Hit(h.kwid, h.utt_id, h.tbeg, h.dur, float(s), h.decision)
            for h, s in zip(group, shares)
        )
    return sort_hits(out)


class Alignment(NamedTuple):
    true_positives: list[tuple[Hit, ReferenceOccurrence]]
    false_alarms: list[Hit]
    misses: list[ReferenceOccurrence]


def align_hits(hits: list[Hit], refs: list[ReferenceOccurrence], cfg: ScoringConfig) -> Alignment:
    """Greedy one-to-one matching per (kwid, utt_id) by midpoint distance.

    Candidate pairs within the tolerance are taken closest-first, ties by
    earlier hit then earlier reference start time.
    """
    refs_by_key: dict[tuple[str, str], list[ReferenceOccurrence]] = {}
    for r in refs:
        refs_by_key.setdefault((r.kwid, r.utt_id), []).append(r)
    hits_by_key: dict[tuple[str, str], list[Hit]] = {}
    for h in hits:
        hits_by_key.setdefault((h.kwid, h.utt_id), []).append(h)

    tps: list[tuple[Hit, ReferenceOccurrence]] = []
    fas: list[Hit] = []
    misses: list[ReferenceOccurrence] = []
    for key in sorted(set(refs_by_key) | set(hits_by_key)):
        group_hits = hits_by_key.get(key, [])
        group_refs = refs_by_key.get(key, [])
        pairs = []
        for hi, h in enumerate(group_hits):
            for ri, r in enumerate(group_refs):
                dist = abs(h.midpoint - r.midpoint)
                if dist <= cfg.align_tolerance_seconds:
                    pairs.append((dist, h.tbeg, r.tbeg, hi, ri))
        pairs.sort()
        hit_taken = [False] * len(group_hits)
        ref_taken = [False] * len(group_refs)
        for _, _, _, hi, ri in pairs:
            if not hit_taken[hi] and not ref_taken[ri]:
                hit_taken[hi] = True
                ref_taken[ri] = True
                tps.append((group_hits[hi], group_refs[ri]))
        fas.extend(h for hi, h in enumerate(group_hits) if not hit_taken[hi])
        misses.extend(r for ri, r in enumerate(group_refs) if not ref_taken[ri])
    return Alignment(tps, fas, misses)


@dataclass(frozen=True)
class TwvReport:
    """Term-weighted value curve over decision thresholds.

    P_FA uses total_speech_seconds - N_true(k) non-target trials per
    keyword; keywords without references are excluded from the average and
    listed in ignored_kwids.
    """

    thresholds: np.ndarray
    twvs: np.ndarray
    mtwv: float
    best_threshold: float
    per_keyword: dict[str, tuple[float, float]] = field(default_factory=dict)
    ignored_kwids: tuple[str, ...] = ()

    @property
    def curve(self) -> list[tuple[float, float]]:
        return [(float(t), float(v)) for t, v in zip(self.thresholds, self.twvs)]


def compute_mtwv(alignment: Alignment, refs: list[ReferenceOccurrence], cfg: ScoringConfig) -> TwvReport:
    """Sweep the decision threshold over observed scores and keep the best.

    A hit is a YES decision at threshold theta when its score >= theta.
    The sweep set is every distinct hit score plus sentinels 0 and just
    above 1, which covers all distinct YES-sets of post-STO scores.
    """
    n_true: dict[str, int] = {}
    for r in refs:
        n_true[r.kwid] = n_true.get(r.kwid, 0) + 1
    kwids = sorted(n_true)
    if not kwids:
        raise ValueError("no keywords with references")

    tp_scores: dict[str, list[float]] = {k: [] for k in kwids}
    fa_scores: dict[str, list[float]] = {k: [] for k in kwids}
    ignored = set()
    for h, _ in alignment.true_positives:
        tp_scores[h.kwid].append(h.score)
    for h in alignment.false_alarms:
        if h.kwid in fa_scores:
            fa_scores[h.kwid].append(h.score)
        else:
            ignored.add(h.kwid)

    tp_sorted = {k: np.sort(np.array(v)) for k, v in tp_scores.items()}
    fa_sorted = {k: np.sort(np.array(v)) for k, v in fa_scores.items()}

    all_scores = [s for v in tp_scores.values() for s in v] + [
        s for v in fa_scores.values() for s in v
    ]
    thresholds = np.unique(np.array([0.0] + all_scores + [1.0 + 1e-9]))

    beta = cfg.beta
    twvs = np.empty(len(thresholds))
    per_kw_at: list[dict[str, tuple[float, float]]] = []
    for i, theta in enumerate(thresholds):
        total = 0.0
        per_kw: dict[str, tuple[float, float]] = {}
        for k in kwids:
            tp = len(tp_sorted[k]) - np.searchsorted(tp_sorted[k], theta, side="left")
            fa = len(fa_sorted[k]) - np.searchsorted(fa_sorted[k], theta, side="left")
            p_miss = 1.0 - tp / n_true[k]
            p_fa = fa / (cfg.total_speech_seconds - n_true[k])
            per_kw[k] = (p_miss, p_fa)
            total += p_miss + beta * p_fa
        twvs[i] = 1.0 - total / len(kwids)
        per_kw_at.append(per_kw)

    best = int(np.argmax(twvs))
    return TwvReport(
        thresholds=thresholds,
        twvs=twvs,
        mtwv=float(twvs[best]),
        best_threshold=float(thresholds[best]),
        per_keyword=per_kw_at[best],
        ignored_kwids=tuple(sorted(ignored)),
    )


def score_hits(hits: list[Hit], refs: list[ReferenceOccurrence], cfg: ScoringConfig) -> TwvReport:
    """align_hits followed by compute_mtwv."""
    return compute_mtwv(align_hits(hits, refs, cfg), refs, cfg)


def fuse_lists(
    lists: dict[str, list[Hit]],
    weights: dict[str, float] | None = None,
    tolerance: float = 0.5,
) -> list[Hit]:
    """Weighted list-level combination of already-normalized hit lists.

    Hits are clustered per (kwid, utt_id) when their midpoints fall within
    the tolerance of the cluster anchor. Each cluster becomes one hit
    scoring sum_i w_i s_i / sum_i w_i over all systems, absent systems
    contributing zero; timing comes from the highest-weighted contributor.
    The result is re-normalized per keyword.
    """
    if not lists:
        raise ValueError("fusion needs at least one input list")
    names = sorted(lists)
    if weights is None:
        weights = {}
    w = {n: float(weights.get(n, 1.0)) for n in names}
    if any(v < 0 for v in w.values()):
        raise ValueError("fusion weights must be non-negative")
    total_w = sum(w.values())
    if total_w == 0:
        raise ValueError("fusion weights must not all be zero")

    tagged: dict[tuple[str, str], list[tuple[float, str, Hit]]] = {}
    for name in names:
        for h in lists[name]:
            tagged.setdefault((h.kwid, h.utt_id), []).append((h.midpoint, name, h))

    fused: list[Hit] = []
    for (kwid, utt_id), items in sorted(tagged.items()):
        items.sort(key=lambda x: (x[0], x[1], x[2].tbeg))
        clusters: list[list[tuple[float, str, Hit]]] = []
        for item in items:
            placed = False
            for cluster in clusters:
                if abs(item[0] - cluster[0][0]) <= tolerance:
                    cluster.append(item)
                    placed = True
                    break
            if not placed:
                clusters.append([item])
        for cluster in clusters:
            per_system: dict[str, float] = {}
            for _, name, h in cluster:
                per_system[name] = max(per_system.get(name, 0.0), h.score)
            score = sum(w[n] * s for n, s in per_system.items()) / total_w
            anchor = max(cluster, key=lambda x: (w[x[1]], -x[2].tbeg, x[1]))
            fused.append(Hit(kwid, utt_id, anchor[2].tbeg, anchor[2].dur, score, "YES"))

    # fused scores are plain probability shares already, so renormalize by
    # direct division rather than via the log-domain path
    totals: dict[str, float] = {}
    for h in fused:
        totals[h.kwid] = totals.get(h.kwid, 0.0) + h.score
    out = [
        Hit(h.kwid, h.utt_id, h.tbeg, h.dur, h.score / totals[h.kwid], h.decision)
        for h in fused
        if totals[h.kwid] > 0
    ]
    return sort_hits(out)
