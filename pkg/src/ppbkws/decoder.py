"""Loop-free keyword automata and the frame-synchronous keyword decoder.

Each keyword gets a prefix-shared trie over its pronunciations (no loops,
no filler states). The decoder sweeps the smoothed posterior matrix frame
by frame, spawning a hypothesis whenever a first phone's probability
clears the spawn threshold, extending or closing phones under duration
bounds, and scoring a hypothesis as the average of its per-phone mean
probabilities so that scores are comparable across durations.

A live hypothesis is identified by (trie state, current-phone start
frame); its payload is the start frame of the whole hypothesis, the sum
of the means of its completed phones, and the running sum of the current
phone's probabilities. Because the trie fixes depth, current phone and
consumed evidence for every hypothesis sharing that key, recombination
keeps the one with the largest completed-phone sum, which is an exact
dominance argument rather than an approximation.
"""

import math
import time
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np
from numba import njit

from .lattice import Hit, KeywordLexicon, sort_hits
from .posteriors import LOG_SMOOTHED, SMOOTHED, PosteriorMatrix


@dataclass(frozen=True)
class KeywordFSA:
    """Acyclic phone automaton over one keyword's pronunciations.

    States are numbered 0..num_states-1 with 0 the start state. Arrays:
    in_phone[s] is the phone on the unique transition into s (-1 for the
    start state), parent[s] its unique predecessor, depth[s] the number
    of phones on the path from the start, is_final[s] marks pronunciation
    ends, and the child_* arrays are a CSR adjacency of outgoing
    transitions.
    """

    kwid: str
    num_states: int
    in_phone: np.ndarray
    parent: np.ndarray
    depth: np.ndarray
    is_final: np.ndarray
    child_offsets: np.ndarray
    child_phones: np.ndarray
    child_states: np.ndarray

    @property
    def transitions(self) -> list[tuple[int, int, int]]:
        """(state, phone, next_state) triples, in construction order."""
        out = []
        for s in range(self.num_states):
            for e in range(self.child_offsets[s], self.child_offsets[s + 1]):
                out.append((s, int(self.child_phones[e]), int(self.child_states[e])))
        return out

    @property
    def final_states(self) -> list[int]:
        return [int(s) for s in np.flatnonzero(self.is_final)]


@dataclass(frozen=True)
class DecoderConfig:
    """Thresholds and per-phone duration bounds for the keyword decoder."""

    spawn_threshold: float = 0.05
    beam_threshold: float = 0.1
    hit_threshold: float = 0.3
    min_phone_frames: int = 2
    max_phone_frames: int = 50

    def __post_init__(self):
        if not 0 <= self.spawn_threshold <= 1:
            raise ValueError(f"spawn_threshold must be in [0, 1], got {self.spawn_threshold}")
        if not 0 <= self.beam_threshold <= self.hit_threshold <= 1:
            raise ValueError(
                "need 0 <= beam_threshold <= hit_threshold <= 1, got "
                f"{self.beam_threshold} and {self.hit_threshold}"
            )
        if not 1 <= self.min_phone_frames <= self.max_phone_frames:
            raise ValueError(
                "need 1 <= min_phone_frames <= max_phone_frames, got "
                f"{self.min_phone_frames} and {self.max_phone_frames}"
            )


def build_keyword_fsa(kwid: str, pronunciations: Iterable[tuple[int, ...]]) -> KeywordFSA:
    """Prefix-shared trie over the (deduplicated) pronunciations."""
    prons = []
    for p in pronunciations:
        p = tuple(p)
        if not p:
            raise ValueError(f"{kwid}: empty pronunciation")
        if p not in prons:
            prons.append(p)
    if not prons:
        raise ValueError(f"{kwid}: no pronunciations")

    children: list[dict[int, int]] = [{}]
    in_phone = [-1]
    parent = [-1]
    depth = [0]
    final = [False]
    for pron in prons:
        s = 0
        for phone in pron:
            nxt = children[s].get(phone)
            if nxt is None:
                nxt = len(children)
                children[s][phone] = nxt
                children.append({})
                in_phone.append(phone)
                parent.append(s)
                depth.append(depth[s] + 1)
                final.append(False)
            s = nxt
        final[s] = True

    offsets = np.zeros(len(children) + 1, dtype=np.int32)
    phones: list[int] = []
    states: list[int] = []
    for s, kids in enumerate(children):
        for phone, nxt in kids.items():
            phones.append(phone)
            states.append(nxt)
        offsets[s + 1] = len(phones)
    return KeywordFSA(
        kwid=kwid,
        num_states=len(children),
        in_phone=np.array(in_phone, dtype=np.int32),
        parent=np.array(parent, dtype=np.int32),
        depth=np.array(depth, dtype=np.int32),
        is_final=np.array(final, dtype=np.bool_),
        child_offsets=offsets,
        child_phones=np.array(phones, dtype=np.int32),
        child_states=np.array(states, dtype=np.int32),
    )


def fsa_from_lexicon(lexicon: KeywordLexicon) -> list[KeywordFSA]:
    return [build_keyword_fsa(kwid, lexicon.entries[kwid]) for kwid in sorted(lexicon.entries)]


def _decode_loop(
    values,
    in_phone,
    parent,
    depth,
    is_final,
    spawn_th,
    beam_th,
    hit_th,
    min_len,
    max_len,
    track_stats,
):
    """Frame-synchronous sweep; returns (merged hits, accepted count, max live).

    Hypotheses live in per-state ring buffers indexed by the current
    phone's start frame modulo the duration window, so an extension is an
    in-place add and each frame writes exactly one fresh slot per state
    (the best phone closure arriving from the parent, or a spawn for the
    states directly under the start state). Dead slots carry -inf in
    their completed-phone sum and fall out of every comparison.

    Accepted closures at final states are merged online into overlap
    clusters (interval union is order-independent, so this matches an
    offline transitive merge); each merged row is (start frame, end
    frame, ln score) of the best closure in its cluster, best meaning
    max score, ties to the longer span, then the earlier start. Written
    in a numba-friendly style; the jitted and plain-Python versions are
    the same function.
    """
    num_frames = values.shape[0]
    num_states = in_phone.shape[0]
    w = max_len

    neg_inf = -np.inf
    big_start = np.int64(2**62)
    sums = np.full((num_states, w), neg_inf, dtype=np.float64)
    cur = np.zeros((num_states, w), dtype=np.float64)
    strt = np.zeros((num_states, w), dtype=np.int64)
    best_q = np.full(num_states, neg_inf, dtype=np.float64)
    best_start = np.zeros(num_states, dtype=np.int64)
    alive_any = np.zeros(num_states, dtype=np.int64)

    recip = np.empty(w + 2, dtype=np.float64)
    recip[0] = 0.0
    for i in range(1, w + 2):
        recip[i] = 1.0 / i
    beam_bound = beam_th * depth.astype(np.float64)
    hit_bound = hit_th * depth.astype(np.float64)
    max_depth = 1
    for s in range(num_states):
        if depth[s] > max_depth:
            max_depth = depth[s]
    horizon = max_depth * w + 1

    # per-frame tables shared by all states, keyed by ring slot: the slot
    # at index j holds the phone started at frame t - o(j); rvc carries
    # 1/o for closing means, rve 1/(o+1) for the post-extension average,
    # close_ok 0 where the minimum duration is met (else -inf)
    rvc = np.empty(w, dtype=np.float64)
    rve = np.empty(w, dtype=np.float64)
    close_ok = np.empty(w, dtype=np.float64)
    qc = np.empty(w, dtype=np.float64)
    qn = np.empty(w, dtype=np.float64)

    # frame-local accepted closures, merged into clusters at frame end
    em_cap = num_states * (w + 1)
    em_st = np.empty(em_cap, dtype=np.int64)
    em_sc = np.empty(em_cap, dtype=np.float64)

    # open overlap clusters, ascending and disjoint (ring buffer):
    # bounds plus the best member's (start, end, score)
    cl_cap = horizon + 4
    cl_end = np.empty(cl_cap, dtype=np.int64)
    cl_bs = np.empty(cl_cap, dtype=np.int64)
    cl_be = np.empty(cl_cap, dtype=np.int64)
    cl_bsc = np.empty(cl_cap, dtype=np.float64)
    cl_head = 0
    cl_n = 0

    out_cap = 64
    out = np.empty((out_cap, 3), dtype=np.float64)
    out_n = 0
    accepted = 0
    max_live = 0

    for t in range(num_frames):
        head = t % w
        for o in range(1, w + 1):
            j = head - o
            if j < 0:
                j += w
            rvc[j] = recip[o]
            rve[j] = recip[o + 1]
            close_ok[j] = 0.0 if o >= min_len else neg_inf
        em_n = 0
        # scan: in-place extensions, beam, advance maxima, emissions
        for s in range(1, num_states):
            if alive_any[s] == 0:
                best_q[s] = neg_inf
                continue
            v = values[t, in_phone[s]]
            thb = beam_bound[s]
            thh = hit_bound[s]
            # fused branchless pass over the ring: closing average with the
            # pre-extension sum, then extend, post-extension average, beam
            alive = 0
            emit = 0
            for j in range(w):
                sum_j = sums[s, j]
                cur_j = cur[s, j]
                qc[j] = sum_j + cur_j * rvc[j] + close_ok[j]
                cur_j += v
                cur[s, j] = cur_j
                q_new = sum_j + cur_j * rve[j]
                qn[j] = q_new
                dead = q_new < thb
                sums[s, j] = neg_inf if dead else sum_j
                alive |= 0 if dead else 1
                emit |= 1 if q_new > thh else 0
            alive_any[s] = alive
            # recombination input for the children: best closing score,
            # ties to the earliest hypothesis start
            b0 = neg_inf
            b1 = neg_inf
            b2 = neg_inf
            b3 = neg_inf
            j = 0
            while j + 4 <= w:
                q0 = qc[j]
                q1 = qc[j + 1]
                q2 = qc[j + 2]
                q3 = qc[j + 3]
                b0 = q0 if q0 > b0 else b0
                b1 = q1 if q1 > b1 else b1
                b2 = q2 if q2 > b2 else b2
                b3 = q3 if q3 > b3 else b3
                j += 4
            while j < w:
                q0 = qc[j]
                b0 = q0 if q0 > b0 else b0
                j += 1
            b0 = b0 if b0 > b1 else b1
            b2 = b2 if b2 > b3 else b3
            bq = b0 if b0 > b2 else b2
            bs = big_start
            if bq > neg_inf:
                for j in range(w):
                    sj = strt[s, j] if qc[j] == bq else big_start
                    bs = sj if sj < bs else bs
            best_q[s] = bq
            best_start[s] = bs
            if emit != 0 and is_final[s]:
                dep = depth[s]
                for o in range(max(1, min_len - 1), w):
                    j = head - o
                    if j < 0:
                        j += w
                    q_new = qn[j]
                    if q_new > thh:
                        em_st[em_n] = strt[s, j]
                        em_sc[em_n] = math.log(q_new / dep)
                        em_n += 1
        # write the fresh head slot of every state: the recombined phone
        # closure from the parent, or a spawn for start-state children
        for s in range(1, num_states):
            p = parent[s]
            cj = values[t, in_phone[s]]
            if p == 0:
                sstart = t
                snew = 0.0 if cj > spawn_th else neg_inf
            else:
                snew = best_q[p]
                sstart = best_start[p]
            q_child = snew + cj
            if q_child < beam_bound[s]:
                snew = neg_inf
            sums[s, head] = snew
            cur[s, head] = cj
            strt[s, head] = sstart
            if snew > neg_inf:
                alive_any[s] = 1
                if is_final[s] and min_len <= 1 and q_child > hit_bound[s]:
                    em_st[em_n] = sstart
                    em_sc[em_n] = math.log(q_child / depth[s])
                    em_n += 1
        # retire clusters no future closure can reach, then absorb this
        # frame's closures (every closure ends at frame t)
        while cl_n > 0 and t - cl_end[cl_head] >= horizon:
            if out_n == out_cap:
                out_cap *= 2
                grown = np.empty((out_cap, 3), dtype=np.float64)
                grown[:out_n] = out[:out_n]
                out = grown
            out[out_n, 0] = cl_bs[cl_head]
            out[out_n, 1] = cl_be[cl_head]
            out[out_n, 2] = cl_bsc[cl_head]
            out_n += 1
            cl_head = (cl_head + 1) % cl_cap
            cl_n -= 1
        accepted += em_n
        for k in range(em_n):
            st = em_st[k]
            sc = em_sc[k]
            # clusters overlapping [st, t] form a suffix of the open list
            first = cl_n
            for i in range(cl_n - 1, -1, -1):
                if cl_end[(cl_head + i) % cl_cap] >= st:
                    first = i
                else:
                    break
            if first == cl_n:
                idx = (cl_head + cl_n) % cl_cap
                cl_end[idx] = t
                cl_bs[idx] = st
                cl_be[idx] = t
                cl_bsc[idx] = sc
                cl_n += 1
            else:
                idx = (cl_head + first) % cl_cap
                bs2 = cl_bs[idx]
                be2 = cl_be[idx]
                bsc2 = cl_bsc[idx]
                for i in range(first + 1, cl_n):
                    ii = (cl_head + i) % cl_cap
                    better = False
                    if cl_bsc[ii] > bsc2:
                        better = True
                    elif cl_bsc[ii] == bsc2:
                        if cl_be[ii] - cl_bs[ii] > be2 - bs2:
                            better = True
                        elif cl_be[ii] - cl_bs[ii] == be2 - bs2 and cl_bs[ii] < bs2:
                            better = True
                    if better:
                        bs2 = cl_bs[ii]
                        be2 = cl_be[ii]
                        bsc2 = cl_bsc[ii]
                better = False
                if sc > bsc2:
                    better = True
                elif sc == bsc2:
                    if t - st > be2 - bs2:
                        better = True
                    elif t - st == be2 - bs2 and st < bs2:
                        better = True
                if better:
                    bs2 = st
                    be2 = t
                    bsc2 = sc
                cl_end[idx] = t
                cl_bs[idx] = bs2
                cl_be[idx] = be2
                cl_bsc[idx] = bsc2
                cl_n = first + 1
        if track_stats:
            alive = 0
            for s in range(1, num_states):
                for j in range(w):
                    if sums[s, j] > neg_inf:
                        alive += 1
            if alive > max_live:
                max_live = alive
    while cl_n > 0:
        if out_n == out_cap:
            out_cap *= 2
            grown = np.empty((out_cap, 3), dtype=np.float64)
            grown[:out_n] = out[:out_n]
            out = grown
        out[out_n, 0] = cl_bs[cl_head]
        out[out_n, 1] = cl_be[cl_head]
        out[out_n, 2] = cl_bsc[cl_head]
        out_n += 1
        cl_head = (cl_head + 1) % cl_cap
        cl_n -= 1
    return out, out_n, accepted, max_live


_decode_loop_jit = njit(cache=True, nogil=True)(_decode_loop)

_warmed_up = False


def warm_up() -> None:
    """Trigger JIT compilation once so timed searches exclude it."""
    global _warmed_up
    if _warmed_up:
        return
    fsa = build_keyword_fsa("warmup", [(0, 1)])
    tiny = np.full((4, 2), 0.5, dtype=np.float64)
    _run_core(tiny, fsa, DecoderConfig(), jit=True)
    _warmed_up = True


def _run_core(values: np.ndarray, fsa: KeywordFSA, cfg: DecoderConfig, jit: bool, track_stats: bool = False):
    fn = _decode_loop_jit if jit else _decode_loop
    out, n, accepted, max_live = fn(
        np.ascontiguousarray(values, dtype=np.float64),
        fsa.in_phone,
        fsa.parent,
        fsa.depth,
        fsa.is_final,
        float(cfg.spawn_threshold),
        float(cfg.beam_threshold),
        float(cfg.hit_threshold),
        int(cfg.min_phone_frames),
        int(cfg.max_phone_frames),
        track_stats,
    )
    return out[:n], accepted, max_live


def _to_probability_domain(m: PosteriorMatrix) -> np.ndarray:
    if m.kind == SMOOTHED:
        return m.values
    if m.kind == LOG_SMOOTHED:
        return np.exp(m.values)
    raise ValueError(f"{m.utt_id}: decoder needs a smoothed matrix, got kind {m.kind!r}")


def decode_keyword(
    fsa: KeywordFSA,
    m: PosteriorMatrix,
    cfg: DecoderConfig,
    *,
    jit: bool = True,
) -> list[Hit]:
    """All accepted detections of one keyword in one utterance.

    Overlapping accepted closures merge into one hit keeping the best
    score (ties to the longer span, then the earlier start).
    """
    values = _to_probability_domain(m)
    merged, _, _ = _run_core(values, fsa, cfg, jit)
    hits = [
        Hit(
            kwid=fsa.kwid,
            utt_id=m.utt_id,
            tbeg=int(row[0]) * m.frame_shift,
            dur=(int(row[1]) - int(row[0]) + 1) * m.frame_shift,
            score=float(row[2]),
            decision="YES",
        )
        for row in merged
    ]
    return sort_hits(hits)


def decode_keyword_stats(fsa: KeywordFSA, m: PosteriorMatrix, cfg: DecoderConfig, *, jit: bool = True):
    """(merged hit rows, accepted closure count, max live hypotheses).

    The accepted count includes every closure clearing the hit threshold
    before overlap merging; max live counts occupied ring slots after
    each frame.
    """
    values = _to_probability_domain(m)
    return _run_core(values, fsa, cfg, jit, track_stats=True)


class CorpusSearchResult(NamedTuple):
    hits: dict[str, list[Hit]]
    rtf_rows: list[tuple[str, float, float, float]]


def search_corpus(
    lexicon: KeywordLexicon,
    matrices: Iterable[PosteriorMatrix],
    cfg: DecoderConfig,
    *,
    jobs: int = 1,
) -> CorpusSearchResult:
    """Decode every keyword against every utterance.

    Returns hits keyed by kwid (deterministically ordered) and one
    real-time-factor row per keyword: wall seconds spent searching that
    keyword divided by the total audio seconds scanned.
    """
    mats = sorted(matrices, key=lambda m: m.utt_id)
    if not mats:
        return CorpusSearchResult({k: [] for k in sorted(lexicon.entries)}, [])
    num_phones = mats[0].num_phones
    for kwid, prons in lexicon.entries.items():
        for pron in prons:
            for p in pron:
                if not 0 <= p < num_phones:
                    raise ValueError(f"{kwid}: phone id {p} outside the {num_phones}-phone set")

    warm_up()
    audio_seconds = sum(m.duration_seconds for m in mats)
    fsas = fsa_from_lexicon(lexicon)

    def run_one(fsa: KeywordFSA) -> tuple[str, list[Hit], float]:
        t0 = time.perf_counter()
        hits: list[Hit] = []
        for m in mats:
            hits.extend(decode_keyword(fsa, m, cfg))
        return fsa.kwid, sort_hits(hits), time.perf_counter() - t0

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_one, fsas))
    else:
        results = [run_one(f) for f in fsas]

    hits_by_kwid = {kwid: hits for kwid, hits, _ in results}
    rtf_rows = [
        (kwid, audio_seconds, wall, wall / audio_seconds) for kwid, _, wall in results
    ]
    return CorpusSearchResult(hits_by_kwid, rtf_rows)
