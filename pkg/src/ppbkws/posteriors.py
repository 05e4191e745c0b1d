"""Per-frame phoneme posteriors from word lattices.

Arc posteriors come out of a log-space forward-backward pass over the
lattice; folding each arc's phone alignment into its frames yields a
frame-by-phone posterior matrix. A path-enumeration routine computes the
same matrix exhaustively and serves as the test oracle.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .lattice import Lattice, LatticeError, PhoneSet, topo_sort_nodes

RAW = "raw"
SMOOTHED = "smoothed"
LOG_SMOOTHED = "log-smoothed"
KINDS = (RAW, SMOOTHED, LOG_SMOOTHED)


@dataclass(frozen=True)
class PosteriorConfig:
    """Scoring weights for the forward-backward pass.

    acoustic_scale: acoustic log-likelihoods are divided by this value
    before they are combined with language-model scores. Larger values
    flatten the acoustic contribution; the useful range matches typical
    language-model weights and the best value is data-dependent.
    """

    acoustic_scale: float = 12.0

    def __post_init__(self):
        if not self.acoustic_scale > 0:
            raise ValueError(f"acoustic_scale must be positive, got {self.acoustic_scale}")


@dataclass(frozen=True)
class PosteriorMatrix:
    """T x N matrix of per-frame phone scores.

    kind is one of "raw" (posterior probabilities), "smoothed" (after
    confusion-model interpolation and flooring) or "log-smoothed"
    (natural log of the smoothed values).
    """

    utt_id: str
    frame_shift: float
    values: np.ndarray
    kind: str = RAW

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown matrix kind {self.kind!r}")
        if self.values.ndim != 2:
            raise ValueError(f"posterior matrix must be 2-D, got shape {self.values.shape}")
        if self.kind == RAW:
            if self.values.size and (self.values.min() < -1e-9 or self.values.max() > 1 + 1e-6):
                raise ValueError("raw posterior entries must lie in [0, 1]")

    @property
    def num_frames(self) -> int:
        return self.values.shape[0]

    @property
    def num_phones(self) -> int:
        return self.values.shape[1]

    @property
    def duration_seconds(self) -> float:
        return self.num_frames * self.frame_shift

    def covered_frames(self) -> np.ndarray:
        """Boolean mask of frames carrying any posterior mass (raw kind only)."""
        return self.values.sum(axis=1) > 0


def _arc_weights(lat: Lattice, cfg: PosteriorConfig) -> np.ndarray:
    return np.array(
        [a.ac_loglik / cfg.acoustic_scale + a.lm_logprob for a in lat.arcs], dtype=np.float64
    )


def arc_posteriors(lat: Lattice, cfg: PosteriorConfig) -> np.ndarray:
    """Posterior probability of each arc, aligned with lat.arcs.

    Computed in log space: alpha/beta sums over incoming/outgoing arcs with
    per-arc weight ac/scale + lm, normalized by the total path mass.
    """
    order = topo_sort_nodes(lat)
    w = _arc_weights(lat, cfg)
    incoming: dict[int, list[int]] = {}
    outgoing: dict[int, list[int]] = {}
    for i, a in enumerate(lat.arcs):
        incoming.setdefault(a.dst, []).append(i)
        outgoing.setdefault(a.src, []).append(i)

    initial = set(lat.initial_nodes)
    final = set(lat.final_nodes)
    if not initial or not final:
        raise LatticeError(f"{lat.utt_id}: empty lattice")

    alpha = {n: (0.0 if n in initial else -np.inf) for n in order}
    for n in order:
        for i in incoming.get(n, ()):
            a = lat.arcs[i]
            alpha[n] = np.logaddexp(alpha[n], alpha[a.src] + w[i])
    beta = {n: (0.0 if n in final else -np.inf) for n in order}
    for n in reversed(order):
        for i in outgoing.get(n, ()):
            a = lat.arcs[i]
            beta[n] = np.logaddexp(beta[n], beta[a.dst] + w[i])

    log_z = logsumexp([alpha[n] for n in final])
    if not np.isfinite(log_z):
        raise LatticeError(f"{lat.utt_id}: empty lattice")

    post = np.array(
        [np.exp(alpha[a.src] + w[i] + beta[a.dst] - log_z) for i, a in enumerate(lat.arcs)]
    )
    return np.clip(post, 0.0, 1.0)


def _paint(values: np.ndarray, lat: Lattice, arc_index: int, mass: float) -> None:
    a = lat.arcs[arc_index]
    t = lat.node_frame(a.src)
    for phone, dur in a.phone_alignment:
        values[t : t + dur, phone] += mass
        t += dur


def frame_posteriors(lat: Lattice, arc_post: np.ndarray, phones: PhoneSet) -> PosteriorMatrix:
    """Fold arc posteriors into a raw frame-by-phone posterior matrix.

    Each phone of an arc's alignment occupies a half-open frame interval
    [start, start + dur); frames covered by no arc stay all-zero.
    """
    values = np.zeros((lat.num_frames, len(phones)), dtype=np.float64)
    for i in range(len(lat.arcs)):
        _paint(values, lat, i, float(arc_post[i]))
    np.clip(values, 0.0, 1.0, out=values)
    return PosteriorMatrix(lat.utt_id, lat.frame_shift, values, RAW)


def compute_frame_posteriors(lat: Lattice, cfg: PosteriorConfig, phones: PhoneSet) -> PosteriorMatrix:
    """arc_posteriors followed by frame_posteriors."""
    return frame_posteriors(lat, arc_posteriors(lat, cfg), phones)


def count_paths(lat: Lattice) -> int:
    """Number of complete initial->final paths."""
    outgoing: dict[int, list[int]] = {}
    for i, a in enumerate(lat.arcs):
        outgoing.setdefault(a.src, []).append(i)
    final = set(lat.final_nodes)
    counts: dict[int, int] = {}
    for n in reversed(topo_sort_nodes(lat)):
        if n in final:
            counts[n] = 1
        else:
            counts[n] = sum(counts[lat.arcs[i].dst] for i in outgoing.get(n, ()))
    return sum(counts[n] for n in lat.initial_nodes)


def brute_force_frame_posteriors(
    lat: Lattice,
    cfg: PosteriorConfig,
    phones: PhoneSet,
    max_paths: int = 1_000_000,
) -> PosteriorMatrix:
    """Oracle: enumerate every complete path, weight, normalize, accumulate.

    Exponential in lattice size; guarded by max_paths.
    """
    n_paths = count_paths(lat)
    if n_paths == 0:
        raise LatticeError(f"{lat.utt_id}: empty lattice")
    if n_paths > max_paths:
        raise LatticeError(f"{lat.utt_id}: {n_paths} paths exceed the cap of {max_paths}")

    w = _arc_weights(lat, cfg)
    outgoing: dict[int, list[int]] = {}
    for i, a in enumerate(lat.arcs):
        outgoing.setdefault(a.src, []).append(i)
    final = set(lat.final_nodes)

    paths: list[list[int]] = []
    log_weights: list[float] = []

    def walk(node: int, arcs_so_far: list[int], logw: float) -> None:
        if node in final:
            paths.append(list(arcs_so_far))
            log_weights.append(logw)
            return
        for i in outgoing.get(node, ()):
            arcs_so_far.append(i)
            walk(lat.arcs[i].dst, arcs_so_far, logw + w[i])
            arcs_so_far.pop()

    for n in sorted(lat.initial_nodes):
        walk(n, [], 0.0)

    logw_arr = np.array(log_weights)
    probs = np.exp(logw_arr - logsumexp(logw_arr))
    values = np.zeros((lat.num_frames, len(phones)), dtype=np.float64)
    for path, p in zip(paths, probs):
        for i in path:
            _paint(values, lat, i, float(p))
    np.clip(values, 0.0, 1.0, out=values)
    return PosteriorMatrix(lat.utt_id, lat.frame_shift, values, RAW)
