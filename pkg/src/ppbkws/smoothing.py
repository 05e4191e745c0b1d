"""Phoneme confusion model estimation and posterior smoothing.

The confusion model holds one mean posterior vector per phone, estimated
unsupervised by assigning every covered frame to its argmax phone.
Smoothing interpolates each raw frame with the mean vector of its argmax
phone, floors everything at epsilon, and optionally emits logs.
"""

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .posteriors import LOG_SMOOTHED, RAW, SMOOTHED, PosteriorMatrix


@dataclass(frozen=True)
class ConfusionModel:
    """means[n] is the mean of all frames whose argmax phone is n.

    counts[n] is how many frames contributed; rows with counts == 0 were
    never observed and default to the one-hot basis vector.
    """

    means: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        n = self.means.shape[0]
        if self.means.shape != (n, n):
            raise ValueError(f"confusion model must be square, got {self.means.shape}")
        if self.counts.shape != (n,):
            raise ValueError("counts must have one entry per phone")

    @property
    def num_phones(self) -> int:
        return self.means.shape[0]

    def empty_rows(self) -> np.ndarray:
        """Phone ids that never won an argmax assignment."""
        return np.flatnonzero(self.counts == 0)


@dataclass(frozen=True)
class SmoothingConfig:
    """alpha: weight of the confusion-model row in the interpolation.

    epsilon: positive floor applied to every output entry so that log
    features stay finite even for phones absent from the lattice.
    """

    alpha: float = 0.2
    epsilon: float = 1e-42
    emit_log: bool = False

    def __post_init__(self):
        if not 0 <= self.alpha <= 1:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if not 0 < self.epsilon < 1e-6:
            raise ValueError(f"epsilon must be in (0, 1e-6), got {self.epsilon}")


def estimate_confusion_model(matrices: Iterable[PosteriorMatrix], num_phones: int) -> ConfusionModel:
    """Single pass over raw matrices; covered frames only.

    Frames are assigned to phone argmax(p_t), ties to the lowest phone id.
    """
    sums = np.zeros((num_phones, num_phones), dtype=np.float64)
    counts = np.zeros(num_phones, dtype=np.int64)
    seen = 0
    for m in matrices:
        if m.kind != RAW:
            raise ValueError(f"{m.utt_id}: confusion model needs raw matrices, got {m.kind}")
        if m.num_phones != num_phones:
            raise ValueError(f"{m.utt_id}: expected {num_phones} phones, got {m.num_phones}")
        seen += 1
        covered = m.covered_frames()
        if not covered.any():
            continue
        rows = m.values[covered]
        assign = rows.argmax(axis=1)
        np.add.at(sums, assign, rows)
        counts += np.bincount(assign, minlength=num_phones)
    if seen == 0:
        raise ValueError("confusion model estimation got an empty stream of matrices")

    means = np.eye(num_phones, dtype=np.float64)
    observed = counts > 0
    means[observed] = sums[observed] / counts[observed, None]
    return ConfusionModel(means, counts)


def smooth(m: PosteriorMatrix, cm: ConfusionModel, cfg: SmoothingConfig) -> PosteriorMatrix:
    """Interpolate covered frames with their argmax phone's confusion row.

    Every entry below epsilon (including whole uncovered frames) is lifted
    to epsilon; with emit_log the result is the elementwise natural log.
    """
    if m.kind != RAW:
        raise ValueError(f"{m.utt_id}: smoothing needs a raw matrix, got {m.kind}")
    if m.num_phones != cm.num_phones:
        raise ValueError(
            f"{m.utt_id}: matrix has {m.num_phones} phones but confusion model has {cm.num_phones}"
        )
    values = m.values.copy()
    covered = m.covered_frames()
    if covered.any():
        rows = values[covered]
        assign = rows.argmax(axis=1)
        values[covered] = (1.0 - cfg.alpha) * rows + cfg.alpha * cm.means[assign]
    np.maximum(values, cfg.epsilon, out=values)
    if cfg.emit_log:
        return PosteriorMatrix(m.utt_id, m.frame_shift, np.log(values), LOG_SMOOTHED)
    return PosteriorMatrix(m.utt_id, m.frame_shift, values, SMOOTHED)
