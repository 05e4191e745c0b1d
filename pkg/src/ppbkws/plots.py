"""Figure rendering for score reports and parameter sweeps.

Everything draws through the Agg backend and lands in a file next to the
TSV output; nothing here opens a window.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .scoring import TwvReport


def plot_twv_curve(report: TwvReport, path: str | Path) -> None:
    """Term-weighted value as a function of the decision threshold."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.step(report.thresholds, report.twvs, where="post", lw=1.5)
    ax.axvline(report.best_threshold, color="tab:red", ls="--", lw=1.0,
               label=f"MTWV={report.mtwv:.3f} @ {report.best_threshold:.3f}")
    ax.set_xlabel("decision threshold")
    ax.set_ylabel("TWV")
    ax.set_ylim(min(-0.05, float(report.twvs.min()) - 0.05), 1.05)
    ax.grid(alpha=0.3)
    ax.legend(loc="lower left")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_sweep(param: str, values, mtwvs, path: str | Path) -> None:
    """MTWV across a swept decoder or smoothing parameter."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(values, mtwvs, marker="o", ms=4, lw=1.5)
    best = max(range(len(values)), key=lambda i: mtwvs[i])
    ax.scatter([values[best]], [mtwvs[best]], color="tab:red", zorder=3,
               label=f"best {param}={values[best]:.3f} (MTWV={mtwvs[best]:.3f})")
    ax.set_xlabel(param)
    ax.set_ylabel("MTWV")
    ax.grid(alpha=0.3)
    ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
