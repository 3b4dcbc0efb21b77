"""Run artifacts: IoU curves (CSV + PNG figure), key=value reports, mask overlays."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .videoio import write_ppm

CURVE_HEADER = "iteration,eval_iou,mean_omega,corpus_size"
OVERLAY_COLOR = (255, 0, 0)


@dataclass
class RunReport:
    iterations: list                       # IterationReport, in order
    config: list = field(default_factory=list)  # (key, value) pairs
    suite_hash: str = ""

    def __post_init__(self):
        its = [r.iteration for r in self.iterations]
        if any(b <= a for a, b in zip(its, its[1:])):
            raise ValueError("iterations must be strictly increasing")

    def lines(self):
        out = [f"suite_hash={self.suite_hash}"]
        out += [f"config.{k}={v}" for k, v in self.config]
        for rep in self.iterations:
            out += rep.lines()
        return out


def emit_curves(report, path):
    if not report.iterations:
        raise ValueError("report has no iterations")
    rows = [CURVE_HEADER]
    for r in report.iterations:
        rows.append(f"{r.iteration},{r.eval_iou:.6f},{r.mean_omega:.6f},{r.corpus_size}")
    with open(path, "w") as fh:
        fh.write("\n".join(rows) + "\n")


def read_curves(path):
    with open(path) as fh:
        header = fh.readline().strip()
        if header != CURVE_HEADER:
            raise ValueError(f"{path}: unexpected header {header!r}")
        return [tuple(float(v) for v in line.split(",")) for line in fh if line.strip()]


def emit_report(report, path):
    with open(path, "w") as fh:
        fh.write("\n".join(report.lines()) + "\n")


def plot_curves(curves, path, labels=None):
    """Eval IoU per iteration for one or more runs, saved as a PNG.

    ``curves`` is a list of row lists as returned by :func:`read_curves`.
    """
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    for i, rows in enumerate(curves):
        it = [r[0] for r in rows]
        iou = [100 * r[1] for r in rows]
        ax.plot(it, iou, marker="o", ms=3, label=labels[i] if labels else None)
    ax.set_xlabel("iteration")
    ax.set_ylabel("eval IoU (%)")
    ax.grid(alpha=0.3)
    if labels:
        ax.legend(fontsize=8, frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


def mask_boundary(mask):
    """Mask pixels with a 4-neighbour outside the mask (the frame border counts as outside)."""
    m = np.asarray(mask, bool)
    pad = np.pad(m, 1, constant_values=False)
    inner = pad[:-2, 1:-1] & pad[2:, 1:-1] & pad[1:-1, :-2] & pad[1:-1, 2:]
    return m & ~inner


def overlay(frame, mask):
    frame = np.asarray(frame, np.uint8)
    mask = np.asarray(mask, bool)
    if frame.shape[:2] != mask.shape:
        raise ValueError("frame and mask dimensions differ")
    out = frame.copy()
    out[mask_boundary(mask)] = OVERLAY_COLOR
    return out


def emit_overlay(frame, mask, path):
    write_ppm(path, overlay(frame, mask))


def energy_breakdown(result, pots):
    unary, pair, higher = result.terms(pots)
    lines = [f"energy={float(result.energy)!r}", f"unary={unary!r}", f"pairwise={pair!r}",
             f"higher_order={higher!r}"]
    if np.isfinite(result.flow_value):
        lines += [f"flow_value={float(result.flow_value)!r}", f"offset={float(result.offset)!r}",
                  f"certificate_gap={abs(result.energy - result.flow_value - result.offset):.3e}"]
    lines += [f"{k}={v}" for k, v in sorted(result.stats.items())]
    lines.append("labeling=" + " ".join("+1" if y > 0 else "-1" for y in result.labeling))
    return "\n".join(lines) + "\n"


def write_run_outputs(out_dir, report, masks_by_iter=None, models=None):
    os.makedirs(out_dir, exist_ok=True)
    emit_report(report, os.path.join(out_dir, "report.txt"))
    emit_curves(report, os.path.join(out_dir, "curves.csv"))
    plot_curves([read_curves(os.path.join(out_dir, "curves.csv"))], os.path.join(out_dir, "curves.png"))
