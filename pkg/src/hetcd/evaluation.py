"""Agreement between a predicted change mask and the reference mask."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .raster import Mask


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class Metrics:
    overall_accuracy: float
    precision: float
    recall: float
    f1: float
    kappa: float
    degenerate: tuple = field(default=())

    def to_text(self, counts: ConfusionCounts | None = None) -> str:
        lines = []
        if counts is not None:
            lines += [f"tp={counts.tp}", f"fp={counts.fp}", f"fn={counts.fn}", f"tn={counts.tn}"]
        lines += [
            f"overall_accuracy={self.overall_accuracy:.6f}",
            f"precision={self.precision:.6f}",
            f"recall={self.recall:.6f}",
            f"f1={self.f1:.6f}",
            f"kappa={self.kappa:.6f}",
            "degenerate=" + (",".join(self.degenerate) if self.degenerate else "none"),
        ]
        return "\n".join(lines) + "\n"


def _values(mask) -> np.ndarray:
    return mask.values if isinstance(mask, Mask) else np.asarray(mask, dtype=bool)


def confusion(pred, truth) -> ConfusionCounts:
    p, t = _values(pred), _values(truth)
    if p.shape != t.shape:
        raise ValueError(f"mask shapes differ: {p.shape} vs {t.shape}")
    tp = int(np.count_nonzero(p & t))
    fp = int(np.count_nonzero(p & ~t))
    fn = int(np.count_nonzero(~p & t))
    tn = int(p.size - tp - fp - fn)
    return ConfusionCounts(tp, fp, fn, tn)


def metrics(c: ConfusionCounts) -> Metrics:
    """OA, precision, recall, F1 and Cohen's kappa with change as the positive class.

    Zero denominators give 0 and are listed in ``degenerate``. When chance
    agreement is 1 the kappa is 1 for perfect agreement and 0 otherwise.
    """
    n = c.total
    if n <= 0:
        raise ValueError("confusion counts are empty")
    flags = []

    def ratio(num, den, name):
        if den == 0:
            flags.append(name)
            return 0.0
        return num / den

    oa = (c.tp + c.tn) / n
    precision = ratio(c.tp, c.tp + c.fp, "precision")
    recall = ratio(c.tp, c.tp + c.fn, "recall")
    f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn, "f1")
    pred_pos, true_pos = (c.tp + c.fp) / n, (c.tp + c.fn) / n
    p_e = pred_pos * true_pos + (1 - pred_pos) * (1 - true_pos)
    if p_e >= 1.0:
        flags.append("kappa")
        kappa = 1.0 if oa == 1.0 else 0.0
    else:
        kappa = (oa - p_e) / (1 - p_e)
    return Metrics(oa, precision, recall, f1, kappa, tuple(flags))
