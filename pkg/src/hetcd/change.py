"""Split/merge recognition between the optical, SAR, and stacked partitions.

A cluster of the pre-event optical partition *splits* when its pixels spread
over two or more stacked clusters; a cluster of the post-event SAR partition
is the target of a *merge* when two or more stacked clusters fall almost
entirely inside it. Both are read off contingency tables.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy.ndimage import convolve

from .raster import Mask

FLAG_MODES = ("minority", "all")
_EPS = 1e-12


@dataclass(frozen=True)
class ChangeParams:
    tau_split: float = 0.2
    tau_merge: float = 0.2
    flag_mode: str = "minority"
    smooth: bool = True
    strict_split: bool = False

    def __post_init__(self):
        for name in ("tau_split", "tau_merge"):
            value = getattr(self, name)
            if not 0 < value <= 0.5:
                raise ValueError(f"{name} must lie in (0, 0.5], got {value}")
        if self.flag_mode not in FLAG_MODES:
            raise ValueError(f"flag_mode must be one of {FLAG_MODES}, got {self.flag_mode!r}")


@dataclass
class ContingencyTable:
    """Overlap counts between two labelings of the same pixels.

    ``counts[a, b]`` is the number of pixels labelled ``row_ids[a]`` by the
    row partition and ``col_ids[b]`` by the column partition.
    """

    counts: np.ndarray
    row_ids: np.ndarray
    col_ids: np.ndarray
    row_labels: np.ndarray
    col_labels: np.ndarray

    @property
    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def col_sums(self) -> np.ndarray:
        return self.counts.sum(axis=0)


@dataclass
class ChangeEvent:
    kind: str
    source: int
    counterparts: tuple
    pixels: np.ndarray = field(repr=False)
    window: Optional[int] = None

    @property
    def pixel_count(self) -> int:
        return int(self.pixels.size)

    def to_line(self) -> str:
        window = "-" if self.window is None else str(self.window)
        parts = ",".join(str(c) for c in self.counterparts)
        return (f"window={window} kind={self.kind} source={self.source} "
                f"counterparts={parts} pixels={self.pixel_count}")


def contingency(labels_a, labels_b) -> ContingencyTable:
    a = np.asarray(labels_a).ravel()
    b = np.asarray(labels_b).ravel()
    if a.shape != b.shape:
        raise ValueError(f"partition lengths differ: {a.size} vs {b.size}")
    row_ids, ai = np.unique(a, return_inverse=True)
    col_ids, bi = np.unique(b, return_inverse=True)
    counts = np.zeros((row_ids.size, col_ids.size), dtype=np.int64)
    np.add.at(counts, (ai, bi), 1)
    return ContingencyTable(counts, row_ids, col_ids, a, b)


def _largest(counts: np.ndarray, members: np.ndarray) -> int:
    # argmax picks the first maximum, i.e. the lowest id among ties
    return int(members[np.argmax(counts[members])])


def _majority_label(labels: np.ndarray) -> int:
    values, counts = np.unique(labels, return_counts=True)
    return int(values[np.argmax(counts)])


def detect_splits(table: ContingencyTable, params: ChangeParams,
                  sar_labels: Optional[np.ndarray] = None) -> list[ChangeEvent]:
    """Optical clusters (rows) that break into two or more stacked clusters (columns).

    A stacked cluster counts as a fragment when it holds at least ``tau_split``
    of the optical cluster. In strict mode, which needs ``sar_labels``, the
    fragments must also land in at least two different SAR clusters.
    """
    if params.strict_split and sar_labels is None:
        raise ValueError("strict split detection needs the SAR labels")
    events = []
    rows = table.row_sums
    for a, src in enumerate(table.row_ids):
        frac = table.counts[a] / rows[a]
        fragments = np.flatnonzero(frac >= params.tau_split - _EPS)
        if fragments.size < 2:
            continue
        in_source = table.row_labels == src
        if params.strict_split:
            majorities = {
                _majority_label(sar_labels[in_source & (table.col_labels == table.col_ids[s])])
                for s in fragments
            }
            if len(majorities) < 2:
                continue
        flagged = fragments
        if params.flag_mode == "minority":
            keep = _largest(table.counts[a], fragments)
            flagged = fragments[fragments != keep]
        pixels = np.flatnonzero(in_source & np.isin(table.col_labels, table.col_ids[flagged]))
        events.append(ChangeEvent("split", int(src),
                                  tuple(int(table.col_ids[s]) for s in fragments), pixels))
    return events


def detect_merges(table: ContingencyTable, params: ChangeParams) -> list[ChangeEvent]:
    """SAR clusters (columns) absorbing two or more stacked clusters (rows).

    A stacked cluster is absorbed by SAR cluster ``j`` when at least
    ``1 - tau_merge`` of it lies inside ``j``.
    """
    events = []
    rows = table.row_sums
    threshold = 1.0 - params.tau_merge
    for b, target in enumerate(table.col_ids):
        frac = table.counts[:, b] / rows
        absorbed = np.flatnonzero(frac >= threshold - _EPS)
        if absorbed.size < 2:
            continue
        flagged = absorbed
        if params.flag_mode == "minority":
            keep = _largest(table.counts[:, b], absorbed)
            flagged = absorbed[absorbed != keep]
        in_target = table.col_labels == target
        pixels = np.flatnonzero(in_target & np.isin(table.row_labels, table.row_ids[flagged]))
        events.append(ChangeEvent("merge", int(target),
                                  tuple(int(table.row_ids[s]) for s in absorbed), pixels))
    return events


def majority_smooth(values: np.ndarray) -> np.ndarray:
    """One pass of a 3x3 majority vote; the pixel itself votes, ties keep it."""
    values = np.asarray(values, dtype=bool)
    kernel = np.ones((3, 3))
    votes = convolve(values.astype(np.int32), kernel.astype(np.int32), mode="constant", cval=0)
    available = convolve(np.ones(values.shape, dtype=np.int32), kernel.astype(np.int32),
                         mode="constant", cval=0)
    out = values.copy()
    out[2 * votes > available] = True
    out[2 * votes < available] = False
    return out


def change_map(events: Iterable[ChangeEvent], shape: tuple[int, int],
               params: ChangeParams) -> Mask:
    """Union of the flagged pixels of all events (flat indices into ``shape``)."""
    flat = np.zeros(shape[0] * shape[1], dtype=bool)
    for ev in events:
        if ev.pixels.size and (ev.pixels.min() < 0 or ev.pixels.max() >= flat.size):
            raise ValueError("event pixels fall outside the map")
        flat[ev.pixels] = True
    values = flat.reshape(shape)
    if params.smooth:
        values = majority_smooth(values)
    return Mask(values)


EventFilter = Callable[[Sequence[ChangeEvent], dict], list]
"""Post-processing hook for prior knowledge.

Called as ``hook(events, context)`` with ``context`` holding the window
bounds and the three label grids; returns the events to keep. Positional
priors or a class-of-interest rule plug in here.
"""


def analyze(opt_labels: np.ndarray, sar_labels: np.ndarray, st_labels: np.ndarray,
            params: ChangeParams) -> list[ChangeEvent]:
    """Splits (optical vs stacked) followed by merges (stacked vs SAR)."""
    opt_labels = np.asarray(opt_labels).ravel()
    sar_labels = np.asarray(sar_labels).ravel()
    st_labels = np.asarray(st_labels).ravel()
    splits = detect_splits(contingency(opt_labels, st_labels), params,
                           sar_labels=sar_labels if params.strict_split else None)
    merges = detect_merges(contingency(st_labels, sar_labels), params)
    return splits + merges
