"""Occupation measure of a step path: mu(A) = time spent by the path in A.

For a truncated path the measure is atomic, one atom per constant piece.
Atom k stores the exact end time of its piece in ``cumulative[k]``; since the
pieces tile [0, H] in level order, the mass of any run of consecutive atoms is
a single difference of two stored times, so interval queries are O(log n) and
correctly rounded.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .process import JumpPath


@dataclass(frozen=True, eq=False)
class OccupationMeasure:
    """Atoms (levels[k], durations[k]) with strictly increasing levels.

    ``cumulative[k]`` is the time at which the path leaves level k, which is
    also the total mass of atoms 0..k.
    """

    levels: np.ndarray
    cumulative: np.ndarray
    total: float

    def __post_init__(self) -> None:
        for name in ("levels", "cumulative"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "_ends", np.concatenate(([0.0], self.cumulative)))

    def __len__(self) -> int:
        return int(self.levels.size)

    @property
    def starts(self) -> np.ndarray:
        out = np.empty_like(self.cumulative)
        if out.size:
            out[0] = 0.0
            out[1:] = self.cumulative[:-1]
        return out

    @property
    def durations(self) -> np.ndarray:
        return self.cumulative - self.starts

    @property
    def atoms(self) -> np.ndarray:
        """(n, 2) array of (level, duration) rows."""
        return np.column_stack((self.levels, self.durations))

    def _bounds(self, a, b):
        lo = np.searchsorted(self.levels, a, side="right")
        hi = np.searchsorted(self.levels, b, side="left")
        return lo, hi

    def mass_interval(self, a, b):
        """mu((a, b)): atoms on the boundary are excluded."""
        lo, hi = self._bounds(a, b)
        ends = self._ends
        out = np.where(hi > lo, ends[np.maximum(hi, lo)] - ends[lo], 0.0)
        return float(out) if out.ndim == 0 else out

    def mass_ball(self, x, r):
        """mu(B(x, r)) for the open ball."""
        return self.mass_interval(np.subtract(x, r), np.add(x, r))

    def count_ball(self, x, r):
        """Number of atoms inside the open ball."""
        lo, hi = self._bounds(np.subtract(x, r), np.add(x, r))
        out = np.maximum(hi - lo, 0)
        return int(out) if np.ndim(out) == 0 else out

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            fh.write("level,duration,cumulative\n")
            for v, d, c in zip(self.levels.tolist(), self.durations.tolist(), self.cumulative.tolist()):
                fh.write(f"{v:.17g},{d:.17g},{c:.17g}\n")


def occupation_measure(path: JumpPath) -> OccupationMeasure:
    """Occupation measure of ``path`` on [0, horizon].

    Pieces of zero length (a jump at time 0) are dropped, and consecutive
    pieces whose levels coincide in floating point (a jump absorbed by
    rounding) are merged, so levels increase strictly.
    """
    H = float(path.horizon)
    levels = np.concatenate(([0.0], path.values_after))
    ends = np.concatenate((path.times, [H]))
    starts = np.concatenate(([0.0], path.times))
    keep = ends > starts
    levels, ends = levels[keep], ends[keep]
    if levels.size > 1:
        last = np.ones(levels.size, dtype=bool)
        last[:-1] = levels[1:] != levels[:-1]
        levels, ends = levels[last], ends[last]
    if levels.size == 0:
        levels, ends = np.zeros(1), np.array([H])
    return OccupationMeasure(levels, ends, H)
