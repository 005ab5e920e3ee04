"""Coupled pure-jump paths driven by one Poisson realization.

Every path here is a sum over the same events (T_n, Z_n):

* stable-like:   jump Z_n ** (1 / beta(M_{T_n-}))
* subordinator:  jump Z_n ** (1 / alpha)
* time-changed:  jump Z_n ** (1 / f(T_n-))

so all of them jump at exactly the event times.  The stable-like recursion
evaluates beta at the pre-jump level; getting this wrong silently changes
every path.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numba
import numpy as np

from .errors import ParameterError
from .ppp import Layer, PointProcess


@numba.njit(cache=True, error_model="numpy")
def _interp1(x, xs, bs, ss):
    n = xs.size
    if n == 1 or x <= xs[0]:
        return bs[0]
    if x >= xs[n - 1]:
        return bs[n - 1]
    lo, hi = 0, n - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if xs[mid] <= x:
            lo = mid
        else:
            hi = mid
    return bs[lo] + (x - xs[lo]) * ss[lo]


@numba.njit(cache=True, error_model="numpy")
def _interp_array(x, xs, bs, ss):
    out = np.empty(x.size)
    for i in range(x.size):
        out[i] = _interp1(x[i], xs, bs, ss)
    return out


@numba.njit(cache=True, error_model="numpy")
def _stable_like_kernel(logz, xs, bs, ss):
    n = logz.size
    jumps = np.empty(n)
    values = np.empty(n)
    level = 0.0
    for i in range(n):
        jump = np.exp(logz[i] / _interp1(level, xs, bs, ss))
        level += jump
        jumps[i] = jump
        values[i] = level
    return jumps, values


@numba.njit(cache=True, error_model="numpy")
def _power_kernel(logz, index, level0=0.0):
    n = logz.size
    jumps = np.empty(n)
    values = np.empty(n)
    level = level0
    for i in range(n):
        jump = np.exp(logz[i] / index[i])
        level += jump
        jumps[i] = jump
        values[i] = level
    return jumps, values


@dataclass(frozen=True, eq=False)
class BetaFunction:
    """Piecewise-linear, non-decreasing index map clamped outside its knots.

    A single knot gives a constant map (the stable case).  With two or more
    knots the values must increase strictly from knot to knot.
    """

    epsilon0: float
    xs: np.ndarray
    bs: np.ndarray
    slopes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        xs = np.ascontiguousarray(self.xs, dtype=np.float64)
        bs = np.ascontiguousarray(self.bs, dtype=np.float64)
        if xs.ndim != 1 or xs.shape != bs.shape or xs.size == 0:
            raise ParameterError("knots must be a non-empty sequence of (x, b) pairs")
        if not (0.0 < self.epsilon0 < 0.5):
            raise ParameterError("epsilon0 must lie in (0, 1/2)")
        lo, hi = self.epsilon0, 1.0 - self.epsilon0
        if np.any(bs < lo) or np.any(bs > hi):
            raise ParameterError(f"index values must lie in [{lo}, {hi}]")
        if xs.size > 1 and (np.any(np.diff(xs) <= 0) or np.any(np.diff(bs) <= 0)):
            raise ParameterError("knot positions and values must increase strictly")
        ss = np.diff(bs) / np.diff(xs) if xs.size > 1 else np.zeros(0)
        for arr in (xs, bs, ss):
            arr.setflags(write=False)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "bs", bs)
        object.__setattr__(self, "slopes", ss)

    @classmethod
    def from_knots(cls, epsilon0: float, knots: Sequence[tuple[float, float]]) -> BetaFunction:
        arr = np.asarray(knots, dtype=np.float64).reshape(-1, 2)
        return cls(epsilon0, arr[:, 0], arr[:, 1])

    @classmethod
    def constant(cls, alpha: float, epsilon0: float | None = None) -> BetaFunction:
        if not (0.0 < alpha < 1.0):
            raise ParameterError("alpha must lie in (0, 1)")
        eps = min(alpha, 1.0 - alpha, 0.49) if epsilon0 is None else epsilon0
        return cls(eps, np.array([0.0]), np.array([alpha]))

    @property
    def is_constant(self) -> bool:
        return self.xs.size == 1

    @property
    def lipschitz(self) -> float:
        if self.is_constant:
            return 0.0
        return float(np.max(self.slopes))

    @property
    def b_min(self) -> float:
        return float(self.bs[0])

    @property
    def b_max(self) -> float:
        return float(self.bs[-1])

    @property
    def knots(self) -> list[tuple[float, float]]:
        return list(zip(self.xs.tolist(), self.bs.tolist()))

    def __call__(self, x):
        arr = np.asarray(x, dtype=np.float64)
        out = _interp_array(np.ascontiguousarray(arr.ravel()), self.xs, self.bs, self.slopes)
        return out.reshape(arr.shape) if arr.ndim else float(out[0])


@dataclass(frozen=True, eq=False)
class IndexStep:
    """Non-decreasing cadlag step function of time with values in (0, 1).

    ``value(t) = values[k]`` for the last ``times[k] <= t`` and ``initial``
    before the first breakpoint.
    """

    times: np.ndarray
    values: np.ndarray
    initial: float

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        if times.shape != values.shape:
            raise ParameterError("times and values must have equal length")
        if times.size and np.any(np.diff(times) < 0):
            raise ParameterError("breakpoints must be sorted")
        seq = np.concatenate(([self.initial], values))
        if np.any(np.diff(seq) < 0):
            raise ParameterError("time-change index must be non-decreasing")
        if np.any(seq <= 0.0) or np.any(seq >= 1.0):
            raise ParameterError("time-change index must take values in (0, 1)")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_path(cls, path: JumpPath, beta: BetaFunction) -> IndexStep:
        """The index t -> beta(path(t))."""
        return cls(path.times, beta(path.values_after), beta(0.0))

    def at(self, t):
        k = np.searchsorted(self.times, t, side="right") - 1
        return np.where(k >= 0, self.values[np.maximum(k, 0)], self.initial) if self.values.size else np.full(np.shape(t), self.initial)

    def left(self, t):
        k = np.searchsorted(self.times, t, side="left") - 1
        return np.where(k >= 0, self.values[np.maximum(k, 0)], self.initial) if self.values.size else np.full(np.shape(t), self.initial)

    @property
    def sup(self) -> float:
        return float(self.values[-1]) if self.values.size else float(self.initial)


@dataclass(frozen=True, eq=False)
class JumpPath:
    """Non-decreasing pure-jump step path started at 0.

    ``values_after`` is non-decreasing; it increases strictly whenever a jump
    is representable at the current level (jumps below the double spacing of
    the level are absorbed, which only happens for extremely small sizes).
    """

    times: np.ndarray
    jumps: np.ndarray
    values_after: np.ndarray
    horizon: float
    kind: str
    params: dict = field(default_factory=dict)
    z_min: float = float("nan")
    seed: int | None = None

    def __len__(self) -> int:
        return int(self.times.size)

    @property
    def values_before(self) -> np.ndarray:
        """Left limits at the jump times."""
        out = np.empty_like(self.values_after)
        if out.size:
            out[0] = 0.0
            out[1:] = self.values_after[:-1]
        return out

    def _check_t(self, t) -> np.ndarray:
        arr = np.asarray(t, dtype=np.float64)
        if np.any(arr < 0.0) or np.any(arr > self.horizon):
            raise ParameterError(f"evaluation time outside [0, {self.horizon}]")
        return arr

    def eval(self, t):
        """Right-continuous value at t."""
        arr = self._check_t(t)
        k = np.searchsorted(self.times, arr, side="right") - 1
        out = np.where(k >= 0, self.values_after[np.maximum(k, 0)] if self.times.size else 0.0, 0.0)
        return float(out) if out.ndim == 0 else out

    def eval_left(self, t):
        """Left limit at t (equals eval(t) off the jump times)."""
        arr = self._check_t(t)
        k = np.searchsorted(self.times, arr, side="left") - 1
        out = np.where(k >= 0, self.values_after[np.maximum(k, 0)] if self.times.size else 0.0, 0.0)
        return float(out) if out.ndim == 0 else out

    def truncation_bias(self) -> float:
        """Expected total size of the jumps discarded by the truncation."""
        b_max = self.params.get("b_max")
        if b_max is None or not np.isfinite(self.z_min):
            return float("nan")
        return truncation_bias_bound(self.horizon, self.z_min, b_max)

    def metadata(self) -> dict:
        meta = {
            "kind": self.kind,
            "seed": self.seed,
            "z_min": self.z_min,
            "horizon": self.horizon,
            "n_jumps": len(self),
            "truncation_bias_bound": self.truncation_bias(),
        }
        meta.update({k: v for k, v in self.params.items() if k != "b_max"})
        return meta

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            fh.write("t,value_after\n")
            for t, v in zip(self.times.tolist(), self.values_after.tolist()):
                fh.write(f"{t:.17g},{v:.17g}\n")

    def write_metadata(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.metadata(), indent=2, sort_keys=True))


def truncation_bias_bound(horizon: float, z_min: float, b_max: float) -> float:
    """H * z_min**(1/b_max - 1) / (1/b_max - 1): mean mass of the discarded jumps."""
    k = 1.0 / b_max - 1.0
    return horizon * z_min**k / k


def build_stable_like(pp: PointProcess, beta: BetaFunction) -> JumpPath:
    """Stable-like path: M_t = sum over T_n <= t of Z_n ** (1 / beta(M_{T_n-}))."""
    jumps, values = _stable_like_kernel(pp.log_z, beta.xs, beta.bs, beta.slopes)
    params = {"epsilon0": beta.epsilon0, "beta_knots": beta.knots, "b_max": 1.0 - beta.epsilon0}
    return JumpPath(pp.t, jumps, values, pp.horizon, "stable_like", params, pp.z_min, pp.seed)


def build_subordinator(pp: PointProcess, alpha: float) -> JumpPath:
    """alpha-stable subordinator with jumps truncated at 1."""
    if not (0.0 < alpha < 1.0):
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha!r}")
    jumps, values = _power_kernel(pp.log_z, np.full(len(pp), float(alpha)))
    params = {"alpha": float(alpha), "b_max": float(alpha)}
    return JumpPath(pp.t, jumps, values, pp.horizon, "subordinator", params, pp.z_min, pp.seed)


def build_time_changed(pp: PointProcess, f: IndexStep | Callable) -> JumpPath:
    """Path with jump Z_n ** (1 / f(T_n-)).

    ``f`` is an :class:`IndexStep` or a vectorized callable, which is then
    treated as continuous (f(t-) = f(t)).
    """
    if isinstance(f, IndexStep):
        index = f.left(pp.t)
        probe = np.concatenate(([f.initial], f.values))
    else:
        index = np.asarray(f(pp.t), dtype=np.float64)
        probe = index
    index = np.ascontiguousarray(index, dtype=np.float64)
    if probe.size and (np.any(probe <= 0.0) or np.any(probe >= 1.0)):
        raise ParameterError("time-change index must take values in (0, 1)")
    if index.size > 1 and np.any(np.diff(index) < 0):
        raise ParameterError("time-change index must be non-decreasing")
    jumps, values = _power_kernel(pp.log_z, index)
    b_max = float(index.max()) if index.size else float("nan")
    return JumpPath(pp.t, jumps, values, pp.horizon, "time_changed", {"b_max": b_max}, pp.z_min, pp.seed)


# ---------------------------------------------------------------------------
# coupling order check


@dataclass
class CouplingReport:
    n_pairs: int
    violations: list[tuple[float, float, str]]
    method: str
    n_candidates: int = 0
    max_excess: float = 0.0


@numba.njit(cache=True, error_model="numpy")
def _scaled_logs(logz, start, a_cell, c_cell, xa, xc):
    lo = start[0]
    for k in range(1, start.size):
        ra = 1.0 / a_cell[k]
        rc = 1.0 / c_cell[k]
        for e in range(start[k - 1], start[k]):
            xa[e - lo] = logz[e] * ra
            xc[e - lo] = logz[e] * rc


@numba.njit(cache=True)
def _reduce_cells(ea, m, ec, start, ahat, bsum, chat):
    lo = start[0]
    for k in range(1, start.size):
        a = 0.0
        b = 0.0
        c = 0.0
        for e in range(start[k - 1], start[k]):
            a += ea[e - lo]
            b += m[e]
            c += ec[e - lo]
        ahat[k] = a
        bsum[k] = b
        chat[k] = c


def _cell_sums(t, logz, m, grid, a_cell, c_cell):
    """Per-cell sums over (g_{k-1}, g_k] with the exponents of that cell."""
    start = np.searchsorted(t, grid, side="right")
    n = start[-1] - start[0]
    xa = np.empty(n)
    xc = np.empty(n)
    _scaled_logs(logz, start, a_cell, c_cell, xa, xc)
    # numpy's vectorized exp is much faster than a scalar loop
    np.exp(xa, out=xa)
    np.exp(xc, out=xc)
    ahat = np.zeros(grid.size)
    bsum = np.zeros(grid.size)
    chat = np.zeros(grid.size)
    _reduce_cells(xa, m, xc, start, ahat, bsum, chat)
    return ahat, bsum, chat, start


@numba.njit(cache=True)
def _pair_candidates(ahat, bsum, chat, rtol):
    G = ahat.size
    out_i = []
    out_j = []
    for i in range(G - 1):
        a = 0.0
        b = 0.0
        c = 0.0
        for j in range(i + 1, G):
            a += ahat[j]
            b += bsum[j]
            c += chat[j]
            if a > b + rtol * max(a, b) or b > c + rtol * max(b, c):
                out_i.append(i)
                out_j.append(j)
    return out_i, out_j


@numba.njit(cache=True, error_model="numpy")
def _pair_exact(logz, m, lo, hi, a_exp, c_exp):
    a = 0.0
    b = 0.0
    c = 0.0
    for k in range(lo, hi):
        a += np.exp(logz[k] / a_exp)
        b += m[k]
        c += np.exp(logz[k] / c_exp)
    return a, b, c


@numba.njit(cache=True, error_model="numpy")
def _all_pairs(logz, m, start, a_grid, c_grid):
    G = a_grid.size
    A = np.zeros((G, G))
    B = np.zeros((G, G))
    C = np.zeros((G, G))
    for i in range(G):
        ia = a_grid[i]
        a = 0.0
        b = 0.0
        for j in range(i + 1, G):
            for k in range(start[j - 1], start[j]):
                a += np.exp(logz[k] / ia)
                b += m[k]
            A[i, j] = a
            B[i, j] = b
    for j in range(1, G):
        ic = c_grid[j]
        c = 0.0
        for i in range(j - 1, -1, -1):
            for k in range(start[i], start[i + 1]):
                c += np.exp(logz[k] / ic)
            C[i, j] = c
    return A, B, C


def _classify(a: float, b: float, c: float, rtol: float) -> list[str]:
    bad = []
    if a < 0.0:
        bad.append("negative")
    if a > b + rtol * max(a, b):
        bad.append("lower")
    if b > c + rtol * max(b, c):
        bad.append("upper")
    return bad


def check_coupling(
    pp: PointProcess,
    beta: BetaFunction,
    grid: Sequence[float],
    rtol: float = 1e-12,
    method: str = "pruned",
    path: JumpPath | None = None,
) -> CouplingReport:
    """Check 0 <= L^a_t - L^a_s <= M_t - M_s <= L^c_t - L^c_s on all grid pairs.

    Here a = beta(M_s) and c = beta(M_{t-}).  Increments are summed over the
    events in (s, t] rather than formed as differences of path values, so the
    relative tolerance is meaningful even for tiny increments.

    ``method="exact"`` rebuilds the two subordinator increments for every pair
    (cost O(grid * events)).  ``method="pruned"`` first bounds every pair with
    per-cell sums using the exponent at the nearest grid point (monotonicity of
    z ** (1/a) in a for z <= 1), then re-evaluates only the flagged pairs
    exactly; it returns the same violation list at cost O(events + grid**2).
    """
    g = np.ascontiguousarray(np.asarray(grid, dtype=np.float64))
    if g.ndim != 1 or g.size < 2 or np.any(np.diff(g) <= 0):
        raise ParameterError("grid must be strictly increasing with >= 2 points")
    if g[0] < 0.0 or g[-1] > pp.horizon:
        raise ParameterError("grid must lie within [0, horizon]")
    if path is None:
        path = build_stable_like(pp, beta)
    a_grid = np.ascontiguousarray(beta(path.eval(g)))
    c_grid = np.ascontiguousarray(beta(path.eval_left(g)))
    G = g.size
    n_pairs = G * (G - 1) // 2
    logz = pp.log_z
    a_cell = np.empty(G)
    a_cell[0] = a_grid[0]
    a_cell[1:] = a_grid[:-1]
    ahat, bsum, chat, start = _cell_sums(pp.t, logz, path.jumps, g, a_cell, c_grid)

    violations: list[tuple[float, float, str]] = []
    worst = 0.0
    if method == "exact":
        A, B, C = _all_pairs(logz, path.jumps, start, a_grid, c_grid)
        ii, jj = np.triu_indices(G, 1)
        a, b, c = A[ii, jj], B[ii, jj], C[ii, jj]
        flag = (a < 0) | (a > b + rtol * np.maximum(a, b)) | (b > c + rtol * np.maximum(b, c))
        for i, j in zip(ii[flag], jj[flag]):
            for kind in _classify(A[i, j], B[i, j], C[i, j], rtol):
                violations.append((float(g[i]), float(g[j]), kind))
        with np.errstate(invalid="ignore", divide="ignore"):
            excess = np.maximum((a - b) / np.maximum(a, b), (b - c) / np.maximum(b, c))
        excess = excess[np.isfinite(excess)]
        worst = float(excess.max()) if excess.size else 0.0
        return CouplingReport(n_pairs, violations, method, int(flag.sum()), max(worst, 0.0))
    if method != "pruned":
        raise ParameterError(f"unknown method {method!r}")
    # half tolerance: the bound sums round differently from the exact ones
    ci, cj = _pair_candidates(ahat, bsum, chat, 0.5 * rtol)
    for i, j in zip(ci, cj):
        a, b, c = _pair_exact(logz, path.jumps, start[i], start[j], a_grid[i], c_grid[j])
        worst = max(worst, (a - b) / max(a, b, 1e-300), (b - c) / max(b, c, 1e-300))
        for kind in _classify(a, b, c, rtol):
            violations.append((float(g[i]), float(g[j]), kind))
    return CouplingReport(n_pairs, violations, method, len(ci), max(worst, 0.0))


# ---------------------------------------------------------------------------
# local refinement plan


def refinement_layers(
    center: float,
    horizon: float,
    z_min: float,
    alpha_lo: float,
    alpha_hi: float,
    r_min: float,
    rel_bias: float = 0.2,
    width_factor: float = 4.0,
    per_decade: int = 2,
) -> list[Layer]:
    """Nested sampling windows around ``center`` for local scale analysis.

    A ball of radius r around the path value at ``center`` is crossed in time
    about r**alpha; the window for scale r is ``width_factor * r**alpha_lo``
    on each side.  Inside it, sizes down to the floor zeta(r) are kept, with
    zeta chosen so that the expected mass of the discarded jumps over the
    window is at most ``rel_bias * r`` (worst case index ``alpha_hi``).  The
    innermost windows reach ``z_min``; the outermost layer covers the whole
    horizon.
    """
    if not (0.0 < alpha_lo <= alpha_hi < 1.0):
        raise ParameterError("need 0 < alpha_lo <= alpha_hi < 1")
    if not (0.0 < z_min < 1.0) or r_min <= 0.0 or rel_bias <= 0.0:
        raise ParameterError("invalid refinement parameters")
    k = 1.0 / alpha_hi - 1.0

    def width(r: float) -> float:
        return width_factor * r**alpha_lo

    def floor(r: float) -> float:
        return (rel_bias * r * k / (2.0 * width(r))) ** (1.0 / k)

    r_top = (horizon / width_factor) ** (1.0 / alpha_lo)
    layers = [Layer(0.0, horizon, min(max(floor(r_top), z_min), 0.5))]
    step = 10.0 ** (-1.0 / per_decade)
    r = r_top
    while layers[-1].z_floor > z_min and r > r_min * step:
        r *= step
        zeta = max(floor(r), z_min)
        if zeta >= layers[-1].z_floor:
            continue
        w = width(r)
        lo, hi = max(0.0, center - w), min(horizon, center + w)
        prev = layers[-1]
        layers.append(Layer(max(lo, prev.t_lo), min(hi, prev.t_hi), zeta))
    return layers
