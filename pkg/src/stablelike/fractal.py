"""Local dimensions, box dimensions and the closed-form spectrum formulas.

Spectrum values live in {-inf} U [0, 1].  Minus infinity is the singleton
:data:`NEG_INF`; it orders below every number but supports no arithmetic, so
it can never leak into a computation as a float.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numba
import numpy as np
from scipy import stats

from .errors import ParameterError
from .process import BetaFunction, JumpPath


@functools.total_ordering
class _NegInf:
    """Minus infinity as a spectrum value."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "NEG_INF"

    def __str__(self) -> str:
        return "-inf"

    def __eq__(self, other) -> bool:
        return other is self

    def __lt__(self, other) -> bool:
        return other is not self

    def __hash__(self) -> int:
        return hash("stablelike.NEG_INF")

    def __reduce__(self):
        return (_NegInf, ())


NEG_INF = _NegInf()


def is_neg_inf(value) -> bool:
    return value is NEG_INF


def format_value(value) -> str:
    """Decimal text for a spectrum value; minus infinity becomes "-inf"."""
    return "-inf" if value is NEG_INF else format(float(value), ".17g")


# ---------------------------------------------------------------------------
# stable spectra


def g_spectrum(alpha: float, h: float, variant: str = "closed"):
    """alpha (2 alpha / h - 1) on [alpha, 2 alpha] (closed) or [alpha, 2 alpha) (half_open)."""
    if not (0.0 < alpha < 1.0):
        raise ParameterError("alpha must lie in (0, 1)")
    if h < 0:
        raise ParameterError("h must be >= 0")
    if variant == "closed":
        inside = alpha <= h <= 2 * alpha
    elif variant == "half_open":
        inside = alpha <= h < 2 * alpha
    else:
        raise ParameterError(f"unknown variant {variant!r}")
    return alpha * (2 * alpha / h - 1) if inside else NEG_INF


def general_spectrum_value(upsilon_min):
    """2 / upsilon_min - 1 for upsilon_min in [1, 2]; exact on Fraction input."""
    if not (1 <= upsilon_min <= 2):
        raise ParameterError("upsilon_min must lie in [1, 2]")
    if isinstance(upsilon_min, (int, Fraction)):
        return Fraction(2) / Fraction(upsilon_min) - 1
    return 2.0 / upsilon_min - 1.0


def upsilon_profile(path: JumpPath, beta: BetaFunction, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Step profile t -> h / beta(M_t): breakpoints and values from each breakpoint on."""
    times = np.concatenate(([0.0], path.times))
    values = h / beta(np.concatenate(([0.0], path.values_after)))
    return times, values


# ---------------------------------------------------------------------------
# index sets


@dataclass(frozen=True)
class IndexSet:
    """Finite union of disjoint closed intervals, sorted; points have lo == hi."""

    intervals: tuple[tuple[float, float], ...] = ()

    @classmethod
    def from_values(cls, values: Iterable[float], min_gap: float = 0.0) -> IndexSet:
        """Merge sorted values into intervals wherever consecutive gaps are <= min_gap."""
        v = np.unique(np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=np.float64))
        if v.size == 0:
            return cls(())
        breaks = np.flatnonzero(np.diff(v) > min_gap)
        lo = np.concatenate(([v[0]], v[breaks + 1]))
        hi = np.concatenate((v[breaks], [v[-1]]))
        return cls(tuple(zip(lo.tolist(), hi.tolist())))

    @classmethod
    def union(cls, pieces: Iterable[tuple[float, float]]) -> IndexSet:
        spans = sorted((float(a), float(b)) for a, b in pieces)
        out: list[tuple[float, float]] = []
        for a, b in spans:
            if a > b:
                raise ParameterError("interval with lo > hi")
            if out and a <= out[-1][1]:
                out[-1] = (out[-1][0], max(out[-1][1], b))
            else:
                out.append((a, b))
        return cls(tuple(out))

    @property
    def is_empty(self) -> bool:
        return not self.intervals

    @property
    def lo(self) -> float:
        return self.intervals[0][0]

    @property
    def hi(self) -> float:
        return self.intervals[-1][1]

    def contains(self, x: float, tol: float = 0.0) -> bool:
        return any(a - tol <= x <= b + tol for a, b in self.intervals)

    def max_in(self, lo_open: float, hi_closed: float) -> float | None:
        """Largest element of the set in (lo_open, hi_closed], or None."""
        for a, b in reversed(self.intervals):
            cand = min(b, hi_closed)
            if cand >= a and cand > lo_open:
                return cand
        return None


def index_range(
    path: JumpPath, beta: BetaFunction, window: tuple[float, float], mode: str = "space", min_gap: float = 0.0
) -> IndexSet:
    """Values of beta(M) seen over an open window.

    ``mode="time"``: {beta(M_t) : t in (u, v)}.  ``mode="space"``: beta over
    the support of the occupation measure inside (a, b), which contains the
    left limits M_{tau-} as well as the attained values.  For a truncated path
    both are finite sets; ``min_gap`` merges values closer than that into
    intervals (the closure of the untruncated set).
    """
    lo, hi = window
    if not lo < hi:
        raise ParameterError("window must be a non-trivial open interval")
    levels = np.concatenate(([0.0], path.values_after))
    if mode == "time":
        starts = np.concatenate(([0.0], path.times))
        ends = np.concatenate((path.times, [path.horizon]))
        sel = (starts < hi) & (ends > lo) & (ends > starts)
    elif mode == "space":
        sel = (levels > lo) & (levels < hi)
    else:
        raise ParameterError(f"unknown mode {mode!r}")
    return IndexSet.from_values(beta(levels[sel]), min_gap)


# ---------------------------------------------------------------------------
# spectrum evaluators


@dataclass(frozen=True)
class SpectrumValue:
    h: float
    value: object
    case: str

    @property
    def is_neg_inf(self) -> bool:
        return self.value is NEG_INF


def spectrum_envelope(h: float, I: IndexSet, mode: str = "space") -> SpectrumValue:
    """Supremum of g-hat_alpha(h) (space) or g-hat_alpha(h) / alpha (time) over alpha in I.

    g-hat_alpha(h) is finite iff alpha lies in (h/2, h], and both objectives
    increase with alpha there, so the supremum sits at the largest admissible
    alpha.
    """
    if mode not in ("space", "time"):
        raise ParameterError(f"unknown mode {mode!r}")
    if h <= 0:
        return SpectrumValue(h, NEG_INF, "empty")
    a = I.max_in(h / 2.0, h)
    if a is None:
        return SpectrumValue(h, NEG_INF, "empty")
    value = a * (2.0 * a / h - 1.0) if mode == "space" else 2.0 * a / h - 1.0
    return SpectrumValue(h, value, "regular")


def lower_spectrum(h: float, I: IndexSet, mode: str = "space", tol: float = 0.0) -> SpectrumValue:
    """0 if h belongs to the index set, else minus infinity.

    In space mode pass the closure (``index_range(..., mode="space")``
    already contains left limits); in time mode only attained values count.
    """
    if mode not in ("space", "time"):
        raise ParameterError(f"unknown mode {mode!r}")
    return SpectrumValue(h, 0.0, "regular") if I.contains(h, tol) else SpectrumValue(h, NEG_INF, "empty")


@dataclass(frozen=True)
class ExceptionalJump:
    tau: float
    b_before: float
    b_after: float
    equality: bool


@dataclass
class ExceptionalSets:
    jumps: list[ExceptionalJump] = field(default_factory=list)

    @property
    def E1(self) -> list[float]:
        return [j.b_after for j in self.jumps]

    @property
    def E2(self) -> list[float]:
        return [2.0 * j.b_before for j in self.jumps]

    @property
    def E_prime(self) -> list[float]:
        return self.E1

    def __len__(self) -> int:
        return len(self.jumps)


def exceptional_sets(path: JumpPath, beta: BetaFunction) -> ExceptionalSets:
    """Jump times where the index at least doubles: beta(M_tau) >= 2 beta(M_tau-)."""
    b_after = beta(path.values_after)
    b_before = beta(path.values_before)
    hit = np.flatnonzero(b_after >= 2.0 * b_before)
    return ExceptionalSets([
        ExceptionalJump(float(path.times[k]), float(b_before[k]), float(b_after[k]), bool(b_after[k] == 2.0 * b_before[k]))
        for k in hit
    ])


def exceptional_value(
    h: float,
    b_after: float,
    b_before: float,
    after_in_O: bool,
    before_in_O: bool,
    dim_after: float | None = None,
    dim_before: float | None = None,
    mode: str = "space",
    tol: float = 1e-12,
) -> SpectrumValue:
    """Upper spectrum at an exceptional h attached to one jump.

    ``b_after``/``b_before`` are the index after and before the jump,
    ``*_in_O`` say whether M_tau / M_tau- lie in the open set, and
    ``dim_*`` are the upper local dimensions there.  Time mode divides the
    space value by ``b_before``.  Inputs that match no case raise ValueError.
    """
    if mode not in ("space", "time"):
        raise ParameterError(f"unknown mode {mode!r}")
    on_after = abs(h - b_after) <= tol
    on_before = abs(h - 2.0 * b_before) <= tol

    def eq(d):
        return d is not None and abs(d - h) <= tol

    def need(d, name):
        if d is None:
            raise ValueError(f"{name} is required for this case")
        return d

    if on_after and on_before:
        case = "exceptional-3"
        if after_in_O and before_in_O:
            da, db = need(dim_after, "dim_after"), need(dim_before, "dim_before")
            if eq(db) or eq(da):
                value = 0.0
            elif db < h and da > h:
                value = NEG_INF
            else:
                raise ValueError("local dimensions inconsistent with case 3")
        elif before_in_O:
            db = need(dim_before, "dim_before")
            value = 0.0 if eq(db) else _below(db, h, "case 3")
        elif after_in_O:
            da = need(dim_after, "dim_after")
            value = 0.0 if eq(da) else _above(da, h, "case 3")
        else:
            value = NEG_INF
    elif on_after and b_after > 2.0 * b_before:
        case = "exceptional-1"
        if not after_in_O:
            value = NEG_INF
        else:
            da = need(dim_after, "dim_after")
            value = 0.0 if eq(da) else _above(da, h, "case 1")
    elif on_before and 2.0 * b_before < b_after:
        case = "exceptional-2"
        if not before_in_O:
            value = NEG_INF
        else:
            db = need(dim_before, "dim_before")
            value = 0.0 if eq(db) else _below(db, h, "case 2")
    else:
        raise ValueError("h is not an exceptional value of this jump")
    if mode == "time" and value is not NEG_INF:
        value = value / b_before
    return SpectrumValue(h, value, case)


def _above(d: float, h: float, case: str):
    if d > h:
        return NEG_INF
    raise ValueError(f"local dimension below h is impossible in {case}")


def _below(d: float, h: float, case: str):
    if d < h:
        return NEG_INF
    raise ValueError(f"local dimension above h is impossible in {case}")


# ---------------------------------------------------------------------------
# local dimension


@dataclass
class LocalDimEstimate:
    """Per-scale ratios log mu(B(x, r)) / log r and their extremes.

    ``lower_est``/``upper_est`` are the min/max over the finest half of the
    usable scales (proxies for the liminf and limsup).  ``sparse`` marks
    scales whose ball holds fewer than ``min_atoms`` atoms.
    """

    x: float
    radii: np.ndarray
    masses: np.ndarray
    ratios: np.ndarray
    usable: np.ndarray
    lower_est: float
    upper_est: float
    usable_count: int
    low_confidence: bool
    sparse: np.ndarray


def radius_grid(r_min: float, r_max: float, scales_per_decade: int) -> np.ndarray:
    if not (0.0 < r_min < r_max) or scales_per_decade < 1:
        raise ParameterError("need 0 < r_min < r_max and scales_per_decade >= 1")
    n = int(round(math.log10(r_max / r_min) * scales_per_decade)) + 1
    return np.geomspace(r_min, r_max, max(n, 2))


def local_dim(
    om,
    x: float,
    r_min: float = 1e-6,
    r_max: float = 1e-2,
    scales_per_decade: int = 4,
    min_atoms: int = 8,
) -> LocalDimEstimate:
    """Local dimension brackets of ``om`` at ``x``.

    ``om`` needs ``mass_ball(x, r)`` and ``total``; ``count_ball`` is used for
    the sparse-scale flags when available.
    """
    radii = radius_grid(r_min, r_max, scales_per_decade)
    masses = np.asarray([om.mass_ball(x, r) for r in radii], dtype=np.float64)
    usable = (masses > 0) & (masses < om.total)
    ratios = np.full(radii.size, np.nan)
    ratios[usable] = np.log(masses[usable]) / np.log(radii[usable])
    if hasattr(om, "count_ball"):
        sparse = np.asarray([om.count_ball(x, r) for r in radii]) < min_atoms
    else:
        sparse = np.zeros(radii.size, dtype=bool)
    idx = np.flatnonzero(usable)
    n = idx.size
    if n:
        fine = idx[: (n + 1) // 2]
        lower, upper = float(ratios[fine].min()), float(ratios[fine].max())
    else:
        lower = upper = float("nan")
    return LocalDimEstimate(float(x), radii, masses, ratios, usable, lower, upper, int(n), n < 4, sparse)


@dataclass(frozen=True)
class PowerLawMeasure:
    """Synthetic measure with mu(B(x, r)) = r**d exactly, for estimator checks."""

    d: float
    total: float = math.inf

    def mass_ball(self, x, r):
        return r**self.d


# ---------------------------------------------------------------------------
# box counting


@numba.njit(cache=True, error_model="numpy")
def _box_update(v, j_max, shifts, last, counts):
    scale = 2.0**j_max
    nlev = shifts.size
    for x in v:
        c = np.int64(np.floor(x * scale))
        if c != last[nlev - 1]:
            for l in range(nlev):
                cl = c >> shifts[l]
                if cl != last[l]:
                    last[l] = cl
                    counts[l] += 1


class BoxCounter:
    """Streaming count of occupied dyadic boxes for non-decreasing input.

    Feed chunks in increasing order; ``counts[i]`` is the number of boxes of
    side 2**-js[i] met so far.
    """

    def __init__(self, j_min: int, j_max: int):
        if not (0 <= j_min <= j_max <= 52):
            raise ParameterError("need 0 <= j_min <= j_max <= 52")
        self.js = np.arange(j_min, j_max + 1)
        self._shifts = (j_max - self.js).astype(np.int64)
        self._last = np.full(self.js.size, np.iinfo(np.int64).min, dtype=np.int64)
        self.counts = np.zeros(self.js.size, dtype=np.int64)
        self._prev = -math.inf

    def update(self, values: np.ndarray) -> None:
        v = np.ascontiguousarray(values, dtype=np.float64)
        if v.size == 0:
            return
        if v[0] < self._prev or np.any(np.diff(v) < 0) or v[0] < 0:
            raise ParameterError("BoxCounter needs non-negative, non-decreasing input")
        self._prev = float(v[-1])
        _box_update(v, int(self.js[-1]), self._shifts, self._last, self.counts)

    def result(self) -> BoxDimension:
        return fit_box_dimension(self.js, self.counts)


@dataclass
class BoxDimension:
    slope: float
    intercept: float
    stderr: float
    ci95: tuple[float, float]
    js: np.ndarray
    counts: np.ndarray


def fit_box_dimension(js: np.ndarray, counts: np.ndarray) -> BoxDimension:
    """Least-squares slope of log2(count) against j with a t-based 95% band."""
    js = np.asarray(js, dtype=np.float64)
    y = np.log2(np.maximum(np.asarray(counts, dtype=np.float64), 1.0))
    if js.size < 2:
        raise ParameterError("need at least two scales")
    if np.all(y == y[0]):
        return BoxDimension(0.0, float(y[0]), 0.0, (0.0, 0.0), js, np.asarray(counts))
    fit = stats.linregress(js, y)
    half = float(stats.t.ppf(0.975, js.size - 2) * fit.stderr) if js.size > 2 else float("nan")
    return BoxDimension(float(fit.slope), float(fit.intercept), float(fit.stderr),
                        (float(fit.slope) - half, float(fit.slope) + half), js, np.asarray(counts))


def box_dimension(values: Sequence[float] | np.ndarray, j_min: int, j_max: int) -> BoxDimension:
    """Box-counting slope of a finite set of non-negative levels over j_min..j_max."""
    bc = BoxCounter(j_min, j_max)
    bc.update(np.sort(np.asarray(values, dtype=np.float64)))
    return bc.result()


@dataclass
class ImageDimension:
    predicted: tuple[float, float]
    measured: BoxDimension
    tol: float

    @property
    def inside(self) -> bool:
        lo, hi = self.predicted
        return lo - self.tol <= self.measured.slope <= hi + self.tol


def image_dim_bounds(
    path: JumpPath, beta: BetaFunction, E: tuple[float, float], j_min: int, j_max: int, tol: float = 0.1
) -> ImageDimension:
    """Predicted [beta(M_a), beta(M_b-)] for E = [a, b] against the box dimension of M(E).

    The image of the truncated path is the finite set of its values on E:
    M_a and the post-jump values at the jump times in (a, b].
    """
    a, b = E
    if not (0.0 <= a < b <= path.horizon):
        raise ParameterError("E must be a non-trivial subinterval of [0, horizon]")
    lo, hi = float(beta(path.eval(a))), float(beta(path.eval_left(b)))
    i = np.searchsorted(path.times, a, side="right")
    j = np.searchsorted(path.times, b, side="right")
    values = np.concatenate(([path.eval(a)], path.values_after[i:j]))
    return ImageDimension((lo, hi), box_dimension(values, j_min, j_max), tol)


# ---------------------------------------------------------------------------
# typical points


@dataclass
class TypicalBehavior:
    times: np.ndarray
    beta_values: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    median_abs_dev: float
    frac_upper_ok: float
    tol: float


def typical_behavior_report(
    path: JumpPath,
    om,
    beta: BetaFunction,
    n_samples: int,
    seed: int = 0,
    tol: float = 0.1,
    **window,
) -> TypicalBehavior:
    """Compare local dimensions at M_t with beta(M_t) for uniform random t.

    Reports the median of |lower_est - beta(M_t)| and the fraction of samples
    with upper_est <= 2 beta(M_t) + tol.
    """
    rng = np.random.default_rng(seed)
    ts = np.sort(rng.uniform(0.0, path.horizon, n_samples))
    xs = path.eval(ts)
    bv = beta(xs)
    est = [local_dim(om, x, **window) for x in np.atleast_1d(xs)]
    lower = np.array([e.lower_est for e in est])
    upper = np.array([e.upper_est for e in est])
    ok = np.isfinite(lower)
    mad = float(np.median(np.abs(lower[ok] - bv[ok]))) if ok.any() else float("nan")
    frac = float(np.mean(upper[ok] <= 2 * bv[ok] + tol)) if ok.any() else float("nan")
    return TypicalBehavior(ts, bv, lower, upper, mad, frac, tol)
