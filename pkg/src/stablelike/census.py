"""Scale ladders and jump-configuration statistics of one Poisson realization.

Interval families live on the grid J_k = [k eta, (k + 1) eta), k = 0 ..
floor(H / eta) - 1.  Enlargements and flanks reaching outside that range see
empty intervals.  Every probability below is derived from the intensity
dt dz / z**2: a size band [a, b) has mass 1/a - 1/b per unit time.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from decimal import Decimal, localcontext, MIN_EMIN, MAX_EMAX
from typing import Iterable, Sequence

import numba
import numpy as np
from scipy import stats

from .errors import ParameterError
from .ppp import PointProcess, count_bins
from .process import BetaFunction, JumpPath, build_stable_like

_PREC = 60


# ---------------------------------------------------------------------------
# ladders


@dataclass(frozen=True)
class ScaleLadder:
    """eta_l = eta_{l-1} ** (1 + eps), stopped at the first level <= floor.

    ``exact`` holds the levels as 60-digit decimals; ``levels`` are their
    float values (0.0 when below the float range).
    """

    eta0: float
    eps: float
    floor: Decimal
    exact: tuple[Decimal, ...]

    @property
    def levels(self) -> np.ndarray:
        return np.array([float(x) for x in self.exact])

    @property
    def L(self) -> int:
        """Index of the last level."""
        return len(self.exact) - 1

    def __len__(self) -> int:
        return len(self.exact)

    def next_level(self, ell: int) -> float:
        """eta_{ell+1}, continuing the recursion one step past the last level."""
        if ell < self.L:
            return float(self.exact[ell + 1])
        with localcontext() as ctx:
            ctx.prec, ctx.Emin, ctx.Emax = _PREC, MIN_EMIN, MAX_EMAX
            return float(self.exact[ell] ** (Decimal(1) + Decimal(repr(self.eps))))


def desk_ladder(
    eta0: float,
    eps: float,
    floor: float | None = None,
    log_floor: float | None = None,
    max_levels: int = 64,
) -> ScaleLadder:
    """Ladder from ``eta0`` down to ``floor`` (or to exp(log_floor)).

    Raises ParameterError if more than ``max_levels`` steps would be needed.
    """
    if not eps > 0:
        raise ParameterError("eps must be > 0")
    if not (0.0 < eta0 < 1.0):
        raise ParameterError("eta0 must lie in (0, 1)")
    if (floor is None) == (log_floor is None):
        raise ParameterError("give exactly one of floor and log_floor")
    with localcontext() as ctx:
        ctx.prec, ctx.Emin, ctx.Emax = _PREC, MIN_EMIN, MAX_EMAX
        fl = Decimal(repr(floor)) if floor is not None else Decimal(repr(log_floor)).exp()
        e0 = Decimal(repr(eta0))
        if not (0 < fl < e0):
            raise ParameterError("need 0 < floor < eta0")
        power = Decimal(1) + Decimal(repr(eps))
        levels = [e0]
        while levels[-1] > fl:
            if len(levels) > max_levels:
                raise ParameterError(f"floor unreachable within {max_levels} levels")
            levels.append(levels[-1] ** power)
    if len(levels) < 2:
        raise ParameterError("ladder needs at least two levels")
    return ScaleLadder(float(eta0), float(eps), fl, tuple(levels))


# ---------------------------------------------------------------------------
# closed forms


@dataclass(frozen=True)
class ConfigProbabilities:
    p: float
    q: float
    frak_p: float
    frak_q: float
    underflow: bool = False


def config_probabilities(eta: float, eta_next: float, gamma: float) -> ConfigProbabilities:
    """Zero-jump probability p and double-jump probability q on one interval.

    p = exp(-3 eta (eta_next**(-1/gamma) - eta**(-1/gamma))),
    q = (frak_q exp(-frak_q))**2 with frak_q = eta**(1 - 1/gamma).
    Values below the float range come back as 0 with ``underflow`` set.
    """
    if not (0.0 < eta_next < eta < 1.0) or gamma <= 0:
        raise ParameterError("need 0 < eta_next < eta < 1 and gamma > 0")
    g = 1.0 / gamma
    with np.errstate(over="ignore"):
        frak_p = 3.0 * eta * (eta_next**-g - eta**-g)
        frak_q = eta ** (1.0 - g)
    under = False
    p = math.exp(-frak_p) if frak_p < 745.0 else 0.0
    under |= p == 0.0
    if not math.isfinite(frak_q) or frak_q > 700.0:
        q = 0.0
    else:
        q = (frak_q * math.exp(-frak_q)) ** 2
    under |= q == 0.0
    return ConfigProbabilities(p, q, frak_p, frak_q, under)


def poisson_tail(mean, k: int):
    """P(Poisson(mean) >= k)."""
    return stats.poisson.sf(k - 1, mean)


# ---------------------------------------------------------------------------
# interval families


def _n_intervals(horizon: float, eta: float) -> int:
    return int(math.floor(horizon / eta * (1 + 1e-12)))


def _shifted(c: np.ndarray, d: int) -> np.ndarray:
    """c[k + d] with zeros outside the range."""
    out = np.zeros_like(c)
    if d > 0:
        out[:-d] = c[d:]
    elif d < 0:
        out[-d:] = c[:d]
    else:
        out[:] = c
    return out


def _check_band(pp: PointProcess, z_lo: float) -> None:
    if not z_lo > pp.z_min:
        raise ParameterError(f"size band starting at {z_lo:.3g} reaches below z_min = {pp.z_min:.3g}")


def zero_jump_mask(pp: PointProcess, eta: float, eta_next: float, gamma: float) -> np.ndarray:
    """Boolean mask over J_k: no jump of size in [eta_next**(1/g), eta**(1/g)) in the enlargement."""
    lo, hi = eta_next ** (1.0 / gamma), eta ** (1.0 / gamma)
    _check_band(pp, lo)
    n = _n_intervals(pp.horizon, eta)
    c = count_bins(pp, eta, n, lo, hi)
    return (_shifted(c, -1) + c + _shifted(c, 1)) == 0


def double_jump_mask(pp: PointProcess, eta: float, gamma: float) -> np.ndarray:
    """Boolean mask over J_k: J_{k-2} and J_{k+2} each hold exactly one jump in [eta**(1/g)/2, eta**(1/g))."""
    hi = eta ** (1.0 / gamma)
    _check_band(pp, hi / 2.0)
    n = _n_intervals(pp.horizon, eta)
    c = count_bins(pp, eta, n, hi / 2.0, hi)
    return (_shifted(c, -2) == 1) & (_shifted(c, 2) == 1)


def zero_jump_family(pp: PointProcess, ladder: ScaleLadder, ell: int, gamma: float) -> np.ndarray:
    """Indices k of the level-ell zero-jump intervals."""
    return np.flatnonzero(zero_jump_mask(pp, float(ladder.exact[ell]), ladder.next_level(ell), gamma))


def double_jump_family(pp: PointProcess, ladder: ScaleLadder, ell: int, gamma: float) -> np.ndarray:
    """Indices k of the level-ell double-jump intervals."""
    return np.flatnonzero(double_jump_mask(pp, float(ladder.exact[ell]), gamma))


# ---------------------------------------------------------------------------
# census reports


@dataclass
class CensusReport:
    """Counts of one realization at one scale with closed-form expectations."""

    kind: str
    params: dict
    count: int
    expected: float
    expected_uniform: float | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def double_jump_limsup_census(
    pp: PointProcess, n: int, gamma: float, eps: float, k_range: tuple[int, int] | None = None
) -> CensusReport:
    """#E_n(gamma, eps): dyadic k whose 3-interval enlargement holds >= 2 jumps of size >= 2**(-n/(gamma-eps)).

    ``expected`` accounts for the two boundary intervals, whose enlargement
    has only two members; ``expected_uniform`` is 2**n P(Poisson(3 m) >= 2)
    with m = 2**-n (2**(n/(gamma-eps)) - 1).
    """
    if n < 1 or not gamma - eps > 0:
        raise ParameterError("need n >= 1 and gamma > eps")
    theta = 2.0 ** (-n / (gamma - eps))
    _check_band(pp, theta)
    width = 2.0**-n
    N = _n_intervals(pp.horizon, width)
    c = count_bins(pp, width, N, theta, np.inf)
    enlarged = _shifted(c, -1) + c + _shifted(c, 1)
    k0, k1 = (0, N) if k_range is None else k_range
    if not (0 <= k0 <= k1 <= N):
        raise ParameterError("k_range outside the dyadic grid")
    hit = enlarged[k0:k1] >= 2
    m = width * (1.0 / theta - 1.0)
    ks = np.arange(k0, k1)
    members = np.where((ks == 0) | (ks == N - 1), 2.0, 3.0) if N > 1 else np.ones(k1 - k0)
    expected = float(np.sum(poisson_tail(members * m, 2)))
    uniform = float((k1 - k0) * poisson_tail(3 * m, 2))
    return CensusReport(
        "double_jump_limsup",
        {"n": n, "gamma": gamma, "eps": eps, "threshold": theta, "z_min": pp.z_min, "k_range": [k0, k1]},
        int(hit.sum()),
        expected,
        uniform,
    )


def growth_slope(ns: Sequence[int], means: Sequence[float]) -> float:
    """Least-squares slope of log2(mean count) against n."""
    return float(stats.linregress(np.asarray(ns, float), np.log2(np.asarray(means, float))).slope)


# ---------------------------------------------------------------------------
# random trees


@dataclass
class Tree:
    """Nested zero-jump survivors below a root interval.

    ``survivors[l]`` holds the level-l grid indices (level 0 is the root).
    ``parents[l][i]`` is the index into ``survivors[l-1]`` of the interval
    containing ``survivors[l][i]``.
    """

    root: int
    gamma: float
    levels: np.ndarray
    survivors: list[np.ndarray]
    parents: list[np.ndarray]

    @property
    def leaves(self) -> int:
        return int(self.survivors[-1].size)

    @property
    def counts(self) -> list[int]:
        return [int(s.size) for s in self.survivors]

    def bound(self) -> int:
        """floor(eta_top / (2 eta_bottom))."""
        return int(math.floor(self.levels[0] / (2.0 * self.levels[-1])))


def grow_tree(pp: PointProcess, root: int, ladder: ScaleLadder, gamma: float) -> Tree:
    """Tree of zero-jump intervals nested in the root J_root at level 0.

    Level l >= 1 keeps the zero-jump intervals of length eta_l (band up to
    eta_{l+1}) that sit inside one surviving level-(l-1) interval.  The grids
    are not nested, so straddling intervals are dropped.
    """
    levels = ladder.levels
    n0 = _n_intervals(pp.horizon, levels[0])
    if not 0 <= root < n0:
        raise ParameterError("root index outside the level-0 grid")
    survivors = [np.array([root])]
    parents = [np.array([-1])]
    for ell in range(1, len(levels)):
        eta = levels[ell]
        prev = survivors[-1]
        prev_eta = levels[ell - 1]
        lo = prev * prev_eta
        hi = (prev + 1) * prev_eta
        mask = zero_jump_mask(pp, eta, ladder.next_level(ell), gamma)
        kept, owner = [], []
        for i, (a, b) in enumerate(zip(lo, hi)):
            k_first = int(math.ceil(a / eta - 1e-9))
            k_last = int(math.floor(b / eta + 1e-9)) - 1
            ks = np.arange(max(k_first, 0), min(k_last, mask.size - 1) + 1)
            ks = ks[(ks * eta >= a * (1 - 1e-12)) & ((ks + 1) * eta <= b * (1 + 1e-12))]
            ks = ks[mask[ks]]
            kept.append(ks)
            owner.append(np.full(ks.size, i))
        survivors.append(np.concatenate(kept) if kept else np.zeros(0, np.int64))
        parents.append(np.concatenate(owner) if owner else np.zeros(0, np.int64))
    return Tree(root, gamma, levels, survivors, parents)


# ---------------------------------------------------------------------------
# surrounded points


def surrounded_points(pp: PointProcess, t: float, gamma: float, eps: float, n_range: Iterable[int]) -> list[int]:
    """Scales n with a jump >= 2**(-n/(gamma-eps)) in (t - 2**-n, t] and another in (t, t + 2**-n]."""
    out = []
    for n in n_range:
        theta = 2.0 ** (-n / (gamma - eps))
        _check_band(pp, theta)
        h = 2.0**-n
        i0 = np.searchsorted(pp.t, t - h, side="right")
        i1 = np.searchsorted(pp.t, t, side="right")
        i2 = np.searchsorted(pp.t, t + h, side="right")
        if np.any(pp.z[i0:i1] >= theta) and np.any(pp.z[i1:i2] >= theta):
            out.append(int(n))
    return out


# ---------------------------------------------------------------------------
# concentration of compensated small jumps


@numba.njit(cache=True, error_model="numpy")
def _window_sup(x, b_ahead, times, h, n, delta, slack):
    """max over grid pairs s < t with t - s <= h of 2**(n/(delta (b + slack))) |X(s, t)|."""
    G = times.size
    best = 0.0
    for i in range(G - 1):
        acc = 0.0
        for j in range(i + 1, G):
            if times[j] - times[i] > h:
                break
            acc += x[j]
            stat = 2.0 ** (n / (delta * (b_ahead[j] + slack))) * abs(acc)
            if stat > best:
                best = stat
    return best


@dataclass
class ConcentrationReport:
    n: int
    delta: float
    threshold: float
    statistic: float
    exceeds: bool
    slack: float


def concentration_check(
    pp: PointProcess,
    beta: BetaFunction,
    n: int,
    delta: float,
    grid: Sequence[float],
    path: JumpPath | None = None,
) -> ConcentrationReport:
    """Scaled supremum of compensated small-jump increments over close grid pairs.

    X(s, t) = sum of M's jumps in (s, t] with z < 2**(-n/delta), minus the
    compensator integral of z**(1/beta(M_u-)) dz/z**2 over the simulated size
    range (z_min, 2**(-n/delta)).  The statistic is the supremum over
    0 < t - s <= 2**-n of 2**(n/(delta (beta(M_{t+2**-n}) + 2/n))) |X(s, t)|,
    compared with 6 n**2; the 2/n slack is dropped for constant beta.
    """
    if n < 1 or not delta > 1:
        raise ParameterError("need n >= 1 and delta > 1")
    theta = 2.0 ** (-n / delta)
    if not theta > pp.z_min:
        raise ParameterError(f"band edge {theta:.3g} is not above z_min = {pp.z_min:.3g}")
    g = np.ascontiguousarray(np.asarray(grid, dtype=np.float64))
    if g.ndim != 1 or g.size < 2 or np.any(np.diff(g) <= 0) or g[0] < 0 or g[-1] > pp.horizon:
        raise ParameterError("grid must be strictly increasing inside [0, horizon]")
    if path is None:
        path = build_stable_like(pp, beta)

    # raw small-jump sums per grid cell (g_{k-1}, g_k]
    small = np.where(pp.z < theta, path.jumps, 0.0)
    start = np.searchsorted(pp.t, g, side="right")
    csum = np.concatenate(([0.0], np.cumsum(small)))
    raw = np.zeros(g.size)
    raw[1:] = csum[start[1:]] - csum[start[:-1]]

    # compensator: piecewise-constant exponent between jumps
    def kernel(b):
        k = 1.0 / b - 1.0
        return (theta**k - pp.z_min**k) / k

    piece_t = np.concatenate(([0.0], path.times, [pp.horizon]))
    piece_b = beta(np.concatenate(([0.0], path.values_after)))
    rate = kernel(piece_b)
    cum = np.concatenate(([0.0], np.cumsum(rate * np.diff(piece_t))))

    def Lambda(t):
        k = np.clip(np.searchsorted(piece_t, t, side="right") - 1, 0, rate.size - 1)
        return cum[k] + rate[k] * (t - piece_t[k])

    lam = Lambda(g)
    comp = np.zeros(g.size)
    comp[1:] = np.diff(lam)
    x = raw - comp

    h = 2.0**-n
    b_ahead = beta(path.eval(np.minimum(g + h, pp.horizon)))
    slack = 0.0 if beta.is_constant else 2.0 / n
    stat = _window_sup(x, b_ahead, g, h, float(n), float(delta), slack)
    thr = 6.0 * n * n
    return ConcentrationReport(n, float(delta), thr, float(stat), bool(stat >= thr), slack)
