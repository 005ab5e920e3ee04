"""Realizations of the Poisson random measure N(dt, dz) with intensity dt dz / z**2.

Only the part of the measure living on [0, horizon] x (z_min, 1] is ever
simulated: the intensity is infinite near z = 0, so the truncation level is a
mandatory, explicit parameter that every downstream report carries.

Random streams
--------------
All sampling uses NumPy's ``PCG64`` bit generator seeded through
``numpy.random.SeedSequence``.  A realization is determined by its integer seed:
event times come from one child stream (exponential gaps), jump sizes from a
sibling stream (inverse CDF of uniforms).  Both streams are consumed strictly
sequentially, so the output does not depend on the internal chunk size.
Per-trial seeds are derived with :func:`trial_seed`.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterator, Sequence

import numba
import numpy as np

from .errors import ParameterError

CHUNK = 1 << 20


def trial_seed(base_seed: int, trial: int) -> int:
    """Mix a base seed and a trial index into an independent 63-bit seed."""
    if base_seed < 0 or trial < 0:
        raise ParameterError("seeds and trial indices must be non-negative")
    state = np.random.SeedSequence([int(base_seed), int(trial)]).generate_state(1, np.uint64)
    return int(state[0] >> np.uint64(1))


def _band_generators(seed: int, band: int) -> tuple[np.random.Generator, np.random.Generator]:
    if seed < 0:
        raise ParameterError("seed must be a non-negative integer")
    root = np.random.SeedSequence(int(seed), spawn_key=(int(band),))
    gaps, sizes = root.spawn(2)
    return np.random.Generator(np.random.PCG64(gaps)), np.random.Generator(np.random.PCG64(sizes))


@numba.njit(cache=True, error_model="numpy")
def _finish_chunk(e, u, carry, limit, t_lo, z_lo, rate):
    """Running sum of gaps, cut at ``limit``, mapped to (t, z)."""
    n = e.size
    t = np.empty(n)
    s = carry
    k = 0
    while k < n:
        s += e[k]
        if s > limit:
            break
        t[k] = s
        k += 1
    z = np.empty(k)
    inv_lo = 1.0 / z_lo
    for i in range(k):
        t[i] = t_lo + t[i] / rate
        # u' = 1 - u lies in (0, 1], which puts z in (z_lo, z_hi]
        z[i] = 1.0 / (inv_lo - (1.0 - u[i]) * rate)
    return t[:k], z, s


def _iter_band(
    t_lo: float, t_hi: float, z_lo: float, z_hi: float, seed: int, band: int, chunk: int
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield time-sorted chunks of N restricted to [t_lo, t_hi] x (z_lo, z_hi].

    Times are partial sums of unit exponential gaps rescaled by the rate, so
    the count is Poisson and the times are uniform order statistics.  Only
    the uniforms of accepted events are consumed in non-final chunks, which
    keeps the output independent of ``chunk``.
    """
    rate = 1.0 / z_lo - 1.0 / z_hi
    limit = (t_hi - t_lo) * rate
    if limit <= 0.0:
        return
    gen_t, gen_z = _band_generators(seed, band)
    carry = 0.0
    while True:
        e = gen_t.standard_exponential(chunk)
        u = gen_z.random(chunk)
        t, z, carry = _finish_chunk(e, u, carry, limit, t_lo, z_lo, rate)
        yield t, z
        if t.size < chunk:
            return


@numba.njit(cache=True)
def _strictly_increasing(t):
    for i in range(1, t.size):
        if not t[i] > t[i - 1]:
            return False
    return True


def _tie_order(t: np.ndarray, z: np.ndarray) -> np.ndarray | None:
    """Permutation sorting by (t ascending, z descending, generation order)."""
    if _strictly_increasing(t):
        return None
    return np.lexsort((-z, t))


@dataclass(frozen=True)
class Layer:
    """Time window [t_lo, t_hi] on which every jump with z > z_floor is kept."""

    t_lo: float
    t_hi: float
    z_floor: float


@dataclass(frozen=True, eq=False)
class PointProcess:
    """A finite, time-sorted realization {(T_n, Z_n)} of N.

    ``layers`` describes the simulated region.  The common case is a single
    layer ``[0, horizon] x (z_min, 1]``; refined realizations keep finer jumps
    only inside nested windows (see :func:`sample_ppp_layered`).
    """

    horizon: float
    z_min: float
    t: np.ndarray
    z: np.ndarray
    seed: int | None = None
    layers: tuple[Layer, ...] = field(default=())

    def __post_init__(self) -> None:
        t = np.ascontiguousarray(self.t, dtype=np.float64)
        z = np.ascontiguousarray(self.z, dtype=np.float64)
        if t.shape != z.shape or t.ndim != 1:
            raise ParameterError("t and z must be 1-d arrays of equal length")
        t.setflags(write=False)
        z.setflags(write=False)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "z", z)
        if not self.layers:
            object.__setattr__(self, "layers", (Layer(0.0, float(self.horizon), float(self.z_min)),))

    def __len__(self) -> int:
        return int(self.t.size)

    @property
    def events(self) -> np.ndarray:
        """Events as an (n, 2) array of (t, z) rows."""
        return np.column_stack((self.t, self.z))

    @cached_property
    def log_z(self) -> np.ndarray:
        """Natural log of the sizes, computed once and shared by path builders."""
        out = np.log(self.z)
        out.setflags(write=False)
        return out

    @property
    def is_uniform(self) -> bool:
        return len(self.layers) == 1

    def floor_at(self, t: float) -> float:
        """Truncation level in force at time ``t`` (finest covering layer)."""
        level = 1.0
        for layer in self.layers:
            if layer.t_lo <= t <= layer.t_hi:
                level = min(level, layer.z_floor)
        return level

    def restrict_sizes(self, z_lo: float) -> PointProcess:
        """Drop every event with z <= z_lo (same seed, coarser truncation)."""
        if not z_lo >= self.z_min:
            raise ParameterError("can only coarsen the truncation level")
        keep = self.z > z_lo
        layers = tuple(Layer(l.t_lo, l.t_hi, max(l.z_floor, z_lo)) for l in self.layers)
        return PointProcess(self.horizon, float(z_lo), self.t[keep], self.z[keep], self.seed, layers)


def _chunk_for(width: float, z_lo: float, z_hi: float) -> int:
    """Chunk length that covers the whole band with overwhelming probability."""
    mean = width * (1.0 / z_lo - 1.0 / z_hi)
    return int(min(max(mean + 8.0 * np.sqrt(mean) + 64.0, 64.0), 1 << 26))


def _check_common(horizon: float, z_min: float) -> None:
    if not (0.0 < z_min < 1.0):
        raise ParameterError(f"z_min must lie in (0, 1), got {z_min!r}")
    if not horizon >= 0.0 or not np.isfinite(horizon):
        raise ParameterError(f"horizon must be finite and >= 0, got {horizon!r}")


def iter_ppp_chunks(
    horizon: float, z_min: float, seed: int, chunk: int = CHUNK
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Stream the realization of :func:`sample_ppp` in time-sorted chunks.

    Concatenating the chunks reproduces ``sample_ppp(horizon, z_min, seed)``
    bit for bit (up to the probability-zero tie reordering), which lets
    experiments run at truncation levels whose full event list would not fit in
    memory.
    """
    _check_common(horizon, z_min)
    yield from _iter_band(0.0, float(horizon), float(z_min), 1.0, seed, 0, chunk)


def sample_ppp(horizon: float, z_min: float, seed: int) -> PointProcess:
    """Sample N on [0, horizon] x (z_min, 1].

    The event count is Poisson with mean ``horizon * (1/z_min - 1)``; times are
    uniform order statistics; sizes have distribution function
    ``(1/z_min - 1/z) / (1/z_min - 1)``.
    """
    _check_common(horizon, z_min)
    parts = list(_iter_band(0.0, float(horizon), float(z_min), 1.0, seed, 0, _chunk_for(horizon, z_min, 1.0)))
    if len(parts) == 1:
        t, z = parts[0]
    elif parts:
        t = np.concatenate([p[0] for p in parts])
        z = np.concatenate([p[1] for p in parts])
    else:
        t = np.empty(0)
        z = np.empty(0)
    order = _tie_order(t, z)
    if order is not None:
        t, z = t[order], z[order]
    return PointProcess(float(horizon), float(z_min), t, z, int(seed))


def sample_ppp_layered(horizon: float, seed: int, layers: Sequence[Layer]) -> PointProcess:
    """Sample N on a union of nested rectangles.

    ``layers[0]`` must cover [0, horizon]; each further layer must sit inside
    the previous one in time and have a strictly smaller ``z_floor``.  Band k
    (sizes in ``(layers[k].z_floor, layers[k-1].z_floor]``) is sampled on the
    window of layer k only, from its own independent stream, so the result is
    exactly N restricted to the union of the layer rectangles.
    """
    if not layers:
        raise ParameterError("at least one layer is required")
    first = layers[0]
    _check_common(horizon, first.z_floor)
    if first.t_lo > 0.0 or first.t_hi < horizon:
        raise ParameterError("the first layer must cover [0, horizon]")
    clipped = [Layer(0.0, float(horizon), float(first.z_floor))]
    for layer in layers[1:]:
        prev = clipped[-1]
        lo, hi = max(layer.t_lo, 0.0), min(layer.t_hi, horizon)
        if not (0.0 < layer.z_floor < prev.z_floor):
            raise ParameterError("layer floors must decrease strictly and stay positive")
        if lo < prev.t_lo or hi > prev.t_hi or lo > hi:
            raise ParameterError("layer windows must be nested")
        clipped.append(Layer(float(lo), float(hi), float(layer.z_floor)))
    ts, zs = [], []
    upper = 1.0
    for k, layer in enumerate(clipped):
        n_chunk = _chunk_for(layer.t_hi - layer.t_lo, layer.z_floor, upper)
        for t, z in _iter_band(layer.t_lo, layer.t_hi, layer.z_floor, upper, seed, k, n_chunk):
            ts.append(t)
            zs.append(z)
        upper = layer.z_floor
    t = np.concatenate(ts) if ts else np.empty(0)
    z = np.concatenate(zs) if zs else np.empty(0)
    order = np.lexsort((-z, t))
    return PointProcess(float(horizon), clipped[-1].z_floor, t[order], z[order], int(seed), tuple(clipped))


def from_events(horizon: float, z_min: float, events: Sequence[tuple[float, float]]) -> PointProcess:
    """Build a PointProcess from explicit (t, z) pairs (tests, hand-built cases)."""
    _check_common(horizon, z_min)
    arr = np.asarray(events, dtype=np.float64).reshape(-1, 2)
    t, z = arr[:, 0], arr[:, 1]
    if np.any((t < 0) | (t > horizon)):
        raise ParameterError("event times must lie in [0, horizon]")
    if np.any((z <= z_min) | (z > 1.0)):
        raise ParameterError("event sizes must lie in (z_min, 1]")
    order = np.lexsort((-z, t))
    return PointProcess(float(horizon), float(z_min), t[order], z[order], None)


def count_window(pp: PointProcess, t_lo: float, t_hi: float, z_lo: float, z_hi: float) -> int:
    """N([t_lo, t_hi) x [z_lo, z_hi)) for this realization."""
    if t_hi <= t_lo or z_hi <= z_lo:
        return 0
    i = int(np.searchsorted(pp.t, t_lo, side="left"))
    j = int(np.searchsorted(pp.t, t_hi, side="left"))
    zz = pp.z[i:j]
    return int(np.count_nonzero((zz >= z_lo) & (zz < z_hi)))


def count_bins(pp: PointProcess, width: float, n_bins: int, z_lo: float, z_hi: float = np.inf) -> np.ndarray:
    """Counts of events with z in [z_lo, z_hi) in the bins [k w, (k+1) w), k < n_bins."""
    sel = (pp.z >= z_lo) & (pp.z < z_hi)
    k = np.floor(pp.t[sel] / width).astype(np.int64)
    k = k[(k >= 0) & (k < n_bins)]
    return np.bincount(k, minlength=n_bins)


def band_index(z: np.ndarray) -> np.ndarray:
    """Dyadic band j with z in [2**(-j-1), 2**(-j)); z == 1 maps to -1."""
    _, e = np.frexp(np.asarray(z, dtype=np.float64))
    return -e.astype(np.int64)


@dataclass
class BandCensus:
    """Dyadic-band statistics of one realization at depth J.

    ``per_band[j]`` is #P_j.  Per-interval arrays refer to the 2**J intervals of
    length 2**-J.  ``eta_obs`` and ``eps_obs`` are the observed slacks: eta_obs
    is the smallest eta for which every interval holds a jump of band
    <= J (1 + eta); eps_obs collects the log-deviations of the counts from
    their nominal sizes.
    """

    J: int
    z_min: float
    per_band: np.ndarray
    eta_obs: float
    coarse_counts: np.ndarray
    very_coarse_counts: np.ndarray
    fine_band_max: dict[int, int]
    eps_obs: dict[str, float]


def band_census(pp: PointProcess, J: int) -> BandCensus:
    """Band counts #P_j and per-interval counts at depth J."""
    if J < 1:
        raise ParameterError("J must be >= 1")
    j_deep = int(np.floor(-np.log2(pp.z_min))) - 1
    while 2.0 ** (-j_deep - 1) < pp.z_min:
        j_deep -= 1
    if J > j_deep:
        raise ParameterError(f"J = {J} too deep for z_min = {pp.z_min} (max {j_deep})")
    j = band_index(pp.z)
    inside = (j >= 0) & (j <= j_deep)
    per_band = np.bincount(j[inside], minlength=j_deep + 1)

    n_int = max(1, int(np.ceil(pp.horizon * 2.0**J)))
    k = np.minimum(np.floor(pp.t * 2.0**J).astype(np.int64), n_int - 1)
    kj, jj = k[inside], j[inside]

    j_min = np.full(n_int, np.iinfo(np.int64).max)
    np.minimum.at(j_min, kj, jj)
    if np.any(j_min == np.iinfo(np.int64).max):
        eta = float("inf")
    else:
        eta = max(0.0, float(j_min.max()) / J - 1.0)
    coarse_cut = J * (1.0 + eta) if np.isfinite(eta) else float(j_deep)
    coarse = np.bincount(kj[jj <= coarse_cut], minlength=n_int)
    very_coarse = np.bincount(kj[jj <= J / 3.0], minlength=n_int)

    fine: dict[int, int] = {}
    for jf in range(int(np.ceil(coarse_cut)), j_deep + 1):
        if jf < coarse_cut:
            continue
        counts = np.bincount(kj[jj == jf], minlength=n_int)
        fine[jf] = int(counts.max()) if counts.size else 0

    eps: dict[str, float] = {}
    nJ = int(per_band[J])
    eps["band_size"] = abs(np.log2(nJ) / J - 1.0) if nJ > 0 else float("inf")
    cmax = int(coarse.max()) if coarse.size else 0
    eps["coarse_max"] = np.log2(cmax) / J if cmax > 0 else 0.0
    fine_eps = [np.log2(m * 2.0**J) / jf - 1.0 for jf, m in fine.items() if m > 0]
    eps["fine_max"] = max(fine_eps) if fine_eps else 0.0
    return BandCensus(J, pp.z_min, per_band, eta, coarse, very_coarse, fine, eps)


def write_csv(pp: PointProcess, path: str | Path) -> None:
    """Write ``t,z`` rows with 17 significant digits (exact round trip)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "z"])
        for t, z in zip(pp.t.tolist(), pp.z.tolist()):
            w.writerow([format(t, ".17g"), format(z, ".17g")])


def read_csv(path: str | Path, horizon: float, z_min: float) -> PointProcess:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["t", "z"]:
        raise ParameterError(f"{path}: expected header 't,z'")
    data = np.array([[float(a), float(b)] for a, b in rows[1:]], dtype=np.float64).reshape(-1, 2)
    return PointProcess(float(horizon), float(z_min), data[:, 0], data[:, 1], None)
