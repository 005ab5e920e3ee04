"""Seeded single-trial pipelines shared by the command line and the test suite.

Each function takes a trial seed (see :func:`stablelike.ppp.trial_seed`) and
returns plain numbers, so trials can run in any order or in parallel and be
aggregated afterwards.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .census import (
    config_probabilities,
    double_jump_limsup_census,
    double_jump_mask,
    grow_tree,
    ScaleLadder,
    surrounded_points,
    zero_jump_mask,
)
from .fractal import BoxCounter, BoxDimension, image_dim_bounds, local_dim, LocalDimEstimate
from .occupation import occupation_measure
from .ppp import iter_ppp_chunks, sample_ppp, sample_ppp_layered
from .process import (
    _power_kernel,
    BetaFunction,
    build_stable_like,
    build_subordinator,
    check_coupling,
    refinement_layers,
)

#: index map used by the non-constant experiments: beta spans [0.3, 0.7]
DEFAULT_BETA = BetaFunction.from_knots(0.3, [(0.0, 0.3), (0.5, 0.7)])


def coupling_trial(seed: int, beta: BetaFunction = DEFAULT_BETA, z_min: float = 1e-6, grid_size: int = 1000) -> int:
    """Number of violated grid pairs in the coupling chain for one path."""
    pp = sample_ppp(1.0, z_min, seed)
    report = check_coupling(pp, beta, np.linspace(0.0, 1.0, grid_size))
    return len(report.violations)


def stable_local_dim_trial(
    alpha: float,
    seed: int,
    z_min: float = 1e-8,
    r_min: float = 1e-6,
    r_max: float = 1e-2,
    scales_per_decade: int = 4,
    rel_bias: float = 0.2,
) -> LocalDimEstimate:
    """Local dimension of the alpha-stable occupation measure at L_U, U uniform.

    Jumps down to ``z_min`` are simulated only in nested windows around U,
    sized so that the discarded jumps move the path by at most about
    ``rel_bias * r`` at every probed scale r.
    """
    u = float(np.random.default_rng([seed, 1]).uniform())
    layers = refinement_layers(u, 1.0, z_min, alpha, alpha, r_min, rel_bias=rel_bias)
    pp = sample_ppp_layered(1.0, seed, layers)
    path = build_subordinator(pp, alpha)
    om = occupation_measure(path)
    return local_dim(om, path.eval(u), r_min, r_max, scales_per_decade)


def range_box_dim_trial(alpha: float, seed: int, z_min: float = 1e-6, j_min: int = 8, j_max: int = 16) -> BoxDimension:
    """Box dimension of the range of L^alpha on [0, 1], streamed chunk by chunk."""
    bc = BoxCounter(j_min, j_max)
    bc.update(np.zeros(1))
    level = 0.0
    for t, z in iter_ppp_chunks(1.0, z_min, seed):
        if z.size == 0:
            continue
        _, values = _power_kernel(np.log(z), np.full(z.size, float(alpha)), level)
        bc.update(values)
        level = float(values[-1])
    return bc.result()


def image_dim_trial(
    seed: int,
    beta: BetaFunction = DEFAULT_BETA,
    z_min: float = 1e-6,
    E: tuple[float, float] = (0.0, 1.0),
    j_min: int = 8,
    j_max: int = 16,
    tol: float = 0.1,
):
    pp = sample_ppp(1.0, z_min, seed)
    return image_dim_bounds(build_stable_like(pp, beta), beta, E, j_min, j_max, tol)


def census_counts(seed: int, ns, gamma: float = 1.5, eps: float = 0.1) -> np.ndarray:
    """#E_n(gamma, eps) for each n, all from one realization."""
    theta = 2.0 ** (-max(ns) / (gamma - eps))
    pp = sample_ppp(1.0, theta / 2.0, seed)
    return np.array([double_jump_limsup_census(pp, n, gamma, eps).count for n in ns])


@dataclass
class FrequencyCheck:
    observed: float
    expected: float
    stderr: float
    windows: int

    @property
    def z_score(self) -> float:
        return (self.observed - self.expected) / self.stderr if self.stderr > 0 else 0.0


def config_frequencies(
    eta: float, gamma: float, seed: int, n_windows: int = 100_000, eps: float = 0.1
) -> tuple[FrequencyCheck, FrequencyCheck]:
    """Frequencies of the zero-jump and double-jump configurations over independent windows.

    Zero-jump indicators of intervals 3 apart, and double-jump indicators of
    intervals 5 apart, depend on disjoint parts of the Poisson measure, so
    every third (fifth) interval of one long realization is an independent
    window.
    """
    eta_next = eta ** (1.0 + eps)
    probs = config_probabilities(eta, eta_next, gamma)
    z_lo = min(eta_next ** (1.0 / gamma), eta ** (1.0 / gamma) / 2.0)
    horizon = (5 * n_windows + 6) * eta
    pp = sample_ppp(horizon, z_lo * (1 - 1e-9), seed)
    zero = zero_jump_mask(pp, eta, eta_next, gamma)[1 : 1 + 3 * n_windows : 3]
    double = double_jump_mask(pp, eta, gamma)[2 : 2 + 5 * n_windows : 5]
    out = []
    for hits, p in ((zero, probs.p), (double, probs.q)):
        out.append(FrequencyCheck(float(hits.mean()), p, float(np.sqrt(p * (1 - p) / hits.size)), int(hits.size)))
    return out[0], out[1]


def tree_trial(seed: int, ladder: ScaleLadder, gamma: float, root: int = 1) -> int:
    """Leaf count of the tree rooted at J_root on a realization covering its neighborhood."""
    eta0 = float(ladder.levels[0])
    horizon = (root + 2) * eta0
    z_lo = ladder.next_level(ladder.L) ** (1.0 / gamma)
    pp = sample_ppp(horizon, z_lo * (1 - 1e-9), seed)
    return grow_tree(pp, root, ladder, gamma).leaves


@dataclass
class SurroundedTrial:
    hits: int
    upper_candidate: float
    upper_control: float


def surrounded_trial(
    seed: int,
    beta: BetaFunction = DEFAULT_BETA,
    z_min: float = 1e-6,
    gamma: float = 1.5,
    eps: float = 0.1,
    n_range=range(4, 12),
    min_hits: int = 3,
) -> SurroundedTrial | None:
    """Upper local dimension at the most surrounded time versus a uniform control time.

    Candidates are midpoints between consecutive jumps of size at least the
    finest threshold; the one with the most surrounded scales is kept if it has
    ``min_hits`` of them.
    """
    pp = sample_ppp(1.0, z_min, seed)
    path = build_stable_like(pp, beta)
    om = occupation_measure(path)
    theta = 2.0 ** (-max(n_range) / (gamma - eps))
    big = pp.t[pp.z >= theta]
    if big.size < 2:
        return None
    mids = 0.5 * (big[1:] + big[:-1])
    hits = [len(surrounded_points(pp, t, gamma, eps, n_range)) for t in mids]
    best = int(np.argmax(hits))
    if hits[best] < min_hits:
        return None
    u = float(np.random.default_rng([seed, 2]).uniform())
    cand = local_dim(om, path.eval(mids[best]))
    ctrl = local_dim(om, path.eval(u))
    return SurroundedTrial(hits[best], cand.upper_est, ctrl.upper_est)
