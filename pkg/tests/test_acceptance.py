"""Acceptance criteria at their stated sizes and tolerances.

Each test records a one-line verdict that is printed in the terminal summary.
Trials run in a process pool sized to the available cores.
"""
import os
import time
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from functools import partial

import numpy as np
import pytest
from scipy import stats

from stablelike.census import config_probabilities, desk_ladder, growth_slope
from stablelike.experiments import (
    DEFAULT_BETA,
    census_counts,
    config_frequencies,
    coupling_trial,
    image_dim_trial,
    range_box_dim_trial,
    stable_local_dim_trial,
    surrounded_trial,
    tree_trial,
)
from stablelike.fractal import (
    NEG_INF,
    IndexSet,
    exceptional_value,
    g_spectrum,
    general_spectrum_value,
    spectrum_envelope,
)
from stablelike.occupation import occupation_measure
from stablelike.ppp import sample_ppp, trial_seed
from stablelike.process import build_stable_like

from conftest import record

WORKERS = len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def pmap(fn, items):
    items = list(items)
    if WORKERS == 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(WORKERS) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * WORKERS))))


def seeds(base, n):
    return [trial_seed(base, k) for k in range(n)]


def _local_dim(alpha, seed):
    est = stable_local_dim_trial(alpha, seed)
    return est.lower_est, est.upper_est


def _range_slope(alpha, seed):
    return range_box_dim_trial(alpha, seed).slope


def _image_inside(seed):
    return image_dim_trial(seed).inside


def _tree(seed, gamma):
    return tree_trial(seed, desk_ladder(2.0**-8, 0.1, 2.0**-20), gamma)


def _surrounded(seed):
    res = surrounded_trial(seed)
    return None if res is None else (res.upper_candidate, res.upper_control)


# ---------------------------------------------------------------------------


def test_criterion_1_coupling_order():
    t0 = time.perf_counter()
    violations = pmap(coupling_trial, seeds(101, 1000))
    elapsed = time.perf_counter() - t0
    total = int(sum(violations))
    ok = total == 0 and elapsed < 60.0
    record(1, ok, f"{total} violations over 1000 paths x 1000-point grid, {elapsed:.1f} s on {WORKERS} core(s) (limit 60 s)")
    assert total == 0
    assert elapsed < 60.0, f"runtime {elapsed:.1f} s"


def test_criterion_2_stable_local_dimension():
    t0 = time.perf_counter()
    lines, ok = [], True
    for alpha in (0.3, 0.5, 0.7):
        res = np.array(pmap(partial(_local_dim, alpha), seeds(202, 200)))
        med = float(np.nanmedian(res[:, 0]))
        frac = float(np.mean((res[:, 1] >= alpha - 0.1) & (res[:, 1] <= 2 * alpha + 0.1)))
        good = abs(med - alpha) <= 0.1 and frac >= 0.95
        ok &= good
        lines.append(f"alpha={alpha}: median lower {med:.3f}, upper in range {frac:.2f}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 300
    record(2, ok, "; ".join(lines) + f"; {elapsed:.0f} s")
    assert ok, lines


def test_criterion_3_range_and_image_dimension():
    t0 = time.perf_counter()
    lines, ok = [], True
    for alpha in (0.3, 0.5, 0.7):
        med = float(np.median(pmap(partial(_range_slope, alpha), seeds(303, 100))))
        ok &= abs(med - alpha) <= 0.1
        lines.append(f"range alpha={alpha}: median slope {med:.3f}")
    inside = float(np.mean(pmap(_image_inside, seeds(304, 100))))
    ok &= inside >= 0.90
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 300
    record(3, ok, "; ".join(lines) + f"; image inside widened interval {inside:.2f}; {elapsed:.0f} s")
    assert ok, (lines, inside)


def test_criterion_4_census_growth():
    t0 = time.perf_counter()
    ns = list(range(6, 17))
    counts = np.array(pmap(partial(census_counts, ns=ns), seeds(404, 500)))
    slope = growth_slope(ns, counts.mean(axis=0))
    target = 2 / (1.5 - 0.1) - 1
    elapsed = time.perf_counter() - t0
    ok = abs(slope - target) <= 0.15 and elapsed < 600
    record(4, ok, f"slope {slope:.4f} vs {target:.4f} +- 0.15, {elapsed:.0f} s")
    assert ok


def test_criterion_5_configuration_probabilities():
    worst, ok = 0.0, True
    for i, eta in enumerate((2.0**-6, 2.0**-8, 2.0**-10)):
        for j, gamma in enumerate((1.2, 1.5, 1.8)):
            zero, double = config_frequencies(eta, gamma, seed=500 + 10 * i + j, n_windows=100_000)
            for f in (zero, double):
                worst = max(worst, abs(f.z_score))
                ok &= abs(f.z_score) <= 3.0
    record(5, ok, f"18 frequency checks, max |z| = {worst:.2f} (limit 3)")
    assert ok


def test_criterion_6_tree_growth():
    ladder = desk_ladder(2.0**-8, 0.1, 2.0**-20)
    bound = int(np.floor(ladder.levels[0] / (2 * ladder.levels[-1])))
    leaves = pmap(partial(_tree, gamma=1.8), seeds(606, 200))
    med = float(np.median(leaves))
    ok = med >= bound
    record(6, ok, f"median leaves {med:.0f} vs bound {bound} (gamma 1.8, default ladder)")
    assert ok


def test_criterion_7_spectrum_formulas():
    rng = np.random.default_rng(707)
    # identities
    for alpha in rng.uniform(0.01, 0.99, 200):
        assert g_spectrum(alpha, alpha) == pytest.approx(alpha, rel=1e-15)
        assert g_spectrum(alpha, 2 * alpha) == 0.0
        assert g_spectrum(alpha, 2 * alpha, "half_open") is NEG_INF
        for h in rng.uniform(0, 2.5, 20) * alpha:
            if h != 2 * alpha:
                a, b = g_spectrum(alpha, h), g_spectrum(alpha, h, "half_open")
                assert a == b or (a is NEG_INF and b is NEG_INF)
    # envelope vs grid search at step 1e-4
    worst = 0.0
    for _ in range(1000):
        k = rng.integers(1, 4)
        lo = rng.uniform(0.05, 0.9, k)
        I = IndexSet.union([(a, min(a + w, 0.95)) for a, w in zip(lo, rng.uniform(0, 0.2, k))])
        h = float(rng.uniform(0.05, 1.9))
        mode = "space" if rng.uniform() < 0.5 else "time"
        got = spectrum_envelope(h, I, mode).value
        # space: step 1e-4; time: the slope is 2/h, so the step shrinks with h
        step = 1e-4 if mode == "space" else 1e-4 * h / 2
        grid = np.concatenate([np.append(np.arange(a, b, step), b) for a, b in I.intervals])
        grid = grid[(grid > h / 2) & (grid <= h)]
        if grid.size == 0:
            assert got is NEG_INF
            continue
        vals = grid * (2 * grid / h - 1) if mode == "space" else 2 * grid / h - 1
        worst = max(worst, abs(got - vals.max()))
    assert worst < 1e-3
    # exceptional case table: (args) -> space value; time divides by b_before
    table = [
        ((0.7, 0.7, 0.3, True, False, 0.7, None), 0.0),
        ((0.7, 0.7, 0.3, True, True, 0.9, 0.6), NEG_INF),
        ((0.7, 0.7, 0.3, False, True, None, 0.6), NEG_INF),
        ((0.6, 0.7, 0.3, False, True, None, 0.6), 0.0),
        ((0.6, 0.7, 0.3, True, True, 0.7, 0.4), NEG_INF),
        ((0.6, 0.7, 0.3, True, False, 0.7, None), NEG_INF),
        ((0.6, 0.6, 0.3, True, True, 0.6, 0.5), 0.0),
        ((0.6, 0.6, 0.3, True, True, 0.8, 0.6), 0.0),
        ((0.6, 0.6, 0.3, True, True, 0.8, 0.5), NEG_INF),
        ((0.6, 0.6, 0.3, False, True, None, 0.6), 0.0),
        ((0.6, 0.6, 0.3, False, True, None, 0.5), NEG_INF),
        ((0.6, 0.6, 0.3, True, False, 0.6, None), 0.0),
        ((0.6, 0.6, 0.3, True, False, 0.8, None), NEG_INF),
        ((0.6, 0.6, 0.3, False, False, None, None), NEG_INF),
    ]
    for args, want in table:
        s, t = exceptional_value(*args), exceptional_value(*args, mode="time")
        if want is NEG_INF:
            assert s.value is NEG_INF and t.value is NEG_INF
        else:
            assert s.value == want and t.value == want / args[2]
    # general formula, exact
    assert [general_spectrum_value(x) for x in (1, Fraction(4, 3), 2)] == [1, Fraction(1, 2), 0]
    record(7, True, f"identities, 1000 envelope instances (max gap {worst:.1e}), {len(table)} case rows, exact values")


def test_criterion_8_occupation_oracle():
    worst_total = 0.0
    n_queries = 0
    for s in range(10):
        om = occupation_measure(build_stable_like(sample_ppp(1.0, 1e-4, trial_seed(808, s)), DEFAULT_BETA))
        ends = np.concatenate(([0.0], om.cumulative))
        rng = np.random.default_rng(s)
        for _ in range(1000):
            a, b = np.sort(rng.uniform(-0.05, 1.05 * om.levels[-1], 2))
            inside = np.flatnonzero((om.levels > a) & (om.levels < b))
            want = ends[inside[-1] + 1] - ends[inside[0]] if inside.size else 0.0
            assert om.mass_interval(a, b) == want
            n_queries += 1
        err = abs(float(np.sum(om.durations)) - om.total)
        assert err <= len(om) * np.spacing(om.total)
        assert om.cumulative[-1] == om.total
        worst_total = max(worst_total, err / (len(om) * np.spacing(om.total)))
    record(8, True, f"{n_queries} queries exact; total-mass error at most {worst_total:.3f} ulp per atom")


def test_criterion_9_mechanism_direction():
    res = [r for r in pmap(_surrounded, seeds(909, 200)) if r is not None]
    res = np.array(res)
    cand, ctrl = res[:, 0], res[:, 1]
    ok_mask = np.isfinite(cand) & np.isfinite(ctrl)
    cand, ctrl = cand[ok_mask], ctrl[ok_mask]
    p = stats.mannwhitneyu(cand, ctrl, alternative="greater").pvalue
    ok = np.median(cand) > np.median(ctrl) and p < 0.01
    record(9, ok, f"{cand.size} trials, median upper {np.median(cand):.3f} vs {np.median(ctrl):.3f}, p = {p:.1e}")
    assert ok
