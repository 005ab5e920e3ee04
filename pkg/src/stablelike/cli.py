"""Command-line front end: seeded experiments that write CSV/JSON reports.

Usage::

    stablelike simulate --seed 1 --trials 4 --out runs/sim
    stablelike spectrum --alpha 0.6 --h-min 0.5 --h-max 1.3 --h-steps 81
    stablelike census --config exp.json --jobs 4

Every subcommand accepts ``--config PATH`` (a JSON file with the fields of
:class:`ExperimentConfig`); command-line flags override file values.  The
output directory defaults to ``$STABLELIKE_OUT`` or ``./stablelike_out``.
Minus infinity is written as the string ``-inf`` in CSV and as ``null`` plus
``"<name>_neg_inf": true`` in JSON.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .census import (
    concentration_check,
    desk_ladder,
    double_jump_family,
    double_jump_limsup_census,
    grow_tree,
    zero_jump_family,
)
from .errors import ParameterError
from .fractal import (
    NEG_INF,
    exceptional_sets,
    image_dim_bounds,
    index_range,
    IndexSet,
    local_dim,
    lower_spectrum,
    spectrum_envelope,
)
from .occupation import occupation_measure
from .ppp import sample_ppp, trial_seed
from .process import BetaFunction, build_stable_like, build_subordinator

ENV_OUT = "STABLELIKE_OUT"


def _version() -> str:
    from importlib.metadata import PackageNotFoundError, version

    try:
        return version("stablelike")
    except PackageNotFoundError:
        return "unknown"


@dataclass
class ExperimentConfig:
    """All knobs of an experiment; validated before any sampling."""

    seed: int = 0
    trials: int = 1
    horizon: float = 1.0
    z_min: float = 1e-4
    alpha: float | None = None
    epsilon0: float = 0.3
    knots: list = field(default_factory=lambda: [[0.0, 0.3], [0.5, 0.7]])
    r_min: float = 1e-6
    r_max: float = 1e-2
    scales_per_decade: int = 4
    j_min: int = 8
    j_max: int = 16
    eta0: float = 2.0**-8
    ladder_eps: float = 0.1
    ladder_floor: float = 2.0**-20
    gamma: float = 1.5
    eps: float = 0.1
    delta: float = 1.5
    grid_size: int = 1001
    out: str | None = None
    format: str = "csv"

    def validate(self) -> None:
        if self.seed < 0:
            raise ParameterError("seed must be >= 0")
        if self.trials < 0:
            raise ParameterError("trials must be >= 0")
        if not self.horizon > 0:
            raise ParameterError("horizon must be > 0")
        if not (0.0 < self.z_min < 1.0):
            raise ParameterError("z_min must lie in (0, 1)")
        if self.alpha is not None and not (0.0 < self.alpha < 1.0):
            raise ParameterError("alpha must lie in (0, 1)")
        if not (0.0 < self.r_min < self.r_max):
            raise ParameterError("need 0 < r_min < r_max")
        if self.scales_per_decade < 1 or not (0 <= self.j_min < self.j_max <= 52):
            raise ParameterError("invalid estimator window")
        if self.format not in ("csv", "json"):
            raise ParameterError("format must be csv or json")
        if self.grid_size < 2:
            raise ParameterError("grid_size must be >= 2")
        self.beta()
        desk_ladder(self.eta0, self.ladder_eps, self.ladder_floor)

    def beta(self) -> BetaFunction:
        if self.alpha is not None:
            return BetaFunction.constant(self.alpha)
        return BetaFunction.from_knots(self.epsilon0, self.knots)

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> ExperimentConfig:
        data = json.loads(text)
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ParameterError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


# ---------------------------------------------------------------------------
# serialization helpers


def _json_value(obj: dict) -> dict:
    out = {}
    for k, v in obj.items():
        if v is NEG_INF:
            out[k] = None
            out[f"{k}_neg_inf"] = True
        elif isinstance(v, (np.floating, np.integer)):
            out[k] = v.item()
        elif isinstance(v, np.ndarray):
            out[k] = v.tolist()
        elif isinstance(v, float) and not np.isfinite(v):
            out[k] = None
        else:
            out[k] = v
    return out


def _csv_cell(v) -> str:
    if v is NEG_INF:
        return "-inf"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_rows(path: Path, rows: list[dict], fmt: str) -> Path:
    """Write a table as CSV (header from the first row) or as a JSON list."""
    path = path.with_suffix("." + fmt)
    if fmt == "json":
        path.write_text(json.dumps([_json_value(r) for r in rows], indent=2))
        return path
    with open(path, "w") as fh:
        if rows:
            cols = list(rows[0])
            fh.write(",".join(cols) + "\n")
            for r in rows:
                fh.write(",".join(_csv_cell(r[c]) for c in cols) + "\n")
    return path


# ---------------------------------------------------------------------------
# per-trial work


def _path(cfg: ExperimentConfig, seed: int, kind: str = "stable_like"):
    pp = sample_ppp(cfg.horizon, cfg.z_min, seed)
    if kind == "subordinator":
        return pp, build_subordinator(pp, cfg.alpha if cfg.alpha is not None else 0.5)
    return pp, build_stable_like(pp, cfg.beta())


def _trial(cmd: str, cfg: ExperimentConfig, opts: dict, trial: int) -> dict:
    out = Path(cfg.out)
    seed = trial_seed(cfg.seed, trial)
    stem = out / f"{cmd}_{trial:04d}"
    if cmd == "simulate":
        pp, path = _path(cfg, seed, opts.get("kind", "stable_like"))
        path.write_csv(stem.with_suffix(".csv"))
        meta = path.metadata()
        meta["trial"] = trial
        stem.with_suffix(".json").write_text(json.dumps(_json_value(meta), indent=2, sort_keys=True))
        return {"trial": trial, "seed": seed, "n_jumps": len(path), "final": float(path.values_after[-1]) if len(path) else 0.0}
    if cmd == "occupation":
        _, path = _path(cfg, seed, opts.get("kind", "stable_like"))
        om = occupation_measure(path)
        om.write_csv(stem.with_suffix(".csv"))
        return {"trial": trial, "seed": seed, "atoms": len(om), "total": om.total}
    if cmd == "localdim":
        _, path = _path(cfg, seed, opts.get("kind", "stable_like"))
        om = occupation_measure(path)
        t = float(np.random.default_rng([seed, 1]).uniform(0, cfg.horizon))
        x = path.eval(t)
        est = local_dim(om, x, cfg.r_min, cfg.r_max, cfg.scales_per_decade)
        rows = [
            {"r": r, "mass": m, "ratio": q, "usable": bool(u), "sparse": bool(s)}
            for r, m, q, u, s in zip(est.radii, est.masses, est.ratios, est.usable, est.sparse)
        ]
        write_rows(stem, rows, cfg.format)
        b = float(cfg.beta()(x))
        return {"trial": trial, "seed": seed, "t": t, "x": x, "beta": b, "lower_est": est.lower_est,
                "upper_est": est.upper_est, "usable": est.usable_count, "low_confidence": est.low_confidence}
    if cmd == "images":
        _, path = _path(cfg, seed)
        a, b = opts.get("E", (0.0, cfg.horizon))
        res = image_dim_bounds(path, cfg.beta(), (a, b), cfg.j_min, cfg.j_max, opts.get("tol", 0.1))
        return {"trial": trial, "seed": seed, "pred_lo": res.predicted[0], "pred_hi": res.predicted[1],
                "measured": res.measured.slope, "stderr": res.measured.stderr, "inside": res.inside}
    if cmd == "census":
        theta = 2.0 ** (-max(opts["n"]) / (cfg.gamma - cfg.eps))
        ladder = desk_ladder(cfg.eta0, cfg.ladder_eps, cfg.ladder_floor)
        band = ladder.next_level(ladder.L) ** (1.0 / cfg.gamma)
        pp = sample_ppp(cfg.horizon, min(theta / 2.0, band) * (1 - 1e-9), seed)
        row = {"trial": trial, "seed": seed}
        for n in opts["n"]:
            rep = double_jump_limsup_census(pp, n, cfg.gamma, cfg.eps)
            row[f"E_{n}"] = rep.count
            row[f"E_{n}_expected"] = rep.expected
        ell = opts.get("level", 1)
        row["zero_family"] = int(zero_jump_family(pp, ladder, ell, cfg.gamma).size)
        row["double_family"] = int(double_jump_family(pp, ladder, ell, cfg.gamma).size)
        tree = grow_tree(pp, 1, ladder, cfg.gamma)
        row["leaves"] = tree.leaves
        row["leaf_bound"] = tree.bound()
        return row
    if cmd == "concentration":
        pp = sample_ppp(cfg.horizon, cfg.z_min, seed)
        beta = cfg.beta()
        path = build_stable_like(pp, beta)
        grid = np.linspace(0.0, cfg.horizon, cfg.grid_size)
        row = {"trial": trial, "seed": seed}
        for n in opts["n"]:
            rep = concentration_check(pp, beta, n, cfg.delta, grid, path=path)
            row[f"stat_{n}"] = rep.statistic
            row[f"exceeds_{n}"] = rep.exceeds
        return row
    raise ParameterError(f"unknown command {cmd!r}")


def _safe_trial(args):
    cmd, cfg, opts, trial = args
    try:
        return trial, _trial(cmd, cfg, opts, trial), None
    except Exception as exc:  # reported per trial, run continues
        return trial, None, f"{type(exc).__name__}: {exc}"


def run_trials(cmd: str, cfg: ExperimentConfig, opts: dict, jobs: int = 1) -> tuple[list[dict], list[tuple[int, str]]]:
    work = [(cmd, cfg, opts, k) for k in range(cfg.trials)]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_safe_trial, work))
    else:
        results = [_safe_trial(w) for w in work]
    rows = [r for _, r, err in sorted(results, key=lambda x: x[0]) if err is None]
    failed = [(k, err) for k, _, err in results if err is not None]
    return rows, failed


# ---------------------------------------------------------------------------
# spectrum (deterministic, no trials)


def spectrum_table(h_values, I: IndexSet, mode: str = "space", kind: str = "upper") -> list[dict]:
    """Rows (h, value, case) of the spectrum attached to the index set ``I``."""
    fn = lower_spectrum if kind == "lower" else spectrum_envelope
    rows = []
    for h in h_values:
        sv = fn(float(h), I, mode)
        rows.append({"h": float(h), "value": sv.value, "case": sv.case})
    return rows


def parse_index_set(text: str) -> IndexSet:
    """"0.3:0.5,0.6" -> [0.3, 0.5] U {0.6}; an empty string gives the empty set."""
    pieces = []
    for part in filter(None, (p.strip() for p in text.split(","))):
        if ":" in part:
            a, b = part.split(":")
            pieces.append((float(a), float(b)))
        else:
            pieces.append((float(part), float(part)))
    return IndexSet.union(pieces)


# ---------------------------------------------------------------------------
# argument parsing


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--out", type=str, help=f"output directory (default ${ENV_OUT} or ./stablelike_out)")
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--horizon", type=float)
    p.add_argument("--z-min", dest="z_min", type=float)
    p.add_argument("--alpha", type=float, help="constant index (overrides the knots)")
    p.add_argument("--epsilon0", type=float)
    p.add_argument("--knots", type=str, help='index knots "x:b,x:b,..."')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stablelike", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version="%(prog)s " + _version())
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("simulate", help="sample paths and write them with metadata")
    _common(p)
    p.add_argument("--kind", choices=("stable_like", "subordinator"), default="stable_like")
    p = sub.add_parser("occupation", help="occupation measure atoms per trial")
    _common(p)
    p.add_argument("--kind", choices=("stable_like", "subordinator"), default="stable_like")
    p = sub.add_parser("localdim", help="local dimension at a uniform random time")
    _common(p)
    p.add_argument("--kind", choices=("stable_like", "subordinator"), default="stable_like")
    p.add_argument("--r-min", dest="r_min", type=float)
    p.add_argument("--r-max", dest="r_max", type=float)
    p.add_argument("--scales-per-decade", dest="scales_per_decade", type=int)
    p = sub.add_parser("spectrum", help="(h, value) table of a spectrum formula")
    _common(p)
    p.add_argument("--h-min", type=float, default=0.0)
    p.add_argument("--h-max", type=float, default=1.5)
    p.add_argument("--h-steps", type=int, default=151)
    p.add_argument("--mode", choices=("space", "time"), default="space")
    p.add_argument("--kind", choices=("upper", "lower"), default="upper")
    p.add_argument("--index-set", type=str, help='explicit index set "a:b,c"; otherwise use --alpha or a simulated path')
    p.add_argument("--window", type=str, help='open window "lo:hi" for the path index range')
    p = sub.add_parser("images", help="image box dimension against the predicted interval")
    _common(p)
    p.add_argument("--E", type=str, default=None, help='time interval "a:b"')
    p.add_argument("--j-min", dest="j_min", type=int)
    p.add_argument("--j-max", dest="j_max", type=int)
    p.add_argument("--tol", type=float, default=0.1)
    p = sub.add_parser("census", help="jump-configuration census")
    _common(p)
    p.add_argument("--n", type=str, default="6,8,10", help="dyadic scales")
    p.add_argument("--gamma", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--level", type=int, default=1, help="ladder level for the families")
    p = sub.add_parser("concentration", help="compensated small-jump concentration statistic")
    _common(p)
    p.add_argument("--n", type=str, default="8,12")
    p.add_argument("--delta", type=float)
    p.add_argument("--grid-size", dest="grid_size", type=int)
    return parser


_CONFIG_FLAGS = [f.name for f in dataclasses.fields(ExperimentConfig)]


def make_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if args.config is not None:
        cfg = ExperimentConfig.from_json(Path(args.config).read_text())
    for name in _CONFIG_FLAGS:
        val = getattr(args, name, None)
        if val is None:
            continue
        if name == "knots":
            val = [[float(a) for a in kv.split(":")] for kv in val.split(",")]
        setattr(cfg, name, val)
    if getattr(args, "alpha", None) is not None:
        cfg.alpha = args.alpha
    if cfg.out is None:
        cfg.out = os.environ.get(ENV_OUT, "stablelike_out")
    cfg.validate()
    return cfg


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = make_config(args)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        if not os.access(out, os.W_OK):
            raise OSError(f"output directory {out} is not writable")
        (out / "config.json").write_text(cfg.to_json())
    except (ParameterError, OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"stablelike: error: {exc}", file=sys.stderr)
        return 2

    try:
        if args.cmd == "spectrum":
            return _cmd_spectrum(args, cfg, out)
        opts: dict = {}
        if args.cmd in ("simulate", "occupation", "localdim"):
            opts["kind"] = args.kind
        if args.cmd == "images":
            opts["tol"] = args.tol
            if args.E:
                a, b = (float(x) for x in args.E.split(":"))
                opts["E"] = (a, b)
        if args.cmd in ("census", "concentration"):
            opts["n"] = _ints(args.n)
        if args.cmd == "census":
            opts["level"] = args.level
        rows, failed = run_trials(args.cmd, cfg, opts, max(1, args.jobs))
        if rows:
            write_rows(out / f"{args.cmd}_summary", rows, cfg.format)
    except (ParameterError, OSError, ValueError) as exc:
        print(f"stablelike: error: {exc}", file=sys.stderr)
        return 1
    if failed:
        for k, err in failed:
            print(f"stablelike: trial {k} failed: {err}", file=sys.stderr)
        return 1
    return 0


def _cmd_spectrum(args, cfg: ExperimentConfig, out: Path) -> int:
    hs = np.linspace(args.h_min, args.h_max, args.h_steps)
    rows: list[dict] = []
    if args.index_set is not None:
        rows = spectrum_table(hs, parse_index_set(args.index_set), args.mode, args.kind)
    elif cfg.alpha is not None and args.window is None:
        rows = spectrum_table(hs, IndexSet.union([(cfg.alpha, cfg.alpha)]), args.mode, args.kind)
    else:
        _, path = _path(cfg, trial_seed(cfg.seed, 0))
        beta = cfg.beta()
        if args.window:
            lo, hi = (float(x) for x in args.window.split(":"))
        else:
            lo, hi = (-1.0, float(path.values_after[-1]) + 1.0) if args.mode == "space" else (0.0, cfg.horizon)
        I = index_range(path, beta, (lo, hi), args.mode, min_gap=1e-3)
        rows = spectrum_table(hs, I, args.mode, args.kind)
        exc = exceptional_sets(path, beta)
        (out / "spectrum_exceptional.json").write_text(json.dumps(
            [{"tau": j.tau, "b_before": j.b_before, "b_after": j.b_after, "equality": j.equality} for j in exc.jumps],
            indent=2))
    write_rows(out / "spectrum", rows, cfg.format)
    return 0


if __name__ == "__main__":
    sys.exit(main())
