"""Command-line entry point.

    cbmbec rs-curve    --K 3 --alpha 0.2 --q 0,0.1,0.5 --grid 201 --out runs/rs
    cbmbec phase       --K 3 --alpha 1.0 --grid 0:0.2:0.0001 --out runs/phase
    cbmbec entropy-mc  --n 4000 --K 3 --alpha 0.2 --q 0.5 --trials 100 --out runs/mc
    cbmbec verify      --trials 50 --out runs/verify
    cbmbec interpolate --n 100 --T 2000 --eps 0.1 --delta 0.1 --out runs/interp

Every option may also come from a JSON file given with --config; explicit
flags win over the file, which wins over the defaults.  Exit codes: 0 when
all checks pass, 1 on a violated check, 2 on a usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import oracle
from .interpolation import InterpParams, InterpPath, adaptive_path, concentration_report, sum_rule_check
from .model import ModelParams, free_entropy, generate_instance, to_gf2
from .records import write_csv, write_json, write_svg_curves
from .replica import h_rs_scalar, phase_scan, rs_curve, sup_h_rs
from .seeding import TAG_INSTANCE, TAG_ORACLE, trial_rng

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE = 0, 1, 2

DEFAULTS = {
    "n": 200,
    "K": 3,
    "alpha": 0.2,
    "q": "0.5",
    "T": None,  # resolved to 20 n
    "eps": 0.1,
    "delta": 0.1,
    "theta": 0.2,
    "trials": 100,
    "seed": 0,
    "grid": None,
    "out": "runs",
    "workers": 1,
    "tol": 0.02,
    "path_trials": 200,
    "path_value": None,
    "n_list": None,
    "budget": 5_000_000,
}

DEFAULT_GRID = {
    "rs-curve": "201",
    "phase": "0:1:0.001",
    "interpolate": "11",
}


class UsageError(Exception):
    pass


def parse_grid(spec, unit: bool = True) -> np.ndarray:
    """``"N"`` -> N uniform points on [0, 1]; ``"lo:hi:step"`` -> inclusive range;
    ``"a,b,c"`` -> explicit list."""
    text = str(spec).strip()
    try:
        if ":" in text:
            lo, hi, step = (float(v) for v in text.split(":"))
            if step <= 0 or hi < lo:
                raise ValueError
            count = int(round((hi - lo) / step)) + 1
            pts = lo + step * np.arange(count)
            pts[-1] = min(pts[-1], hi)
        elif "," in text:
            pts = np.array([float(v) for v in text.split(",")])
        else:
            count = int(text)
            if count < 2:
                raise ValueError
            pts = np.linspace(0.0, 1.0, count)
    except ValueError:
        raise UsageError(f"bad grid spec {spec!r}") from None
    if unit and (pts.min() < 0 or pts.max() > 1):
        raise UsageError(f"grid {spec!r} leaves [0, 1]")
    return pts


def _q_list(value) -> list[float]:
    try:
        return [float(v) for v in str(value).split(",")]
    except ValueError:
        raise UsageError(f"bad q list {value!r}") from None


def _single_q(cfg) -> float:
    qs = _q_list(cfg["q"])
    if len(qs) != 1:
        raise UsageError("this command takes a single --q value")
    return qs[0]


def _model(cfg) -> ModelParams:
    try:
        return ModelParams(int(cfg["n"]), int(cfg["K"]), float(cfg["alpha"]), _single_q(cfg))
    except (ValueError, IndexError) as exc:
        raise UsageError(str(exc)) from None


def _out_dir(cfg) -> Path:
    p = Path(cfg["out"])
    p.mkdir(parents=True, exist_ok=True)
    return p


def cmd_rs_curve(cfg) -> int:
    grid = parse_grid(cfg["grid"])
    out = _out_dir(cfg)
    rows, curves, markers = [], [], []
    K, alpha = int(cfg["K"]), float(cfg["alpha"])
    for q in _q_list(cfg["q"]):
        try:
            h = h_rs_scalar(grid, K, alpha, q)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        curve = rs_curve(K, alpha, q, grid_points=len(grid))
        rows += [(q, float(x), float(v)) for x, v in zip(grid, h)]
        curves.append((f"q={q:g}", grid, h))
        markers.append((curve.argmax_x, curve.argmax_h))
    write_csv(out / "rs_curve.csv", ["q", "x", "h_rs"], rows, cfg)
    write_csv(out / "rs_argmax.csv", ["q", "x_star", "h_star"], [(q, x, h) for q, (x, h) in zip(_q_list(cfg["q"]), markers)], cfg)
    write_svg_curves(out / "rs_curve.svg", curves, cfg, title=f"h_RS(x), K={K}, alpha={alpha:g}", xlabel="x", ylabel="h_RS", markers=markers)
    print(f"wrote {out / 'rs_curve.csv'}")
    return EXIT_OK


def cmd_phase(cfg) -> int:
    q_grid = parse_grid(cfg["grid"])
    out = _out_dir(cfg)
    K, alpha = int(cfg["K"]), float(cfg["alpha"])
    scan = phase_scan(K, alpha, q_grid)
    write_csv(out / "phase.csv", ["q", "x_star", "h_star"], scan.rows, cfg)
    qs = [r[0] for r in scan.rows]
    write_svg_curves(
        out / "phase.svg",
        [("x*(q)", qs, [r[1] for r in scan.rows])],
        cfg,
        title=f"argmax of h_RS, K={K}, alpha={alpha:g}",
        xlabel="q",
        ylabel="x*",
    )
    result = {"jump": scan.jump, "jump_interval": scan.jump_interval, "points": len(scan.rows)}
    write_json(out / "phase.json", cfg, result)
    print(json.dumps(result))
    return EXIT_OK


def _entropy_trial(args):
    n, K, alpha, q, seed, i = args
    inst = generate_instance(ModelParams(n, K, alpha, q), trial_rng(seed, TAG_INSTANCE, i))
    return free_entropy(inst)


def _map(fn, items, workers: int):
    if workers <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


def cmd_entropy_mc(cfg) -> int:
    mp = _model(cfg)
    trials = int(cfg["trials"])
    if trials < 2:
        raise UsageError("--trials must be >= 2")
    t0 = time.perf_counter()
    vals = np.array(_map(_entropy_trial, [(mp.n, mp.K, mp.alpha, mp.q, int(cfg["seed"]), i) for i in range(trials)], int(cfg["workers"])))
    mean, se = float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(trials))
    x_star, h_star = sup_h_rs(mp.K, mp.alpha, mp.q)
    gap = mean - h_star
    result = {
        "n": mp.n,
        "trials": trials,
        "mean_entropy": mean,
        "se": se,
        "sup_h_rs": h_star,
        "x_star": x_star,
        "gap": gap,
        "tol": float(cfg["tol"]),
        "pass": abs(gap) <= float(cfg["tol"]),
        "seconds": time.perf_counter() - t0,
    }
    write_json(_out_dir(cfg) / "entropy_mc.json", cfg, result)
    print(json.dumps(result))
    return EXIT_OK if result["pass"] else EXIT_VIOLATION


def _random_factors(rng, n, K, m):
    return [tuple(int(i) for i in rng.choice(n, size=K, replace=False)) for _ in range(m)]


def verify_suites(trials: int, seed: int) -> dict:
    """Exhaustive small-n checks; each entry reports its worst violation."""
    out = {}
    mism = 0
    for i in range(trials):
        rng = trial_rng(seed, TAG_ORACLE, 1, i)
        n = int(rng.integers(4, 13))
        inst = generate_instance(ModelParams(n, 3, float(rng.uniform(0.1, 1.5)), float(rng.uniform(0, 1))), rng)
        mism += oracle.enumerate_gibbs(inst).Z != 2 ** (n - to_gf2(inst).rank)
    out["rank_oracle"] = {"checked": trials, "max_violation": int(mism), "pass": mism == 0}

    worst = 0.0
    for i in range(trials):
        rng = trial_rng(seed, TAG_ORACLE, 2, i)
        n, K = int(rng.integers(3, 9)), int(rng.integers(2, 4))
        K = min(K, n)
        params = ModelParams(n, K, 1.0, float(rng.uniform(0, 1)))
        factors = _random_factors(rng, n, K, int(rng.integers(1, 7)))
        colls = [[tuple(rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False)) for _ in range(int(rng.integers(1, 4)))]]
        worst = max(worst, oracle.nishimori_check(params, factors, colls))
    out["nishimori"] = {"checked": trials, "max_violation": worst, "pass": worst <= 1e-12}

    gks_bad = 0
    for i in range(trials):
        rng = trial_rng(seed, TAG_ORACLE, 3, i)
        n = int(rng.integers(3, 11))
        inst = generate_instance(ModelParams(n, min(3, n), float(rng.uniform(0.2, 1.5)), float(rng.uniform(0, 1))), rng)
        pairs = [
            (tuple(rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False)), tuple(rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False)))
            for _ in range(3)
        ]
        gks_bad += not oracle.gks_check(inst, pairs)
    out["gks"] = {"checked": trials, "max_violation": int(gks_bad), "pass": gks_bad == 0}

    gauge_bad = 0
    for i in range(trials):
        rng = trial_rng(seed, TAG_ORACLE, 4, i)
        n = int(rng.integers(3, 9))
        params = ModelParams(n, min(3, n), 1.0, float(rng.uniform(0, 1)))
        factors = _random_factors(rng, n, params.K, int(rng.integers(1, 6)))
        planted = rng.choice([-1, 1], size=n)
        gauge_bad += not oracle.gauge_invariance_check(params, factors, planted)
    out["gauge"] = {"checked": trials, "max_violation": int(gauge_bad), "pass": gauge_bad == 0}
    return out


def cmd_verify(cfg) -> int:
    try:
        suites = verify_suites(int(cfg["trials"]), int(cfg["seed"]))
    except oracle.EnumerationLimitError as exc:
        raise UsageError(str(exc)) from None
    ok = all(s["pass"] for s in suites.values())
    write_json(_out_dir(cfg) / "verify.json", cfg, {"suites": suites, "pass": ok})
    for name, s in suites.items():
        print(f"{'PASS' if s['pass'] else 'FAIL'} {name}: max_violation={s['max_violation']} over {s['checked']}")
    return EXIT_OK if ok else EXIT_VIOLATION


def cmd_interpolate(cfg) -> int:
    mp = _model(cfg)
    T = int(cfg["T"]) if cfg["T"] is not None else 20 * mp.n
    try:
        ip = InterpParams(mp, T, float(cfg["eps"]), float(cfg["delta"]), float(cfg["theta"]))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    grid_s = parse_grid(cfg["grid"])
    trials, path_trials = int(cfg["trials"]), int(cfg["path_trials"])
    n_list = [int(v) for v in str(cfg["n_list"]).split(",")] if cfg["n_list"] else [mp.n]
    cost = (0 if cfg["path_value"] is not None else T * path_trials) + T * len(grid_s) + trials
    if cost > int(cfg["budget"]):
        print(f"step budget exhausted: run needs {cost} instance builds, budget is {cfg['budget']}", file=sys.stderr)
        return EXIT_USAGE
    seed = int(cfg["seed"])
    if cfg["path_value"] is not None:
        path = InterpPath.constant(float(cfg["path_value"]), T, mp.K, mp.q)
    else:
        path = adaptive_path(ip, path_trials, seed)
    rep = sum_rule_check(ip, path, grid_s, trials, seed)
    conc = concentration_report(ip, path, n_list, trials, seed)
    out = _out_dir(cfg)
    write_csv(
        out / "path.csv",
        ["t", "r", "r_se", "tilde_r"],
        [(t + 1, path.r[t], None if path.se is None else path.se[t], path.tilde_r[t]) for t in range(T)],
        cfg,
    )
    write_csv(out / "sum_rule_steps.csv", ["t", "remainder_s_integral"], [(t + 1, float(v)) for t, v in enumerate(rep.per_step)], cfg)
    conc_rows = [r.to_dict() for r in conc]
    write_csv(out / "concentration.csv", list(conc_rows[0]), [list(r.values()) for r in conc_rows], cfg)
    ok = abs(rep.residual) <= 3 * rep.residual_se
    manifest = {
        "params": {"n": mp.n, "K": mp.K, "alpha": mp.alpha, "q": mp.q, "T": T, "eps": ip.eps, "delta": ip.delta, "theta": ip.theta},
        "path": {"r": path.r, "se": path.se},
        "seeds": {"master": seed, "derivation": "SeedSequence([master, tag, *point, trial])"},
        "sum_rule": rep.to_dict(),
        "concentration": conc_rows,
        "pass": ok,
    }
    write_json(out / "manifest.json", cfg, manifest)
    print(json.dumps({"sum_rule": rep.to_dict(), "pass": ok}))
    return EXIT_OK if ok else EXIT_VIOLATION


COMMANDS = {
    "rs-curve": cmd_rs_curve,
    "phase": cmd_phase,
    "entropy-mc": cmd_entropy_mc,
    "verify": cmd_verify,
    "interpolate": cmd_interpolate,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cbmbec", description=__doc__.split("\n\n")[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", type=Path, help="JSON file with option values")
    # defaults are None so that only explicitly given flags override the config file
    for name, typ in [
        ("n", int), ("K", int), ("alpha", float), ("q", str), ("T", int), ("eps", float),
        ("delta", float), ("theta", float), ("trials", int), ("seed", int), ("grid", str),
        ("out", str), ("workers", int), ("tol", float),
    ]:
        p.add_argument(f"--{name}", type=typ, default=None)
    p.add_argument("--path-trials", dest="path_trials", type=int, default=None)
    p.add_argument("--path-value", dest="path_value", type=float, default=None, help="use a constant path instead of the adaptive one")
    p.add_argument("--n-list", dest="n_list", type=str, default=None)
    p.add_argument("--budget", type=int, default=None, help="maximum instance builds for interpolate")
    return p


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if args.config is not None:
        try:
            file_cfg = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config: {exc}") from None
        unknown = set(file_cfg) - set(DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(file_cfg)
    for key in DEFAULTS:
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    if cfg["grid"] is None:
        cfg["grid"] = DEFAULT_GRID.get(args.command, "11")
    cfg["q"] = str(cfg["q"])
    cfg["command"] = args.command
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
