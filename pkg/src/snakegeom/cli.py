"""Command-line experiment runner.

Each subcommand has a flat table of typed defaults.  Values come from the
defaults, then a ``key = value`` config file (``--config``), then flags.
Outputs go to ``--out`` (or ``$SNAKEGEOM_OUT``, or ``./snakegeom_out``) and
are named after the command.

Exit codes: 0 success, 2 usage or config error, 3 numerical or runtime
failure, 4 file-system error.  Failures print one JSON line on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .report import fingerprint, write_csv, write_json, write_svg

OUT_ENV = "SNAKEGEOM_OUT"
DEFAULT_OUT = "snakegeom_out"

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_IO = 0, 2, 3, 4


class ConfigError(ValueError):
    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


class FloatList(tuple):
    """Marker type for comma-separated float parameters."""


COMMANDS = {
    "sample-sphere": {
        "help": "sample one snake trajectory and its refined minimum",
        "defaults": {"grid": 4096, "duration": 1.0, "x": 0.0, "seed": 0, "excursion": "bessel3",
                     "refine_depth": 24},
    },
    "sample-slice": {
        "help": "sample a slice triple (Bessel(-5) spine with positive-minimum trees)",
        "defaults": {"delta": 1e-4, "seed": 0, "step": 0.001, "atom_grid": 64},
    },
    "build-metric": {
        "help": "build a sphere or slice metric and export a distance matrix",
        "defaults": {"grid": 1024, "seed": 0, "mode": "sphere", "excursion": "lattice", "points": 64},
    },
    "geodesics": {
        "help": "simple geodesics to x_* and their dist audit",
        "defaults": {"grid": 4096, "seed": 0, "starts": 10, "excursion": "lattice", "tol_factor": 5.0},
    },
    "hub-scan": {
        "help": "eps-hub rates over random spheres",
        "defaults": {"grid": 4096, "eps": FloatList((0.2, 0.1, 0.05)), "replicas": 200, "seed": 0,
                     "separation": 0.05, "excursion": "lattice"},
    },
    "bessel-events": {
        "help": "P(E_n) forward and reversed, product identity, p_inf and Kochen-Stone bound",
        "defaults": {"n_max": 4, "replicas": 5000, "seed": 0, "forward_step": 0.001,
                     "reversed_step": 0.005, "ks_n_max": 6},
    },
    "formula-check": {
        "help": "N_x(W_* < y) by duration mixture against 3 / (2 (x - y)^2)",
        "defaults": {"x": 1.0, "y": FloatList((0.0, -1.0)), "replicas": 2000, "seed": 0, "grid": 1024,
                     "nodes": 64, "t_min": 2.0 ** -10, "t_max": 2.0 ** 10},
    },
    "align-check": {
        "help": "alignment of (u, v, x_*) over pairs with dist close to D°",
        "defaults": {"grid": 4096, "instances": 5, "pairs": 400, "seed": 0, "excursion": "lattice",
                     "tol_factor": 5.0},
    },
}


def _convert(key, default, raw):
    try:
        if isinstance(default, FloatList):
            vals = tuple(float(v) for v in str(raw).split(",") if v.strip())
            if not vals:
                raise ValueError("empty list")
            return FloatList(vals)
        if isinstance(default, bool):
            low = str(raw).strip().lower()
            if low not in ("1", "0", "true", "false", "yes", "no"):
                raise ValueError(f"not a boolean: {raw!r}")
            return low in ("1", "true", "yes")
        if isinstance(default, int):
            return int(str(raw).strip())
        if isinstance(default, float):
            return float(str(raw).strip())
        return str(raw).strip()
    except ValueError as exc:
        raise ConfigError(key, str(exc)) from None


def read_config_file(path):
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}", f"expected key = value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def resolve_config(command, file_values, flag_values):
    defaults = COMMANDS[command]["defaults"]
    cfg = dict(defaults)
    for source in (file_values, flag_values):
        for key, raw in source.items():
            if key not in defaults:
                raise ConfigError(key, f"unknown key for {command}")
            cfg[key] = _convert(key, defaults[key], raw)
    return {k: (list(v) if isinstance(v, FloatList) else v) for k, v in cfg.items()}


def build_parser():
    parser = argparse.ArgumentParser(prog="snakegeom", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, spec in COMMANDS.items():
        p = sub.add_parser(name, help=spec["help"])
        p.add_argument("--config", help="flat key = value file")
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
        for key, default in spec["defaults"].items():
            shown = ",".join(map(str, default)) if isinstance(default, FloatList) else default
            p.add_argument("--" + key.replace("_", "-"), dest=key, default=None, help=f"default {shown}")
    return parser


# ---------------------------------------------------------------- commands


def run_sample_sphere(cfg, out):
    from .refine import RefinedMinimum
    from .rng import as_rng
    from .sampler import SampleConfig, sample_excursion
    from .snake import DiscreteSnake, save_snake

    rng = as_rng(cfg["seed"])
    sc = SampleConfig(cfg["grid"], cfg["duration"], cfg["x"], cfg["seed"], cfg["excursion"])
    zeta = sample_excursion(sc, rng)
    # grid labels are read off the refinement skeleton, so both describe one trajectory
    ref = RefinedMinimum(zeta, cfg["duration"], cfg["x"], rng, h_min=cfg["duration"] * 2.0 ** -cfg["refine_depth"])
    tip = ref.grid_labels.copy()
    tip[0] = tip[-1] = cfg["x"]
    snake = DiscreteSnake(cfg["duration"], zeta, tip, cfg["x"])
    save_snake(snake, out / "sample-sphere_snake.csv", [f"fingerprint={fingerprint(cfg)}", f"seed={cfg['seed']}"])
    t = np.linspace(0.0, cfg["duration"], zeta.size)
    write_svg(out / "sample-sphere.svg", {"lifetime": (t, zeta), "label": (t, tip)},
              "snake trajectory", "s", "value", fingerprint(cfg))
    return {"grid_w_star": snake.w_star, "s_star": snake.s_star, "max_lifetime": float(zeta.max()),
            "label_range": float(tip.max() - tip.min()), "refined_w_star": ref.run(),
            "files": ["sample-sphere_snake.csv", "sample-sphere.svg"]}


def run_sample_slice(cfg, out):
    from .spine import assemble_surface, save_triple, sample_slice_spine

    tr = sample_slice_spine(cfg["delta"], cfg["seed"], cfg["step"], cfg["atom_grid"])
    surf = assemble_surface(tr)
    save_triple(tr, out / "sample-slice_triple", [f"fingerprint={fingerprint(cfg)}", f"seed={cfg['seed']}"])
    write_svg(out / "sample-slice.svg", {"spine": (tr.times, tr.values)}, "Bessel(-5) spine", "t", "R",
              fingerprint(cfg))
    ws = [a.w_star for a in tr.atoms]
    return {"tau0": tr.extra["tau0"], "left_atoms": len(tr.left), "right_atoms": len(tr.right),
            "candidates": tr.extra["candidates"], "rejected": tr.extra["rejected"],
            "attempts": tr.extra["attempts"], "min_atom_w_star": min(ws) if ws else None,
            "contour_points": surf.idx.n + 1, "top_is_minimizer": bool(surf.idx.s_star == surf.top),
            "classes": surf.metric.size, "files": ["sample-slice_triple", "sample-slice.svg"]}


def _instance(cfg, mode="sphere"):
    from .metric import build_metric
    from .rng import as_rng
    from .sampler import SampleConfig, sample_snake
    from .snake import TreeIndex

    rng = as_rng(cfg["seed"])
    snake = sample_snake(SampleConfig(cfg["grid"], 1.0, 0.0, cfg["seed"], cfg["excursion"]), rng)
    return build_metric(TreeIndex(snake), mode=mode), rng


def run_build_metric(cfg, out):
    from .metric import SLICE, SPHERE

    if cfg["mode"] not in (SPHERE, SLICE):
        raise ConfigError("mode", f"expected {SPHERE} or {SLICE}")
    inst, rng = _instance(cfg, cfg["mode"])
    k = min(cfg["points"], inst.size)
    pts = np.unique(np.concatenate([[inst.x0, inst.x_star], rng.choice(inst.points, k, replace=False)]))
    mat = inst.matrix(pts)
    write_csv(out / "build-metric_distances.csv", ["index"] + [str(p) for p in pts],
              [[int(p)] + row.tolist() for p, row in zip(pts, mat)], cfg, cfg["seed"])
    star = inst.row(inst.x_star)
    identity = float(np.max(np.abs(star - (inst.idx.labels - inst.idx.w_star)))) if cfg["mode"] == SPHERE else None
    lab = inst.idx.labels[pts]
    lower = np.abs(lab[:, None] - lab[None, :])
    upper = np.array([[inst.one_step(a, b) for b in pts] for a in pts])
    slack = 1e-12
    return {"classes": inst.size, "edges": int(inst.graph.nnz), "method": inst.method,
            "max_identity_deviation": identity,
            "sandwich_violations": int(np.sum(mat < lower - slack) + np.sum(mat > upper + slack)),
            "exported_points": int(pts.size), "files": ["build-metric_distances.csv"]}


def run_geodesics(cfg, out):
    from .metric import geodesic_check, simple_geodesic

    inst, rng = _instance(cfg)
    tol = inst.step_tolerance(cfg["tol_factor"])
    starts = rng.choice(inst.points, min(cfg["starts"], inst.size), replace=False)
    rows, devs = [], []
    for u in starts.tolist():
        g = simple_geodesic(inst, int(u))
        dev, _ = geodesic_check(inst, g, tol, rng=rng)
        devs.append(dev)
        rows += [[int(u), j, int(p), float(inst.idx.labels[p]), float(a)]
                 for j, (p, a) in enumerate(zip(g.points.tolist(), g.arclength.tolist()))]
    write_csv(out / "geodesics_paths.csv", ["start", "step", "index", "label", "arclength"], rows, cfg, cfg["seed"])
    return {"starts": [int(u) for u in starts], "deviations": devs, "tolerance": tol,
            "max_deviation": max(devs), "passed": bool(max(devs) <= tol), "files": ["geodesics_paths.csv"]}


def run_hub_scan(cfg, out):
    from .events import hub_rate_experiment, rates_monotone

    res = hub_rate_experiment(cfg["grid"], cfg["eps"], cfg["replicas"], cfg["seed"], cfg["separation"],
                              excursion=cfg["excursion"])
    rows = res["rows"]
    write_csv(out / "hub-scan_rates.csv", ["eps", "rate", "ci_low", "ci_high"],
              [[r["eps"], r["rate"], r["ci"][0], r["ci"][1]] for r in rows], cfg, cfg["seed"])
    write_csv(out / "hub-scan_replicas.csv", ["replica", "min_excess", "separated"],
              [[k, e, int(s)] for k, (e, s) in enumerate(zip(res["excess"], res["separated"]))], cfg, cfg["seed"])
    order = sorted(rows, key=lambda r: r["eps"])
    write_svg(out / "hub-scan.svg", {"rate": ([r["eps"] for r in order], [r["rate"] for r in order])},
              "eps-hub rate", "eps", "rate", fingerprint(cfg))
    exc = np.array(res["excess"])
    return {"rows": rows, "monotone": rates_monotone(rows),
            "zero_excess_rate": float(np.mean(np.array(res["separated"]) & (exc == 0))),
            "files": ["hub-scan_rates.csv", "hub-scan_replicas.csv", "hub-scan.svg"]}


def run_bessel_events(cfg, out):
    from .events import (FORWARD, REVERSED, check_product_identity, estimate_P_En_sweep,
                         estimate_p_infty_and_KS_bound)
    from .stats import agree, ks_two_sample, ExperimentReport

    n_max, reps, seed = cfg["n_max"], cfg["replicas"], cfg["seed"]
    fwd = estimate_P_En_sweep(n_max, FORWARD, cfg["forward_step"], reps, seed)
    rev = estimate_P_En_sweep(n_max, REVERSED, cfg["reversed_step"], reps, seed + 1)
    ks = ks_two_sample(fwd[0].samples, rev[0].samples)
    agreement = [agree(ExperimentReport(f.estimate, f.half_width, f.replicas, None, f.std_error),
                       ExperimentReport(r.estimate, r.half_width, r.replicas, None, r.std_error))
                 for f, r in zip(fwd, rev)]
    pairs = [(n, m) for n in range(2, n_max + 1) for m in range(1, n) if n <= 3]
    products = [check_product_identity(n, m, reps, seed + 2, cfg["forward_step"]) for n, m in pairs]
    pinf = estimate_p_infty_and_KS_bound(cfg["ks_n_max"], reps, seed + 3, cfg["reversed_step"])
    write_csv(out / "bessel-events_P_En.csv",
              ["n", "forward", "forward_half_width", "reversed", "reversed_half_width", "agree"],
              [[f.n, f.estimate, f.half_width, r.estimate, r.half_width, int(a)]
               for f, r, a in zip(fwd, rev, agreement)], cfg, seed)
    ns = [f.n for f in fwd]
    write_svg(out / "bessel-events.svg", {"forward": (ns, [f.estimate for f in fwd]),
                                          "reversed": (ns, [r.estimate for r in rev])},
              "P(E_n)", "n", "probability", fingerprint(cfg))
    return {"forward": [f.to_dict() for f in fwd], "reversed": [r.to_dict() for r in rev],
            "agree": agreement, "ks_E1": {"accepted": ks[0], "statistic": ks[1], "pvalue": ks[2]},
            "product_identity": products, "p_inf_and_ks": pinf,
            "files": ["bessel-events_P_En.csv", "bessel-events.svg"]}


def run_formula_check(cfg, out):
    from .events import verify_inf_formula
    from .sampler import DurationMixture

    mix = DurationMixture.geometric(cfg["t_min"], cfg["t_max"], cfg["nodes"])
    res = verify_inf_formula(cfg["x"], cfg["y"], mix, cfg["replicas"], cfg["seed"], cfg["grid"])
    write_csv(out / "formula-check.csv", ["x", "y", "estimate", "ci_low", "ci_high", "target", "relative_error"],
              [[r["x"], r["y"], r["estimate"], r["ci"][0], r["ci"][1], r["target"], r["relative_error"]]
               for r in res["rows"]], cfg, cfg["seed"])
    res["files"] = ["formula-check.csv"]
    return res


def run_align_check(cfg, out):
    from .events import alignment_experiment

    res = alignment_experiment(cfg["grid"], cfg["instances"], cfg["pairs"], cfg["seed"], cfg["tol_factor"],
                               excursion=cfg["excursion"])
    res["files"] = []
    return res


RUNNERS = {
    "sample-sphere": run_sample_sphere,
    "sample-slice": run_sample_slice,
    "build-metric": run_build_metric,
    "geodesics": run_geodesics,
    "hub-scan": run_hub_scan,
    "bessel-events": run_bessel_events,
    "formula-check": run_formula_check,
    "align-check": run_align_check,
}


def _fail(category, message, command=None, seed=None, code=EXIT_RUNTIME):
    print(json.dumps({"error": category, "message": message, "command": command, "seed": seed},
                     sort_keys=True), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    command = args.command
    flags = {k: v for k, v in vars(args).items()
             if k not in ("command", "config", "out") and v is not None}
    try:
        file_values = read_config_file(args.config) if args.config else {}
        cfg = resolve_config(command, file_values, flags)
    except ConfigError as exc:
        return _fail("config", str(exc), command, code=EXIT_USAGE)
    except OSError as exc:
        return _fail("io", str(exc), command, code=EXIT_IO)

    out = Path(args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)
    try:
        out.mkdir(parents=True, exist_ok=True)
        payload = RUNNERS[command](cfg, out)
        payload = {"command": command, "result": payload}
        write_json(out / f"{command}.json", payload, cfg, cfg["seed"])
    except ConfigError as exc:
        return _fail("config", str(exc), command, cfg.get("seed"), EXIT_USAGE)
    except OSError as exc:
        return _fail("io", str(exc), command, cfg.get("seed"), EXIT_IO)
    except (ValueError, RuntimeError, ArithmeticError) as exc:
        return _fail("numerical", f"{type(exc).__name__}: {exc}", command, cfg.get("seed"), EXIT_RUNTIME)
    print(out / f"{command}.json")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
