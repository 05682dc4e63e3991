"""Command-line front end.

Each subcommand reads an optional JSON document whose keys are validated
against a small schema (unknown keys and out-of-range values are rejected
with their key path), then writes CSV/JSON artifacts into ``--out``.
Exit codes: 0 success, 1 verification failure, 2 usage or config error,
3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3
SUBCOMMANDS = ("pde", "lpp", "simulate", "verify", "experiment")


class ConfigError(ValueError):
    pass


# ------------------------------------------------------------------ schema

def _num(lo=-math.inf, hi=math.inf, lo_open=False):
    def check(path, v):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {v!r}")
        if v < lo or v > hi or (lo_open and v == lo):
            bracket = "(" if lo_open else "["
            raise ConfigError(f"{path}: value {v} outside {bracket}{lo}, {hi}]")
        return float(v)
    return check


def _int(lo=-(2 ** 63), hi=2 ** 64 - 1):
    def check(path, v):
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"{path}: expected an integer, got {v!r}")
        if not lo <= v <= hi:
            raise ConfigError(f"{path}: value {v} outside [{lo}, {hi}]")
        return v
    return check


def _list(item):
    def check(path, v):
        if not isinstance(v, list):
            raise ConfigError(f"{path}: expected a list, got {v!r}")
        return [item(f"{path}[{i}]", x) for i, x in enumerate(v)]
    return check


def _choice(*options):
    def check(path, v):
        if v not in options:
            raise ConfigError(f"{path}: expected one of {list(options)}, got {v!r}")
        return v
    return check


def _bool(path, v):
    if not isinstance(v, bool):
        raise ConfigError(f"{path}: expected true or false, got {v!r}")
    return v


def _raw(path, v):
    return v


def _section(schema):
    def check(path, v):
        return validate(v, schema, path)
    return check


def validate(doc, schema: dict, path: str = "") -> dict:
    """Apply defaults, reject unknown keys, run per-key checks."""
    if not isinstance(doc, dict):
        raise ConfigError(f"{path or '<root>'}: expected an object")
    for key in doc:
        if key not in schema:
            raise ConfigError(f"unknown key {_join(path, key)!r}")
    out = {}
    for key, (check, default) in schema.items():
        if key in doc:
            out[key] = check(_join(path, key), doc[key])
        elif isinstance(default, dict) and default.get("__section__"):
            out[key] = check(_join(path, key), {})
        else:
            out[key] = default
    return out


def _join(path, key):
    return f"{path}.{key}" if path else key


_SECTION = {"__section__": True}
_UNIT = _num(0.0, 1.0)

INITIAL = {
    "kind": (_choice("local-equilibrium", "riemann", "step"), "riemann"),
    "lambda": (_UNIT, 0.8),
    "rho": (_UNIT, 0.2),
    "k": (_int(), 0),
    "profile": (_raw, {"tag": "bump"}),
}

COMMON = {
    "seed": (_int(0, 2 ** 64 - 1), 0),
    "parallelism": (_int(1, 1024), 1),
}

SCHEMAS = {
    "pde": {
        "profile": (_raw, {"tag": "riemann", "lambda": 0.2, "rho": 0.8}),
        "t": (_num(0.0, lo_open=True), 1.0),
        "x_min": (_num(), -2.0),
        "x_max": (_num(), 2.0),
        "points": (_int(2, 10 ** 7), 401),
    },
    "lpp": {
        "task": (_choice("bound", "hypothesis", "prop1", "shape"), "bound"),
        "w": (_num(0.0), 1.0),
        "r": (_num(0.0), 1.0),
        "t": (_num(0.0, lo_open=True), 4.5),
        "ns": (_list(_int(1)), [20, 40, 80]),
        "reps": (_int(0), 10000),
        "alpha": (_num(0.0, lo_open=True), 1.0),
        "beta": (_num(0.0, lo_open=True), 1.0),
        "C": (_num(0.0), 10.0),
        "eps": (_num(0.0, 1.0), 0.05),
        "x": (_num(), 0.0),
        "h": (_num(0.0), 0.05),
    },
    "simulate": {
        "initial": (_section(INITIAL), _SECTION),
        "n": (_int(1), 1),
        "left": (_int(), -100),
        "right": (_int(), 100),
        "T": (_num(0.0), 50.0),
        "snapshots": (_int(1, 10 ** 6), 11),
        "second_class": (_bool, True),
        "x0": (_int(), 0),
    },
    "verify": {
        "initial": (_section(INITIAL), _SECTION),
        "half_width": (_int(2), 100),
        "T": (_num(0.0, lo_open=True), 50.0),
        "snapshots": (_int(1), 20),
        "seeds": (_int(1), 20),
        "x0": (_int(), 0),
    },
    "experiment": {
        "initial": (_section(INITIAL), _SECTION),
        "t": (_num(0.0, lo_open=True), 1.0),
        "ns": (_list(_int(1)), None),
        "replicas": (_list(_int(0)), None),
        "margin_factor": (_num(0.0), 1.0),
        "obs_factor": (_num(0.0), 0.25),
        "statistic": (_choice("iqr", "std"), "iqr"),
        "x0": (_int(), 0),
    },
}


@dataclass
class RunConfig:
    subcommand: str
    params: dict
    seed: int = 0
    out: Path = Path(".")
    parallelism: int = 1


def parse_config(subcommand: str, document=None, overrides: dict | None = None) -> RunConfig:
    """Validate a JSON document (text, dict or ``None``) for ``subcommand``."""
    if subcommand not in SCHEMAS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    if document is None:
        doc = {}
    elif isinstance(document, str):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from None
    else:
        doc = document
    if not isinstance(doc, dict):
        raise ConfigError(f"config must be a JSON object, got {type(doc).__name__}")
    doc = dict(doc)
    doc.update({k: v for k, v in (overrides or {}).items() if v is not None})
    params = validate(doc, {**SCHEMAS[subcommand], **COMMON})
    if subcommand == "experiment":
        from .mc_harness import DEFAULT_NS, DEFAULT_REPLICAS
        ns = params["ns"] if params["ns"] is not None else list(DEFAULT_NS)
        reps = params["replicas"]
        if reps is None:
            reps = list(DEFAULT_REPLICAS) if params["ns"] is None else [100] * len(ns)
        if len(reps) == 1 and len(ns) > 1:
            reps = reps * len(ns)
        if not ns:
            raise ConfigError("experiment: ns must list at least one scale")
        if len(reps) != len(ns):
            raise ConfigError("experiment: replicas must match ns in length")
        params["ns"], params["replicas"] = ns, reps
    if subcommand in ("simulate",) and not params["left"] < 0 < params["right"]:
        raise ConfigError("simulate: need left < 0 < right")
    if "initial" in params:
        _check_initial(params["initial"])
    seed = params.pop("seed")
    par = params.pop("parallelism")
    return RunConfig(subcommand, params, seed, Path("."), par)


def _check_initial(init):
    if init["kind"] == "local-equilibrium":
        _profile(init["profile"], "initial.profile")


def _profile(doc, path):
    from .scalar_law import Profile
    try:
        return Profile.from_document(doc)
    except (KeyError, ValueError, TypeError) as e:
        raise ConfigError(f"{path}: {e}") from None


def _initial_spec(init):
    from .init_profiles import InitialSpec
    kind = init["kind"]
    if kind == "local-equilibrium":
        return InitialSpec(kind, profile=_profile(init["profile"], "initial.profile"))
    if kind == "riemann":
        return InitialSpec(kind, lam=init["lambda"], rho=init["rho"])
    return InitialSpec(kind, k=init["k"])


# ---------------------------------------------------------------- commands

def _cmd_pde(cfg: RunConfig) -> int:
    from .scalar_law import antiderivative, solve_grid, write_solution_csv
    p = cfg.params
    u0 = antiderivative(_profile(p["profile"], "profile"))
    xs = np.linspace(p["x_min"], p["x_max"], p["points"])
    res = solve_grid(u0, xs, p["t"])
    write_solution_csv(cfg.out / "pde_solution.csv", xs, p["t"], res)
    shocks = [float(x) for x, r in zip(xs, res) if r.is_shock]
    print(f"pde: {len(xs)} points, shock cells at {shocks}")
    return EXIT_OK


def _cmd_lpp(cfg: RunConfig) -> int:
    from . import lpp_core as L
    p = cfg.params
    task = p["task"]
    status = EXIT_OK
    if task == "bound":
        rep = L.ld_bound_check(p["w"], p["r"], p["t"], p["ns"], p["reps"], cfg.seed)
        L.write_tail_csv(cfg.out / "lpp_bound.csv", rep.rows)
        print(f"lpp bound: Psi={rep.psi:.6g}, violations={rep.violations}")
        status = EXIT_VERIFY if rep.violations else EXIT_OK
    elif task == "hypothesis":
        a, b = p["alpha"], p["beta"]
        rep = L.hypothesis_h_probe(lambda n: a, lambda n: b, p["C"], p["ns"], p["reps"],
                                   cfg.seed, eps=p["eps"])
        L.write_tail_csv(cfg.out / "lpp_hypothesis.csv", rep.rows)
        print(f"hypothesis probe (evidence only): smallest C with tail <= {p['eps']}: "
              f"{rep.C_required:.4g}")
    elif task == "prop1":
        rows = [L.xi_lower_tail(p["x"], p["t"], p["h"], n, p["reps"],
                                L.rng.derive_seed(cfg.seed, n)) for n in p["ns"]]
        L.write_tail_csv(cfg.out / "lpp_prop1.csv", rows)
        bad = sum(not r.passed for r in rows)
        print(f"prop1: violations={bad}")
        status = EXIT_VERIFY if bad else EXIT_OK
    else:
        with open(cfg.out / "lpp_shape.csv", "w") as fh:
            fh.write("n,reps,mean_ratio,shape\n")
            for n in p["ns"]:
                H = L.passage_times(n, n, L.rng.derive_seed(cfg.seed, n), max(p["reps"], 1))
                fh.write(f"{n},{H.size},{float(H.mean() / n)!r},"
                         f"{L.shape_limit(p['alpha'], p['beta'])!r}\n")
    return status


def _cmd_simulate(cfg: RunConfig) -> int:
    from .lattice_process import Window, evolve, sample_clocks, track_second_class
    p = cfg.params
    window = Window(p["left"], p["right"], p["T"])
    cfg0 = _initial_spec(p["initial"]).sample(p["n"], window, cfg.seed)
    clocks = sample_clocks(window, cfg.seed)
    snaps = np.linspace(0.0, p["T"], p["snapshots"])
    evolve(cfg0, clocks, p["T"], snaps).to_csv(cfg.out / "trajectory.csv")
    if p["second_class"]:
        st = track_second_class(cfg0, clocks, p["x0"], p["T"], snaps)
        st.to_csv(cfg.out / "second_class.csv")
        print(f"simulate: X({p['T']}) = {st.x}")
    return EXIT_OK


def _cmd_verify(cfg: RunConfig) -> int:
    from .growth_variational import verify_suite
    p = cfg.params
    rep = verify_suite(_initial_spec(p["initial"]), p["half_width"], p["T"], p["snapshots"],
                       range(p["seeds"]), cfg.seed, x0=p["x0"])
    (cfg.out / "verify_report.json").write_text(rep.to_text() + "\n")
    print(f"verify: {rep.runs} runs, {rep.violations} violations")
    return EXIT_VERIFY if rep.violations else EXIT_OK


def _cmd_experiment(cfg: RunConfig) -> int:
    from . import mc_harness as H
    p = cfg.params
    spec = _initial_spec(p["initial"])
    plan = H.ExperimentPlan(spec, p["t"], tuple(p["ns"]), tuple(p["replicas"]), cfg.seed,
                            p["x0"], p["margin_factor"], p["obs_factor"])
    assumptions = H.assumption_report(plan)
    recs = H.run_fluctuation_experiment(plan, cfg.parallelism)
    H.write_records(cfg.out / "records.csv", recs)
    (cfg.out / "assumptions.json").write_text(json.dumps(assumptions, indent=2,
                                                         sort_keys=True) + "\n")
    try:
        fit = H.fit_exponent(recs, p["statistic"], seed=cfg.seed % 2 ** 32)
    except ValueError as e:
        print(f"experiment: no exponent fit ({e})")
    else:
        H.write_fits(cfg.out / "fits.csv", [fit])
        print(f"experiment: chi={fit.chi:.4f} CI=[{fit.ci_low:.4f}, {fit.ci_high:.4f}]")
    if spec.kind == "riemann" and spec.lam > spec.rho:
        u = H.uniform_law_test(recs, spec.lam, spec.rho)
        print(f"experiment: KS distance to uniform law = {u.ks:.4f}")
    return EXIT_OK


COMMANDS = {"pde": _cmd_pde, "lpp": _cmd_lpp, "simulate": _cmd_simulate,
            "verify": _cmd_verify, "experiment": _cmd_experiment}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tasep-lab",
                                 description="TASEP, second-class particle and LPP laboratory")
    sub = ap.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="JSON configuration document")
        sp.add_argument("--seed", type=int, help="base seed (unsigned 64-bit)")
        sp.add_argument("--out", type=Path, default=Path("."), help="output directory")
        sp.add_argument("--parallelism", type=int, help="worker processes")
        sp.add_argument("--scale", type=int, nargs="+", help="override the scale grid n")
        sp.add_argument("--replicas", type=int, nargs="+", help="override replicas per scale")
    return ap


def _overrides(subcommand, args) -> dict:
    ov = {}
    if args.scale is not None:
        if subcommand == "experiment":
            ov["ns"] = args.scale
        elif subcommand == "lpp":
            ov["ns"] = args.scale
        elif subcommand == "simulate":
            ov["n"] = args.scale[0]
    if args.replicas is not None:
        if subcommand == "experiment":
            ov["replicas"] = args.replicas
        elif subcommand == "lpp":
            ov["reps"] = args.replicas[0]
        elif subcommand == "verify":
            ov["seeds"] = args.replicas[0]
    return ov


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    try:
        text = args.config.read_text() if args.config else None
    except OSError as e:
        print(f"error: cannot read config: {e}", file=sys.stderr)
        return EXIT_IO
    try:
        doc = None if text is None else json.loads(text)
        if doc is not None and not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        if args.seed is not None:
            doc = {**(doc or {}), "seed": args.seed}
        if args.parallelism is not None:
            doc = {**(doc or {}), "parallelism": args.parallelism}
        cfg = parse_config(args.subcommand, doc, _overrides(args.subcommand, args))
    except json.JSONDecodeError as e:
        print(f"error: config is not valid JSON: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    cfg.out = args.out
    try:
        cfg.out.mkdir(parents=True, exist_ok=True)
        started = time.time()
        status = COMMANDS[args.subcommand](cfg)
        meta = {"subcommand": cfg.subcommand, "seed": cfg.seed, "started": started,
                "finished": time.time()}
        (cfg.out / "run_meta.json").write_text(json.dumps(meta) + "\n")
    except (ConfigError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    return status


if __name__ == "__main__":
    sys.exit(main())
