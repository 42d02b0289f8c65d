"""Command-line entry point: ``wnls <subcommand> --config run.json``.

A config is one JSON document::

    {
      "model":   {"mu": -1, "p": 5, "q": 6, "d": 1},
      "grid":    {"L": 16.0, "n_x": 512, "n_y": 32},
      "problem": {...subcommand specific...},
      "output":  {"sample_every": 0.01},
      "seed": 0
    }

Outputs go to ``--out`` (default: the current directory): JSON summaries,
CSV tables and binary checkpoints.  Exit status is 0 on success, 2 for an
invalid config and 3 when a solver or run did not meet its tolerances (the
summary is still written).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.fft as sfft

from . import diagnostics, dynamics, fibering, groundstate
from .checkpoint import read_checkpoint, write_checkpoint
from .errors import ConfigurationError, WNLSError
from .functionals import ModelParams, eval_core
from .grid import Field, GridSpec, make_grid

log = logging.getLogger("wnls")

SUBCOMMANDS = ("groundstate", "evolve", "sweep", "fibering", "diagnose")
EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3


class ConfigError(ConfigurationError):
    """Config problem located at a field path or a line of the JSON text."""


@dataclass
class RunConfig:
    params: ModelParams
    spec: GridSpec
    problem: dict
    output: dict
    seed: int = 0
    raw: dict = field(default_factory=dict)


def _require(block: dict, key: str, where: str):
    if key not in block:
        raise ConfigError(f"{where}.{key}: missing required field")
    return block[key]


def _number(block: dict, key: str, where: str, kind=float, default=None):
    if key not in block:
        if default is None:
            raise ConfigError(f"{where}.{key}: missing required field")
        return default
    val = block[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{where}.{key}: expected a number, got {val!r}")
    if kind is int:
        if float(val) != int(val):
            raise ConfigError(f"{where}.{key}: expected an integer, got {val!r}")
        return int(val)
    return float(val)


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: top level must be a JSON object")
    model = _require(raw, "model", source)
    grid = _require(raw, "grid", source)
    for name, blk in (("model", model), ("grid", grid)):
        if not isinstance(blk, dict):
            raise ConfigError(f"{name}: expected an object")
    mu = _number(model, "mu", "model", int)
    d = _number(model, "d", "model", int)
    p = _number(model, "p", "model")
    q = _number(model, "q", "model")
    try:
        params = ModelParams(mu, p, q, d)
    except ConfigurationError as exc:
        raise ConfigError(f"model: {exc}") from exc
    try:
        spec = make_grid(d, _number(grid, "L", "grid"), _number(grid, "n_x", "grid", int),
                         _number(grid, "n_y", "grid", int))
    except ConfigError:
        raise
    except ConfigurationError as exc:
        raise ConfigError(f"grid: {exc}") from exc
    problem = raw.get("problem", {})
    output = raw.get("output", {})
    if not isinstance(problem, dict) or not isinstance(output, dict):
        raise ConfigError("problem/output: expected objects")
    seed = _number(raw, "seed", source, int, default=0) if "seed" in raw else 0
    return RunConfig(params, spec, problem, output, seed, raw)


def load_config(path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
    return parse_config(text, str(path))


# -- shared helpers -----------------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def _solver_options(cfg: RunConfig, block: dict) -> groundstate.SolverOptions:
    allowed = {f for f in groundstate.SolverOptions.__dataclass_fields__ if f != "initial"}
    opts = {k: v for k, v in block.items() if k in allowed}
    unknown = set(block) - allowed
    if unknown:
        raise ConfigError(f"problem.solver: unknown field(s) {sorted(unknown)}")
    opts.setdefault("seed", cfg.seed)
    return groundstate.SolverOptions(**opts)


def _initial_field(cfg: RunConfig, block: dict | None, where: str) -> Field:
    """Initial datum: a checkpoint or a (possibly y-modulated) Gaussian."""
    spec = cfg.spec
    if block is None:
        raise ConfigError(f"{where}: missing required field")
    if "checkpoint" in block:
        u, meta = read_checkpoint(block["checkpoint"])
        if u.spec != spec:
            raise ConfigError(f"{where}.checkpoint: grid of the checkpoint differs from the config grid")
        return u
    g = block.get("gaussian")
    if not isinstance(g, dict):
        raise ConfigError(f"{where}: expected 'checkpoint' or 'gaussian'")
    amp = _number(g, "amplitude", f"{where}.gaussian", default=1.0)
    width = _number(g, "width", f"{where}.gaussian", default=1.0)
    eps = _number(g, "epsilon", f"{where}.gaussian", default=0.0)
    boost = _number(g, "boost", f"{where}.gaussian", default=0.0)
    r2 = spec.radius[..., None] ** 2
    y = spec.y.reshape((1,) * spec.d + (-1,))
    vals = amp * np.exp(-r2 / (2 * width * width)) * (1.0 + eps * np.cos(y))
    if boost:
        vals = vals * np.exp(1j * boost * spec.x_coords()[0])[..., None]
    return Field(spec, vals.astype(complex))


def _base_report(cfg: RunConfig, command: str, tolerances: dict) -> dict:
    return {"command": command, "config": cfg.raw, "tolerances": tolerances, "seed": cfg.seed}


# -- subcommands --------------------------------------------------------------------------------


def cmd_groundstate(cfg: RunConfig, out: Path) -> int:
    pb = cfg.problem
    target = pb.get("target", "mass" if cfg.params.mu == -1 else "omega")
    value = _number(pb, "value", "problem")
    opts = _solver_options(cfg, pb.get("solver", {}))
    lam = pb.get("lambda")
    family = pb.get("family", "sub")
    if lam == "inf":
        lam = math.inf
    if pb.get("reduced", False):
        key = "mass" if target == "mass" else "omega"
        res = groundstate.solve_reduced_rd({key: value}, cfg.params, cfg.spec, 1.0 if lam is None else lam,
                                           family, opts)
    elif lam is not None:
        res = groundstate.solve_rescaled(value, cfg.params, cfg.spec, lam, family,
                                         "mass" if target == "mass" else "frequency", opts)
    elif target == "mass":
        res = groundstate.solve_mc(value, cfg.params, cfg.spec, opts)
    else:
        res = groundstate.solve_gamma_omega(value, cfg.params, cfg.spec, opts)
    write_checkpoint(out / "ground_state.wnls", res.field, cfg.params, cfg.output.get("timestamp"))
    report = _base_report(cfg, "groundstate", asdict(opts) | {"initial": None})
    report["result"] = {
        "objective": res.objective, "multiplier": res.multiplier, "Q_residual": res.q_residual,
        "M": res.mass, "stationary_residual": res.stationary_residual,
        "y_dependence": res.y_dependence, "method": res.method, "converged": res.converged,
        "iterations": res.iterations, "candidates": res.notes.get("candidates"),
    }
    _write_json(out / "summary.json", report)
    return EXIT_OK if res.converged else EXIT_SOLVER


def cmd_evolve(cfg: RunConfig, out: Path) -> int:
    pb = cfg.problem
    u0 = _initial_field(cfg, pb.get("initial"), "problem.initial")
    t_end = _number(pb, "t_end", "problem")
    pol = dynamics.DtPolicy(
        dt_max=_number(pb, "dt_max", "problem", default=1e-3),
        adaptive=bool(pb.get("adaptive", True)),
        c_nl=_number(pb, "c_nl", "problem", default=0.1),
    )
    weights = []
    for i, w in enumerate(pb.get("weights", [])):
        try:
            weights.append(dynamics.WeightSpec(w["kind"], w.get("rho")))
        except (KeyError, TypeError, WNLSError) as exc:
            raise ConfigError(f"problem.weights[{i}]: {exc}") from exc
    every = cfg.output.get("sample_every")
    u, lg = dynamics.evolve(u0, cfg.params, t_end, pol, weights, every, linear=bool(pb.get("linear", False)))
    omega = pb.get("omega")
    header, rows = lg.rows(None if omega is None else float(omega))
    _write_csv(out / "timeseries.csv", header, rows)
    if lg.termination != "instability":
        write_checkpoint(out / "final_state.wnls", u, cfg.params, cfg.output.get("timestamp"))
    report = _base_report(cfg, "evolve", asdict(pol))
    M, E = np.asarray(lg.M), np.asarray(lg.E)
    report["result"] = {
        "termination": lg.termination, "steps": lg.steps, "t_final": lg.times[-1],
        "mass_drift": float(np.max(np.abs(M - M[0])) / M[0]),
        "energy_drift": float(np.max(np.abs(E - E[0])) / max(abs(E[0]), 1e-300)),
    }
    _write_json(out / "summary.json", report)
    return EXIT_OK if lg.termination in ("t_end", "blowup_detected") else EXIT_SOLVER


def cmd_sweep(cfg: RunConfig, out: Path) -> int:
    pb = cfg.problem
    values = _require(pb, "values", "problem")
    if not isinstance(values, list) or not values:
        raise ConfigError("problem.values: expected a non-empty list of numbers")
    tol = _number(pb, "tolerance", "problem", default=1e-6)
    opts = _solver_options(cfg, pb.get("solver", {}))
    rep = groundstate.sweep_dichotomy(values, cfg.params, cfg.spec, opts, tol)
    header = [rep.parameter, "objective", "reduced_2pi", "y_dependence", "multiplier", "converged"]
    rows = list(zip(rep.values, rep.objective, rep.comparison, rep.y_dependence, rep.multiplier,
                    [int(c) for c in rep.converged]))
    _write_csv(out / "sweep.csv", header, rows)
    obj = np.asarray(rep.objective)
    report = _base_report(cfg, "sweep", asdict(opts) | {"initial": None, "tolerance": tol})
    report["result"] = {
        "thresholds": rep.thresholds, "brackets": rep.brackets,
        "max_increase": float(np.max(np.diff(obj))) if obj.size > 1 else 0.0,
        "all_converged": all(rep.converged),
    }
    _write_json(out / "summary.json", report)
    return EXIT_OK if all(rep.converged) else EXIT_SOLVER


def cmd_fibering(cfg: RunConfig, out: Path) -> int:
    pb = cfg.problem
    u = _initial_field(cfg, pb.get("initial"), "problem.initial")
    t_min = _number(pb, "t_min", "problem", default=1e-2)
    t_max = _number(pb, "t_max", "problem", default=1e2)
    n_t = _number(pb, "n_t", "problem", int, default=200)
    ts = np.geomspace(t_min, t_max, n_t)
    table = fibering.fiber_profile(u, cfg.params, ts)
    _write_csv(out / "fibering.csv", ["t", "E", "Q"], table.tolist())
    fr = fibering.find_tstar(u, cfg.params)
    report = _base_report(cfg, "fibering", {"t_star_tol": 1e-10})
    report["result"] = {"t_star": fr.t_star, "Q_at_t_star": fr.q_at_tstar, "bracket": fr.bracket,
                        "sign_changes": fibering.sign_changes(table[:, 2])}
    _write_json(out / "summary.json", report)
    return EXIT_OK


def cmd_diagnose(cfg: RunConfig, out: Path) -> int:
    pb = cfg.problem
    u = _initial_field(cfg, pb.get("initial"), "problem.initial")
    kinds = pb.get("kinds", ["coercivity", "imdm", "proxy"])
    threshold = pb.get("threshold")
    omega = pb.get("omega")
    if threshold == "compute":
        opts = _solver_options(cfg, pb.get("solver", {}))
        rec = eval_core(u, cfg.params)
        if cfg.params.mu == -1:
            threshold = groundstate.solve_mc(rec.M, cfg.params, cfg.spec, opts).objective
        else:
            threshold = groundstate.solve_gamma_omega(omega, cfg.params, cfg.spec, opts).objective
    result = {"threshold": threshold}
    status = EXIT_OK
    cut = pb.get("cutoff", {})
    R = float(cut.get("R", cfg.spec.L / 4))
    z = tuple(cut.get("z", [0.0] * cfg.spec.d))
    for kind in kinds:
        try:
            if kind == "coercivity":
                rep = diagnostics.coercivity_check(
                    u, cfg.params, diagnostics.CutoffSpec(R, z), float(pb.get("delta", 1e-3)),
                    threshold, omega, pb.get("z_grid"), pb.get("R_ladder"))
                result["coercivity"] = {k: v for k, v in rep.items() if k != "table"}
            elif kind == "imdm":
                zg = pb.get("z_grid", [0.0])
                result["imdm"] = diagnostics.imdm_snapshot(u, cfg.params, pb.get("R_ladder", [R]), zg)
            elif kind == "proxy":
                t_end = float(pb.get("t_end", 1.0))
                _, lg = dynamics.evolve(u, cfg.params, t_end, dynamics.DtPolicy(
                    dt_max=float(pb.get("dt_max", 1e-3))), sample_every=cfg.output.get("sample_every"))
                result["proxy"] = diagnostics.scattering_proxy(lg, threshold, omega)
            else:
                raise ConfigError(f"problem.kinds: unknown diagnostic {kind!r}")
        except ConfigError:
            raise
        except WNLSError as exc:
            result[kind] = {"error": f"{type(exc).__name__}: {exc}"}
            status = EXIT_SOLVER
    report = _base_report(cfg, "diagnose", {"delta": pb.get("delta", 1e-3)})
    report["result"] = result
    _write_json(out / "summary.json", report)
    return status


COMMANDS = {"groundstate": cmd_groundstate, "evolve": cmd_evolve, "sweep": cmd_sweep,
            "fibering": cmd_fibering, "diagnose": cmd_diagnose}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wnls", description="Combined-power NLS on R^d x T")
    ap.add_argument("command", choices=SUBCOMMANDS)
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    ap.add_argument("--threads", type=int, default=None, help="FFT worker threads (fallback: WNLS_THREADS)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    threads = args.threads or int(os.environ.get("WNLS_THREADS", "1") or 1)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg.seed = args.seed
            cfg.raw = dict(cfg.raw, seed=args.seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with sfft.set_workers(max(1, threads)):
            return COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"wnls: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except WNLSError as exc:
        print(f"wnls: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":  # pragma: no cover
    main_exit()
