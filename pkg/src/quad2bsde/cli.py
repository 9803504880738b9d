"""Batch front end: ``quad2bsde <subcommand> <config.toml>``.

Every run writes ``manifest.json`` (config echo, versions, timings, results
or the error) and ``diagnostics.csv`` into the output directory, plus the
subcommand's solution files.  Exit status: 0 success, 1 invalid
configuration or problem, 2 solver failure.
"""

from __future__ import annotations

import argparse
import json
import os
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import diagnostic_rows
from .errors import ConfigurationError, ConvergenceError, EvaluationError, Quad2BsdeError, RangeError
from .io import (write_2bsde_solution, write_bsde_solution, write_per_control_k,
                 write_pde_solution, write_risk_solution, write_rows)
from .lattice import build_lattice
from .model import make_problem, validate_problem
from .pde import cross_validate, default_pde_steps, solve_fnpde
from .qbsde import DEFAULT_KMAX, DEFAULT_TOL, solve_bsde
from .risk import RiskSensitiveSpec, entropic_risk, solve_risk_sensitive
from .twobsde import solve_2bsde, stationarity_experiment

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

__all__ = ["SUBCOMMANDS", "RunConfig", "load_config", "run", "main", "OUTPUT_ENV"]

SUBCOMMANDS = ("solve-bsde", "solve-2bsde", "entropic", "risk-sensitive", "pde",
               "cross-validate", "diagnostics", "convergence", "stationarity")
OUTPUT_ENV = "QUAD2BSDE_OUTPUT_DIR"

_PROBLEM_KEYS = {"T", "x0", "a_low", "a_high", "n_grid", "stddev_mult", "generator",
                 "generator_params", "terminal", "terminal_params"}
_NUMERIC_KEYS = {"N", "tol", "kmax", "pde_dt", "pde_dx", "seed"}
_EXTRA_KEYS = {"policy", "N_list", "n_list", "reference", "write_dk", "theta", "controls_u",
               "drift", "cost", "tol_xv"}


@dataclass
class RunConfig:
    subcommand: str
    problem: dict
    numeric: dict
    output_dir: Path
    extra: dict = field(default_factory=dict)

    def echo(self) -> dict:
        return {"subcommand": self.subcommand, "problem": self.problem,
                "numeric": self.numeric, "output_dir": str(self.output_dir), **self.extra}


def load_config(subcommand: str, path, output_dir=None) -> RunConfig:
    if subcommand not in SUBCOMMANDS:
        raise ConfigurationError(
            f"unknown subcommand {subcommand!r}; expected one of: {', '.join(SUBCOMMANDS)}")
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"config file {path} not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"malformed config {path}: {exc}") from None
    unknown = set(raw) - _PROBLEM_KEYS - _NUMERIC_KEYS - _EXTRA_KEYS - {"output_dir"}
    if unknown:
        raise ConfigurationError(f"unknown config keys {sorted(unknown)} in {path}")
    problem = {k: raw[k] for k in sorted(_PROBLEM_KEYS) if k in raw}
    numeric = {"N": 200, "tol": DEFAULT_TOL, "kmax": DEFAULT_KMAX, "seed": 0}
    numeric.update({k: raw[k] for k in sorted(_NUMERIC_KEYS) if k in raw})
    extra = {k: raw[k] for k in sorted(_EXTRA_KEYS) if k in raw}
    out = output_dir or os.environ.get(OUTPUT_ENV) or raw.get("output_dir") \
        or f"runs/{subcommand}"
    return RunConfig(subcommand, problem, numeric, Path(out), extra)


def _build_problem(cfg: RunConfig):
    pr = dict(cfg.problem)
    gen = pr.pop("generator", "zero")
    term = pr.pop("terminal", "constant")
    if cfg.subcommand == "entropic" and gen != "purely_quadratic":
        raise ConfigurationError("entropic needs generator = \"purely_quadratic\"")
    return make_problem(gen, term, generator_params=pr.pop("generator_params", None),
                        terminal_params=pr.pop("terminal_params", None), **pr)


def _risk_spec(cfg: RunConfig, p):
    ex = cfg.extra
    try:
        u = ex["controls_u"]
    except KeyError:
        raise ConfigurationError("risk-sensitive needs controls_u, drift, cost, theta") from None
    return RiskSensitiveSpec.from_constants(ex.get("theta", 1.0), u, ex.get("drift", [0.0] * len(u)),
                                            ex.get("cost", [0.0] * len(u)), p.terminal)


def _run(cfg: RunConfig, manifest: dict) -> list:
    """Dispatch the subcommand; returns diagnostics rows."""
    out = cfg.output_dir
    num = cfg.numeric
    p = _build_problem(cfg)
    N = int(num["N"])
    stddev = float(cfg.problem.get("stddev_mult", 4.0))
    lat = build_lattice(p, N, stddev)
    report = validate_problem(p, seed=int(num["seed"]), lattice=lat)
    rows = [(f"validate:{c.name}", json.dumps(c.witness) if c.witness else "", "", "", c.passed)
            for c in report.checks]
    manifest["validation"] = {c.name: c.passed for c in report.checks}
    if not report.passed:
        failed = ", ".join(c.name for c in report.failures())
        raise _ValidationFailed(f"problem validation failed: {failed}", rows)
    tol, kmax = float(num["tol"]), int(num["kmax"])
    results = manifest["results"]
    sub = cfg.subcommand

    if sub == "solve-bsde":
        sol = solve_bsde(p, lat, cfg.extra.get("policy", p.controls.a_high), tol, kmax)
        write_bsde_solution(out / "solution.csv", sol)
        results["value"] = sol.value
        rows += diagnostic_rows(sol, p, lat)
    elif sub in ("solve-2bsde", "diagnostics"):
        sol = solve_2bsde(p, lat, tol, kmax)
        write_2bsde_solution(out, sol)
        if cfg.extra.get("write_dk", sub == "diagnostics"):
            write_per_control_k(out / "dk.csv", sol)
        results.update(value=sol.value, min_gap=sol.min_gap,
                       min_dk=float(sol.per_control_k.min()))
        rows += diagnostic_rows(sol, p, lat)
    elif sub == "entropic":
        val = entropic_risk(p, p.terminal, lat)
        results["value"] = val
        print(repr(float(val)))
    elif sub == "risk-sensitive":
        rs = _risk_spec(cfg, p)
        rsol = solve_risk_sensitive(rs, p, lat, tol, kmax)
        write_risk_solution(out / "risk.csv", rsol)
        results.update(value=rsol.value, J=rsol.J)
        rows += diagnostic_rows(rsol.ystar, p, lat)
    elif sub == "pde":
        dt_p, dx_p = _pde_steps(cfg, p, N)
        fd = solve_fnpde(p, dt_p, dx_p, half_range=lat.half_width * lat.dx)
        write_pde_solution(out / "pde.csv", fd)
        results.update(value=fd.value_at(p.x0), scheme=fd.scheme_report)
    elif sub == "cross-validate":
        dt_p, dx_p = _pde_steps(cfg, p, N)
        rep = cross_validate(p, lat, dt_p, dx_p, cfg.extra.get("tol_xv"))
        write_2bsde_solution(out, rep["lattice_solution"])
        write_pde_solution(out / "pde.csv", rep["pde_solution"])
        results.update({k: rep[k] for k in ("lattice_value", "pde_value", "difference",
                                              "max_node_difference", "tol_xv", "passed")})
        rows.append(("cross_validate", f"dt_p={dt_p:.6g},dx_p={dx_p:.6g}", rep["difference"],
                     rep["tol_xv"], rep["passed"]))
    elif sub == "convergence":
        ref = cfg.extra.get("reference")
        table = []
        for n_steps in cfg.extra.get("N_list", [50, 100, 200, 400]):
            v = solve_2bsde(p, build_lattice(p, int(n_steps), stddev), tol, kmax).value
            err = abs(v - ref) if ref is not None else float("nan")
            table.append((int(n_steps), v, err))
        write_rows(out / "convergence.csv", ["N", "value", "error"], table)
        results["table"] = [list(r) for r in table]
        for n_steps, v, err in table:
            print(f"{n_steps:6d}  {v:.12f}  {err:.3e}")
    elif sub == "stationarity":
        rep = stationarity_experiment(p, lat, cfg.extra.get("n_list", [0.5, 1.0, 2.0, 4.0, 8.0]),
                                      tol, kmax)
        write_rows(out / "stationarity.csv", ["n", "value", "diff_from_untruncated"],
                   [(n, v, v - rep["untruncated"]) for n, v in zip(rep["n_list"], rep["values"])])
        results.update({k: rep[k] for k in ("untruncated", "sup_z", "n_star",
                                              "stable_above_sup_z")})
    return rows


def _pde_steps(cfg, p, N):
    d_dt, d_dx = default_pde_steps(p, N)
    return float(cfg.numeric.get("pde_dt", d_dt)), float(cfg.numeric.get("pde_dx", d_dx))


class _ValidationFailed(Exception):
    def __init__(self, msg, rows):
        super().__init__(msg)
        self.rows = rows


def _versions():
    return {"quad2bsde": __version__, "numpy": np.__version__,
            "python": platform.python_version()}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    return obj


def run(cfg: RunConfig) -> int:
    out = cfg.output_dir
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        print(f"error: output directory {out} is not writable ({exc.strerror}); "
              f"set output_dir or ${OUTPUT_ENV}", file=sys.stderr)
        return 1
    manifest = {"config": cfg.echo(), "versions": _versions(), "results": {},
                "status": "ok", "error": None}
    start = time.perf_counter()
    rows = []
    code = 0
    try:
        rows = _run(cfg, manifest)
    except _ValidationFailed as exc:
        rows, code = exc.rows, 1
        manifest.update(status="validation_failed", error=str(exc))
    except (ConvergenceError, EvaluationError) as exc:
        code = 2
        manifest.update(status="solver_error", error=str(exc))
    except (ConfigurationError, RangeError, Quad2BsdeError, ValueError) as exc:
        code = 1
        manifest.update(status="invalid_configuration", error=str(exc))
    manifest["timings"] = {"total_seconds": time.perf_counter() - start}
    write_rows(out / "diagnostics.csv", ["check", "parameters", "lhs", "rhs", "pass"], rows)
    (out / "manifest.json").write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True))
    if code:
        print(f"error: {manifest['error']}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="quad2bsde", description=__doc__.splitlines()[0])
    parser.add_argument("subcommand", help=" | ".join(SUBCOMMANDS))
    parser.add_argument("config", help="TOML run configuration")
    parser.add_argument("--output-dir", default=None,
                        help=f"overrides ${OUTPUT_ENV} and the config's output_dir")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.subcommand, args.config, args.output_dir)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return run(cfg)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
