"""Command line entry point.

    thermoform validate CONFIG
    thermoform run CONFIG [--out DIR] [--jobs N]

Exit status: 0 success, 1 invalid configuration, 2 numerical
non-convergence (artifacts are still written), 3 unexpected failure.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import (ConfigError, Resolved, config_json, load_config, resolve_all,
                     target_measure)
from .convex import RateFunctionHandle, entropy_approximation_sequence
from .errors import ConvergenceError, ThermoformError
from .ldp import ldp_report
from .measures import entropy_rate
from .pressure import (equilibrium_state, pressure_2d_box, pressure_2d_strip,
                       pressure_periodic, pressure_separated, pressure_spectral)
from .report import csv_text, fmt, json_text, write_text
from .shift import format_word

EXIT_OK, EXIT_INVALID, EXIT_NONCONVERGED, EXIT_INTERNAL = 0, 1, 2, 3


@dataclass
class Outcome:
    summary: str
    artifacts: list = field(default_factory=list)      # (file name, text)
    problems: list = field(default_factory=list)       # non-convergence diagnostics


class _Serial:
    def map(self, fn, items):
        return [fn(x) for x in items]


def _handle(res: Resolved) -> RateFunctionHandle:
    tol = res.config.tolerances
    return RateFunctionHandle(res.space, res.f, res.S, grad_tol=tol.grad_tol,
                              t_bound=tol.t_bound, max_iter=tol.max_iter)


# ----------------------------------------------------------------- tasks

def task_pressure_sweep(res: Resolved, pool) -> Outcome:
    p, cfg = res.config.params, res.config
    spectral = pressure_spectral(res.space, res.f).value
    jobs = [(route, n) for route in p.routes for n in p.n]

    def one(job):
        route, n = job
        if route == "periodic":
            return pressure_periodic(res.space, res.f, n, cfg.cap)
        return pressure_separated(res.space, res.f, n, p.r, cfg.cap)

    rows = []
    for (route, n), out in zip(jobs, list(pool.map(one, jobs))):
        err = abs(out.value - spectral) if out.finite else math.inf
        rows.append([route, n, p.r if route == "separated" else "", out.value, spectral, err])
    text = csv_text(["route", "n", "r", "estimate", "spectral_reference", "abs_error"], rows)
    return Outcome(f"pressure-sweep {cfg.name}: spectral {fmt(spectral)}, {len(rows)} rows",
                   [(f"{cfg.name}.csv", text)])


def task_equilibrium(res: Resolved, pool) -> Outcome:
    cfg = res.config
    P = pressure_spectral(res.space, res.f).value
    mu = equilibrium_state(res.space, res.f)
    doc = {
        "name": cfg.name, "task": cfg.task,
        "pressure": P, "entropy": entropy_rate(mu),
        "measure": {"order": mu.order,
                    "states": [format_word(w, res.space.k) for w in mu.states],
                    "transition": mu.Q, "stationary": mu.pi},
        "config": config_json(cfg),
    }
    return Outcome(f"equilibrium {cfg.name}: pressure {fmt(P)}, order {mu.order}",
                   [(f"{cfg.name}.json", json_text(doc))])


def task_rate_sweep(res: Resolved, pool) -> Outcome:
    p, cfg = res.config.params, res.config
    handle = _handle(res)
    if p.points is not None:
        xs = [np.asarray(x, dtype=float) for x in p.points]
    else:
        count = int(math.floor((p.grid.hi - p.grid.lo) / p.grid.step + 1e-9)) + 1
        xs = [np.array([p.grid.lo + i * p.grid.step]) for i in range(count)]
    results = list(pool.map(handle.rate_at, xs))
    d = handle.d
    header = [f"x_{i + 1}" for i in range(d)] + ["I"] + [f"t_{i + 1}" for i in range(d)] + ["converged"]
    rows, problems = [], []
    for x, r in zip(xs, results):
        t = [None] * d if r.t is None else list(r.t)
        rows.append(list(x) + [r.value] + t + [r.converged])
        if not r.converged and not r.infinite:
            problems.append(f"x={[fmt(v) for v in x]}: gradient norm {fmt(r.grad_norm)} "
                            f"after {r.iterations} iterations")
    return Outcome(f"rate-sweep {cfg.name}: {len(rows)} points, "
                   f"{sum(r.infinite for r in results)} outside the moment range",
                   [(f"{cfg.name}.csv", csv_text(header, rows))], problems)


def task_ldp_report(res: Resolved, pool) -> Outcome:
    p, cfg = res.config.params, res.config
    rep = ldp_report(res.space, res.f, res.S, res.box, p.n, p.variant, r=p.r, c=p.c,
                     handle=_handle(res), cap=cfg.cap, pool=pool)
    header = ["variant", "n", "box", "mass", "rate_estimate", "neg_inf_rate", "slack", "gap"]
    rows = [[r.variant, r.n, r.box, r.mass, r.estimate.value, r.neg_inf_rate, r.slack, r.gap]
            for r in rep.rows]
    doc = {"name": cfg.name, "task": cfg.task, "variant": p.variant, "box": res.box.to_json(),
           "inf_rate": rep.inf_rate.to_json(),
           "upper_bound_holds": rep.upper_bound_holds(),
           "rows": [r.to_json() for r in rep.rows], "config": config_json(cfg)}
    return Outcome(f"ldp-report {cfg.name}: {p.variant}, {len(rows)} rows, "
                   f"inf rate {fmt(rep.inf_rate.value)}",
                   [(f"{cfg.name}.csv", csv_text(header, rows)), (f"{cfg.name}.json", json_text(doc))])


def task_entropy_approx(res: Resolved, pool) -> Outcome:
    p, cfg = res.config.params, res.config
    mu = target_measure(res)
    steps = entropy_approximation_sequence(res.space, res.f, mu, p.max_window,
                                           eta=cfg.tolerances.eta, grad_tol=cfg.tolerances.grad_tol)
    h = entropy_rate(mu)
    doc = [{"target_entropy": h, **s.to_json()} for s in steps]
    problems = [f"n={s.n}: dual did not converge ({s.diagnostics})" for s in steps if not s.converged]
    last = steps[-1]
    return Outcome(f"entropy-approx {cfg.name}: {len(steps)} steps, final entropy gap "
                   f"{fmt(last.entropy_gap)}", [(f"{cfg.name}.json", json_text(doc))], problems)


def task_2d_pressure(res: Resolved, pool) -> Outcome:
    p, cfg = res.config.params, res.config
    k = res.space.k
    jobs = [("strip", (w,)) for w in p.strip_widths] + [("box", tuple(b)) for b in p.boxes]

    def one(job):
        route, size = job
        if route == "strip":
            return pressure_2d_strip(k, p.nn, size[0])
        return pressure_2d_box(k, p.nn, size[0], size[1], cap=cfg.cap)

    rows = [[route, "x".join(str(s) for s in size), out.value]
            for (route, size), out in zip(jobs, list(pool.map(one, jobs)))]
    return Outcome(f"2d-pressure {cfg.name}: {len(rows)} rows",
                   [(f"{cfg.name}.csv", csv_text(["route", "size", "value"], rows))])


TASK_RUNNERS = {
    "pressure-sweep": task_pressure_sweep,
    "equilibrium": task_equilibrium,
    "rate-sweep": task_rate_sweep,
    "ldp-report": task_ldp_report,
    "entropy-approx": task_entropy_approx,
    "2d-pressure": task_2d_pressure,
}


# ----------------------------------------------------------------- commands

def _fail(code: int, msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return code


def cmd_validate(args) -> int:
    try:
        run = load_config(args.config)
        resolved = resolve_all(run)
    except ThermoformError as exc:
        return _fail(EXIT_INVALID, str(exc))
    print(f"ok: {len(resolved)} experiment(s)")
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        run = load_config(args.config)
        resolved = resolve_all(run)
    except ThermoformError as exc:
        return _fail(EXIT_INVALID, str(exc))
    out_dir = Path(args.out or os.environ.get("THERMOFORM_OUT") or run.output_dir)
    jobs = args.jobs if args.jobs is not None else run.jobs
    if jobs < 1:
        return _fail(EXIT_INVALID, f"--jobs must be >= 1, got {jobs}")
    status = EXIT_OK
    executor = ThreadPoolExecutor(max_workers=jobs) if jobs > 1 else None
    pool = executor if executor is not None else _Serial()
    try:
        for res in resolved:
            try:
                outcome = TASK_RUNNERS[res.config.task](res, pool)
            except ConvergenceError as exc:
                print(f"{res.config.task} {res.config.name}: did not converge: {exc}", file=sys.stderr)
                status = EXIT_NONCONVERGED
                continue
            except ConfigError as exc:
                return _fail(EXIT_INVALID, str(exc))
            except ThermoformError as exc:
                return _fail(EXIT_INVALID, f"{res.pointer}: {exc}")
            for name, text in outcome.artifacts:
                write_text(out_dir / name, text)
            print(outcome.summary)
            for msg in outcome.problems:
                print(f"{res.config.name}: not converged: {msg}", file=sys.stderr)
            if outcome.problems:
                status = EXIT_NONCONVERGED
    except Exception as exc:  # last resort: keep the message primary
        return _fail(EXIT_INTERNAL, f"unexpected failure: {type(exc).__name__}: {exc}")
    finally:
        if executor is not None:
            executor.shutdown()
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="thermoform",
                                     description="Pressure, equilibrium states and large deviations on SFTs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    v = sub.add_parser("validate", help="check a config without computing anything")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)
    r = sub.add_parser("run", help="run every experiment in a config")
    r.add_argument("config")
    r.add_argument("--out", default=None, help="output directory (overrides THERMOFORM_OUT)")
    r.add_argument("--jobs", type=int, default=None, help="worker threads (default from config)")
    r.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
