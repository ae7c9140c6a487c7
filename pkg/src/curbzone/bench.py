"""Run orchestration: one solver call becomes a :class:`SolveReport`; a bench
is a grid of (method, seed) runs merged into plot-ready CSV files.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .adp import VARIANTS as ADP_VARIANTS, AdpConfig, resolve_batch, run_adp
from .colgen import EPS, MAX_ITERS, run_colgen
from .exact_mip import solve_exact
from .model import Allocation, InfeasibleError, Scenario, brute_force_solve, check_feasible, evaluate
from .scenario_io import dumps_canonical, fingerprint
from .trace import Trace

METHODS = ("brute", "mip") + ADP_VARIANTS + ("dw",)
ORACLES = ("brute", "mip")
OBJECTIVE_TOL = 1e-9


def worker_count() -> int:
    env = os.environ.get("CURBZONE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _finite(x):
    return x if x is not None and math.isfinite(x) else None


@dataclass
class SolveReport:
    scenario_fingerprint: str
    method: str
    config: dict
    seed: int
    status: str
    allocation: Allocation | None
    objective: float | None
    bound: float | None
    feasibility: dict | None
    trace: Trace
    wall_ms: float
    extras: dict = field(default_factory=dict)
    version: str = __version__

    @property
    def gap(self) -> float | None:
        if self.bound is None or self.objective is None:
            return None
        return (self.bound - self.objective) / max(1.0, abs(self.bound))

    @property
    def ok(self) -> bool:
        return self.status not in ("error", "infeasible")

    def summary_line(self) -> str:
        fmt = lambda v: "nan" if v is None else f"{v:.9g}"  # noqa: E731
        return f"{self.method} {fmt(self.objective)} {fmt(self.bound)} {fmt(self.gap)} {self.wall_ms:.1f}"

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "scenario_fingerprint": self.scenario_fingerprint,
            "method": self.method,
            "config": self.config,
            "seed": self.seed,
            "status": self.status,
            "objective": _finite(self.objective),
            "bound": _finite(self.bound),
            "gap": _finite(self.gap),
            "feasibility": self.feasibility,
            "plan": None if self.allocation is None else self.allocation.tolist(),
            "trace": self.trace.to_dict(),
            "wall_ms": self.wall_ms,
            "extras": self.extras,
        }

    def write(self, path) -> None:
        Path(path).write_bytes(dumps_canonical(self.to_dict()))


def _trace_from_pairs(rows) -> Trace:
    tr = Trace()
    for it, value, seconds in rows:
        if math.isfinite(value):
            tr.record(it, value, seconds)
    return tr


def run_method(scenario: Scenario, method: str, seed: int = 0, time_limit: float | None = None,
               fp: str | None = None) -> SolveReport:
    """Run one solver and wrap the result; solver errors become ``status='error'``."""
    fp = fp or fingerprint(scenario)
    t0 = time.perf_counter()
    config: dict = {"method": method, "time_limit": time_limit, "rho": scenario.rho}
    extras: dict = {}
    alloc, claimed, bound, status = None, None, None, "ok"
    trace = Trace()
    try:
        if method == "brute":
            alloc, claimed = brute_force_solve(scenario)
            bound = claimed
            trace.record(0, claimed, time.perf_counter() - t0)
        elif method == "mip":
            config.update(gap_tol=1e-6, dive=True)
            res = solve_exact(scenario, time_limit=time_limit, gap_tol=1e-6, dive=True)
            status = res.status
            alloc, claimed = res.allocation, (res.objective if res.allocation is not None else None)
            bound = _finite(res.bound)
            trace = _trace_from_pairs(res.trace)
            extras.update(nodes=res.node_count, message=res.message)
        elif method in ADP_VARIANTS:
            cfg = AdpConfig(variant=method, seed=seed, time_limit=time_limit)
            config.update(cfg.to_dict(), effective_batch_size=min(resolve_batch(scenario, cfg), scenario.N))
            res = run_adp(scenario, cfg)
            alloc, claimed, trace = res.allocation, res.objective, res.trace
            extras.update(initial_objective=res.initial_objective, candidates=res.candidates)
        elif method == "dw":
            config.update(eps=EPS, max_iters=MAX_ITERS)
            res = run_colgen(scenario, time_limit=time_limit)
            alloc, claimed, trace = res.allocation, res.objective, res.trace
            # the master ignores the regularizer, so it only bounds the rho = 0 problem
            bound = res.lp_bound if scenario.rho == 0 else None
            extras.update(lp_bound_rho0=res.lp_bound, master_objective=res.master_objective,
                          converged=res.converged, iterations=res.iterations,
                          columns=len(res.state.columns), integer_status=res.integer_status)
        else:
            raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    except InfeasibleError as exc:
        status, extras["message"] = "infeasible", str(exc)
    except Exception as exc:  # recorded per run; benches keep going
        status, extras["message"] = "error", f"{type(exc).__name__}: {exc}"
        alloc = None
    wall_ms = (time.perf_counter() - t0) * 1e3

    objective, feas = None, None
    if alloc is not None:
        rep = check_feasible(scenario, alloc)
        feas = rep.to_dict()
        objective = evaluate(scenario, alloc)
        if claimed is not None and abs(objective - claimed) > OBJECTIVE_TOL * max(1.0, abs(objective)):
            status, extras["message"] = "error", f"solver reported {claimed!r}, evaluation gives {objective!r}"
        elif not rep.feasible:
            status, extras["message"] = "error", "solver returned an infeasible allocation"
    return SolveReport(fp, method, config, seed, status, alloc, objective, bound, feas, trace, wall_ms, extras)


def _run_job(args):
    scenario, method, seed, time_limit, fp = args
    return run_method(scenario, method, seed, time_limit, fp)


def run_bench(scenario: Scenario, methods, seeds, out_dir, time_limit: float | None = None,
              workers: int | None = None) -> list[SolveReport]:
    """Run every (method, seed) pair and write per-run reports plus merged CSVs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fp = fingerprint(scenario)
    jobs = [(scenario, m, s, time_limit, fp) for m in methods for s in seeds]
    workers = worker_count() if workers is None else workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            reports = list(pool.map(_run_job, jobs))
    else:
        reports = [_run_job(j) for j in jobs]
    for r in reports:
        r.write(out / f"report_{r.method}_seed{r.seed}.json")
    write_convergence(reports, out / "convergence.csv")
    write_summary(reports, out / "summary.csv")
    return reports


def write_convergence(reports, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "seed", "iteration", "best_objective", "cumulative_ms"])
        for r in reports:
            for row in r.trace.rows:
                w.writerow([r.method, r.seed, row[0], repr(row[1]), f"{row[2]:.3f}"])


def _oracles(reports) -> dict:
    """Oracle objective per seed, preferring brute force over the MIP."""
    found = {}
    for name in reversed(ORACLES):
        for r in reports:
            if r.method == name and r.ok and r.objective is not None:
                found[r.seed] = r.objective
    return found


def write_summary(reports, path) -> None:
    with_oracle = any(r.method in ORACLES for r in reports)
    oracles = _oracles(reports)
    fallback = next(iter(oracles.values()), None)
    header = ["method", "seed", "status", "final_objective", "bound", "gap", "total_ms"]
    if with_oracle:
        header.append("ratio")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in reports:
            cell = lambda v: "" if v is None else repr(v)  # noqa: E731
            line = [r.method, r.seed, r.status, cell(r.objective), cell(r.bound), cell(r.gap), f"{r.wall_ms:.3f}"]
            if with_oracle:
                # oracle value does not depend on the seed, so any oracle run serves
                oracle = oracles.get(r.seed, fallback)
                ratio = None
                if oracle and r.objective is not None:
                    ratio = r.objective / oracle
                line.append(cell(ratio))
            w.writerow(line)


def load_report(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
