"""Monte-Carlo local search heuristics (adp1 to adp4).

The objective separates over timesteps once the plan is fixed::

    V = sum_k V_k(plan[k]),  V_k(row) = sum_j H[k, j, row[j]] + rho * sum_i u_i^T A u_i

so a candidate that touches a single timestep can be scored on that row
alone. Only the change budget couples neighbouring rows.

Variants
--------
adp1
    every candidate is a fresh random allocation with sampled per-type counts
    (the same sampler as :func:`initial_allocation`).
adp2
    every candidate re-randomizes ``batch_size`` random (timestep, curb) cells
    of the working point.
adp3
    adp2, plus a restart of the working point every ``restart_interval``
    outer iterations.
adp4
    for each timestep, ``n_inner`` candidates each set ``batch_size`` random
    curbs to their locally best type (random type with ``explore_prob``);
    candidates that break the change budget against either neighbour or the
    count bounds are discarded; the best candidate row replaces the working
    row. The working point restarts every ``restart_interval`` outer
    iterations.

One outer iteration of adp1 to adp3 draws ``n_inner * T`` candidates, the
same number adp4 draws, so traces are comparable per iteration. Restarts
only move the working point; the incumbent is never discarded. Candidates
only become the incumbent after a full :func:`check_feasible` and a strict
improvement of :func:`evaluate`.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass

import numpy as np

from .model import Allocation, Scenario, check_feasible, evaluate
from .trace import Trace

VARIANTS = ("adp1", "adp2", "adp3", "adp4")


@dataclass(frozen=True)
class AdpConfig:
    variant: str = "adp4"
    n_outer: int = 200
    n_inner: int = 50
    batch_size: int | None = None  # None: min(10, b), at least 1
    restart_interval: int = 20
    seed: int = 0
    time_limit: float | None = None
    explore_prob: float = 0.1

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {', '.join(VARIANTS)}, got {self.variant!r}")
        for name in ("n_outer", "n_inner", "batch_size", "restart_interval"):
            if getattr(self, name) is not None and getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0.0 <= self.explore_prob <= 1.0:
            raise ValueError("explore_prob must lie in [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AdpResult:
    allocation: Allocation
    objective: float
    trace: Trace
    config: AdpConfig
    initial_objective: float
    candidates: int
    improvements: int


def _sample_row(s: Scenario, rng: np.random.Generator) -> np.ndarray:
    # lower bounds first, then the remaining curbs fill spare capacity slots
    # drawn uniformly without replacement
    spare = s.upper - s.lower
    slots = np.repeat(np.arange(s.M), spare)
    extra = slots[rng.choice(len(slots), size=s.N - int(s.lower.sum()), replace=False)]
    counts = s.lower + np.bincount(extra, minlength=s.M)
    return np.repeat(np.arange(s.M), counts)[rng.permutation(s.N)]


def initial_allocation(s: Scenario, rng: np.random.Generator) -> Allocation:
    """Random plan meeting the count bounds at every step and the change budget.

    Each row gets ``lower[i]`` random curbs per type, the rest spread over
    types with spare capacity. A row that changes more than ``b`` curbs
    relative to the (already repaired) previous row is replaced by a copy of
    it.
    """
    plan = np.stack([_sample_row(s, rng) for _ in range(s.T)])
    for k in range(1, s.T):
        if np.count_nonzero(plan[k] != plan[k - 1]) > s.b:
            plan[k] = plan[k - 1]
    return Allocation(plan)


def resolve_batch(s: Scenario, cfg: AdpConfig) -> int:
    """Curbs touched per candidate.

    The default of 10 is capped at the change budget: a batch larger than
    ``b`` mostly yields rows that break the budget against a neighbour, and
    the per-timestep search then stalls.
    """
    if cfg.batch_size is not None:
        return cfg.batch_size
    return max(1, min(10, s.b)) if s.T > 1 else 10


class _Search:
    """Shared incumbent bookkeeping and fast row scoring."""

    def __init__(self, s: Scenario, cfg: AdpConfig):
        self.s = s
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        self.batch = min(resolve_batch(s, cfg), s.N)
        self.cols = np.arange(s.N)
        self.trace = Trace()
        self.t0 = time.perf_counter()
        self.deadline = None if cfg.time_limit is None else self.t0 + cfg.time_limit
        self.candidates = 0
        self.improvements = 0
        self.best_alloc = None
        self.best = -np.inf

    def expired(self) -> bool:
        return self.deadline is not None and time.perf_counter() >= self.deadline

    def row_value(self, k: int, row: np.ndarray) -> float:
        v = self.s.H[k, self.cols, row].sum()
        if self.s.rho:
            v += self.s.rho * (self.s.A * (row[:, None] == row[None, :])).sum()
        return float(v)

    def row_values(self, plan: np.ndarray) -> np.ndarray:
        v = self.s.H[np.arange(self.s.T)[:, None], self.cols[None, :], plan].sum(axis=1)
        if self.s.rho:
            same = plan[:, :, None] == plan[:, None, :]
            v = v + self.s.rho * (same * self.s.A).sum(axis=(1, 2))
        return v

    def counts_ok(self, row: np.ndarray) -> bool:
        c = np.bincount(row, minlength=self.s.M)
        return bool(np.all(c >= self.s.lower) and np.all(c <= self.s.upper))

    def plan_feasible(self, plan: np.ndarray) -> bool:
        if self.s.T > 1 and np.count_nonzero(plan[1:] != plan[:-1], axis=1).max() > self.s.b:
            return False
        return all(self.counts_ok(r) for r in plan)

    def offer(self, plan: np.ndarray) -> bool:
        """Make ``plan`` the incumbent if it is feasible and strictly better."""
        alloc = Allocation(plan.copy())
        if not check_feasible(self.s, alloc).feasible:
            return False
        value = evaluate(self.s, alloc)
        if value > self.best:
            if self.best_alloc is not None:
                self.improvements += 1
            self.best, self.best_alloc = value, alloc
            return True
        return False

    def record(self, iteration: int):
        self.trace.record(iteration, self.best, time.perf_counter() - self.t0)


def _run_random(search: _Search, start: np.ndarray) -> None:
    """adp1 to adp3: whole-plan candidates against a working point."""
    s, cfg, rng = search.s, search.cfg, search.rng
    work = start.copy()
    work_rows = search.row_values(work)
    work_value = work_rows.sum()
    per_outer = cfg.n_inner * s.T
    for p in range(1, cfg.n_outer + 1):
        if cfg.variant == "adp3" and p > 1 and (p - 1) % cfg.restart_interval == 0:
            work = initial_allocation(s, rng).plan.copy()
            work_rows = search.row_values(work)
            work_value = work_rows.sum()
            search.offer(work)
        for _ in range(per_outer):
            if search.expired():
                return
            search.candidates += 1
            if cfg.variant == "adp1":
                cand = initial_allocation(s, rng).plan.copy()
                cand_rows = search.row_values(cand)
            else:
                ks = rng.integers(s.T, size=search.batch)
                js = rng.integers(s.N, size=search.batch)
                cand = work.copy()
                cand[ks, js] = rng.integers(s.M, size=search.batch)
                cand_rows = work_rows.copy()
                for k in np.unique(ks):
                    cand_rows[k] = search.row_value(k, cand[k])
            cand_value = cand_rows.sum()
            if cand_value <= work_value or not search.plan_feasible(cand):
                continue
            work, work_rows, work_value = cand, cand_rows, cand_value
            search.offer(work)
        search.record(p)


def _greedy_row(search: _Search, k: int, row: np.ndarray) -> np.ndarray:
    s, rng, cfg = search.s, search.rng, search.cfg
    cand = row.copy()
    for j in rng.choice(s.N, size=search.batch, replace=False):
        if rng.random() < cfg.explore_prob:
            cand[j] = rng.integers(s.M)
            continue
        score = s.H[k, j].copy()
        if s.rho:
            mask = np.ones(s.N, dtype=bool)
            mask[j] = False
            # u^T A u counts each pair twice
            score += 2.0 * s.rho * np.bincount(cand[mask], weights=s.A[j, mask], minlength=s.M)
        cand[j] = int(np.argmax(score))
    return cand


def _run_local(search: _Search, start: np.ndarray) -> None:
    """adp4: per-timestep greedy batches with neighbour-aware gating."""
    s, cfg, rng = search.s, search.cfg, search.rng
    work = start.copy()
    for p in range(1, cfg.n_outer + 1):
        if p > 1 and (p - 1) % cfg.restart_interval == 0:
            work = initial_allocation(s, rng).plan.copy()
            search.offer(work)
        for k in range(s.T):
            best_row, best_v = work[k], search.row_value(k, work[k])
            for _ in range(cfg.n_inner):
                if search.expired():
                    return
                search.candidates += 1
                cand = _greedy_row(search, k, best_row)
                if k > 0 and np.count_nonzero(cand != work[k - 1]) > s.b:
                    continue
                if k < s.T - 1 and np.count_nonzero(cand != work[k + 1]) > s.b:
                    continue
                if not search.counts_ok(cand):
                    continue
                v = search.row_value(k, cand)
                if v > best_v:
                    best_row, best_v = cand, v
            work[k] = best_row
        search.offer(work)
        search.record(p)


def run_adp(scenario: Scenario, cfg: AdpConfig | None = None, **overrides) -> AdpResult:
    """Run one heuristic; stops early (returning the best so far) on ``time_limit``."""
    if cfg is None:
        cfg = AdpConfig(**overrides)
    elif overrides:
        cfg = AdpConfig(**{**cfg.to_dict(), **overrides})
    search = _Search(scenario, cfg)
    start = initial_allocation(scenario, search.rng).plan.copy()
    if not search.offer(start):
        raise RuntimeError("initial allocation failed the feasibility check")
    init_value = search.best
    search.record(0)
    if cfg.variant == "adp4":
        _run_local(search, start)
    else:
        _run_random(search, start)
    if search.trace.rows[-1][1] != search.best:
        search.record(search.trace.rows[-1][0] + 1)
    return AdpResult(search.best_alloc, search.best, search.trace, cfg, init_value,
                     search.candidates, search.improvements)
