"""Dantzig-Wolfe column generation over per-curb time plans.

Each column is one curb's complete plan ``p = (p_0, ..., p_{T-1})``.  The
restricted master chooses weights ``z`` over the generated columns::

    max  sum z * value
    s.t. sum z * e[k, i] <= upper[i]          (dual lam_up[k, i] >= 0)
         sum z * e[k, i] >= lower[i]          (dual lam_lo[k, i] >= 0)
         sum z * a[k]    <= b,   k < T-1      (dual nu[k] >= 0)
         sum_m z[j, m]    = 1,   every curb   (dual mu[j], free)
         z >= 0

with ``e[k, i] = 1{p_k = i}`` and ``a[k] = 1{p_{k+1} != p_k}``.  A
convexity row per curb (rather than a single one) gives the usual
block-angular decomposition, one pricing problem per curb.

Change rows count plan changes per column.  For integral ``z`` this is the
exact change count; for fractional ``z`` it over-counts relative to the l1
norm of the blended plan, so the master is slightly tighter than a
relaxation of that norm would be.

The reduced cost of plan ``p`` for curb ``j`` is::

    sum_k (H[k, j, p_k] - lam_up[k, p_k] + lam_lo[k, p_k]) - sum_k nu[k] 1{p_{k+1} != p_k} - mu[j]

and is maximized exactly by a dynamic program over timesteps with the
current zone type as state.  Columns enter when their reduced cost exceeds
``eps`` (maximization convention).

The master ignores the distance regularizer; it comes back only when the
final integer allocation is re-scored, so ``lp_bound`` bounds the
``rho = 0`` problem.
"""

from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .exact_mip import branch_and_bound
from .lp_core import LinearProgram, LpSolution, solve_lp_warm
from .model import Allocation, Scenario, check_feasible, evaluate
from .trace import Trace

log = logging.getLogger(__name__)

EPS = 1e-6
MAX_ITERS = 500
TIE_TOL = 1e-12


class ColgenFailure(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Column:
    j: int
    plan: tuple[int, ...]
    value: float
    e: np.ndarray  # (T, M) 0/1
    a: np.ndarray  # (T-1,) 0/1
    admitted_iteration: int = -1
    admitted_rc: float = math.nan

    @classmethod
    def build(cls, scenario: Scenario, j: int, plan, iteration=-1, rc=math.nan) -> "Column":
        p = np.asarray(plan, dtype=np.int64)
        value = float(scenario.H[np.arange(scenario.T), j, p].sum())
        e = (p[:, None] == np.arange(scenario.M)).astype(float)
        a = (p[1:] != p[:-1]).astype(float)
        return cls(j, tuple(int(v) for v in p), value, e, a, iteration, rc)


@dataclass
class DualPrices:
    lam_up: np.ndarray  # (T, M)
    lam_lo: np.ndarray  # (T, M)
    nu: np.ndarray  # (T-1,)
    mu: np.ndarray  # (N,)

    def stage_values(self, scenario: Scenario, j=None) -> np.ndarray:
        """Dual-adjusted stage values ``H - lam_up + lam_lo``; shape (T, M) or (N, T, M)."""
        adj = self.lam_lo - self.lam_up
        if j is None:
            return np.transpose(scenario.H, (1, 0, 2)) + adj[None]
        return scenario.H[:, j, :] + adj

    def reduced_cost(self, scenario: Scenario, col: Column) -> float:
        g = self.stage_values(scenario, col.j)
        p = np.asarray(col.plan)
        return float(g[np.arange(scenario.T), p].sum() - self.nu @ col.a - self.mu[col.j])


@dataclass
class MasterState:
    scenario: Scenario
    columns: list[Column] = field(default_factory=list)
    keys: set = field(default_factory=set)
    artificial: bool = False
    penalty: float = 0.0
    iteration: int = 0
    bound_history: list[float] = field(default_factory=list)
    dual_history: list[DualPrices] = field(default_factory=list)
    basis: object = None
    last: LpSolution | None = None

    def pool(self, j: int) -> list[Column]:
        return [c for c in self.columns if c.j == j]

    def add(self, col: Column) -> bool:
        key = (col.j, col.plan)
        if key in self.keys:
            return False
        self.keys.add(key)
        self.columns.append(col)
        return True

    @property
    def n_art(self) -> int:
        return self.scenario.T * self.scenario.M if self.artificial else 0


def initialize_pools(scenario: Scenario) -> MasterState:
    """One constant-in-time column per (curb, zone type)."""
    state = MasterState(scenario)
    for j in range(scenario.N):
        for i in range(scenario.M):
            state.add(Column.build(scenario, j, [i] * scenario.T))
    return state


def master_lp(state: MasterState) -> LinearProgram:
    s = state.scenario
    T, M, N = s.T, s.M, s.N
    cols = state.columns
    na = state.n_art
    n = na + len(cols)
    m = 2 * T * M + (T - 1) + N
    A = np.zeros((m, n))
    c = np.zeros(n)
    if na:
        # artificial surplus on the lower-count rows, heavily penalized
        A[T * M + np.arange(na), np.arange(na)] = 1.0
        c[:na] = -state.penalty
    E = np.array([col.e.ravel() for col in cols])  # (ncols, T*M)
    A[:T * M, na:] = E.T
    A[T * M:2 * T * M, na:] = E.T
    if T > 1:
        A[2 * T * M:2 * T * M + T - 1, na:] = np.array([col.a for col in cols]).T
    A[2 * T * M + T - 1 + np.array([col.j for col in cols]), na + np.arange(len(cols))] = 1.0
    c[na:] = [col.value for col in cols]
    rel = ["<="] * (T * M) + [">="] * (T * M) + ["<="] * (T - 1) + ["="] * N
    rhs = np.concatenate([np.tile(s.upper, T), np.tile(s.lower, T), np.full(T - 1, s.b), np.ones(N)])
    return LinearProgram(c, A, rel, rhs.astype(float), lo=np.zeros(n), hi=np.full(n, np.inf))


def _duals(state: MasterState, y: np.ndarray) -> DualPrices:
    s = state.scenario
    T, M = s.T, s.M
    tm = T * M
    return DualPrices(lam_up=np.maximum(y[:tm], 0).reshape(T, M),
                      lam_lo=np.maximum(-y[tm:2 * tm], 0).reshape(T, M),
                      nu=np.maximum(y[2 * tm:2 * tm + T - 1], 0),
                      mu=y[2 * tm + T - 1:].copy())


def solve_master(state: MasterState, scenario: Scenario | None = None) -> tuple[LpSolution, DualPrices]:
    lp = master_lp(state)
    sol = solve_lp_warm(lp, state.basis)
    if sol.status == "infeasible" and not state.artificial:
        log.info("constant-column master infeasible, adding penalized surplus on lower-count rows")
        s = state.scenario
        state.artificial = True
        state.penalty = 1e3 * max(np.abs(s.H).max(), 1.0) * s.T * s.N
        state.basis = None
        lp = master_lp(state)
        sol = solve_lp_warm(lp, None)
    if sol.status != "optimal":
        raise ColgenFailure(f"restricted master is {sol.status}")
    state.basis = sol.basis
    state.last = sol
    return sol, _duals(state, sol.y)


def _dp(g: np.ndarray, nu: np.ndarray) -> np.ndarray:
    """Best plans for a batch of curbs; ``g`` has shape (B, T, M).

    Backward pass computes value-to-go per state; the forward pass picks the
    lowest type index among maximizers at each step, which yields the
    lexicographically smallest optimal plan.
    """
    B, T, M = g.shape
    W = np.empty_like(g)
    W[:, T - 1] = g[:, T - 1]
    offdiag = ~np.eye(M, dtype=bool)
    for k in range(T - 2, -1, -1):
        # cont[b, i, i'] = W[b, k+1, i'] - nu[k] * 1{i != i'}
        cont = W[:, k + 1][:, None, :] - nu[k] * offdiag[None]
        W[:, k] = g[:, k] + cont.max(axis=2)
    plans = np.empty((B, T), dtype=np.int64)
    plans[:, 0] = _first_max(W[:, 0])
    for k in range(1, T):
        step = W[:, k] - nu[k - 1] * offdiag[plans[:, k - 1]]
        plans[:, k] = _first_max(step)
    return plans


def _first_max(v: np.ndarray) -> np.ndarray:
    # values within TIE_TOL of the row maximum count as ties, so summation
    # order rounding cannot override the lowest-index rule
    top = v.max(axis=1, keepdims=True)
    return np.argmax(v >= top - TIE_TOL * (1.0 + np.abs(top)), axis=1)


def _plan_rc(g: np.ndarray, nu: np.ndarray, mu: np.ndarray, plans: np.ndarray) -> np.ndarray:
    B, T, _ = g.shape
    val = g[np.arange(B)[:, None], np.arange(T)[None, :], plans].sum(axis=1)
    if T > 1:
        val = val - (plans[:, 1:] != plans[:, :-1]).astype(float) @ nu
    return val - mu


def price_curb(scenario: Scenario, j: int, duals: DualPrices) -> tuple[tuple[int, ...], float]:
    """Maximum reduced-cost plan for curb ``j`` and its reduced cost."""
    g = duals.stage_values(scenario, j)[None]
    plans = _dp(g, duals.nu)
    rc = _plan_rc(g, duals.nu, duals.mu[[j]], plans)
    return tuple(int(v) for v in plans[0]), float(rc[0])


def _threads(workers):
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("CURBZONE_THREADS")
    return max(1, int(env)) if env else (os.cpu_count() or 1)


def price_all(scenario: Scenario, duals: DualPrices, workers: int | None = None):
    """Price every curb; results come back in curb order regardless of ``workers``."""
    g = duals.stage_values(scenario)
    N = scenario.N
    nthreads = min(_threads(workers), N)

    def chunk(idx):
        plans = _dp(g[idx], duals.nu)
        return plans, _plan_rc(g[idx], duals.nu, duals.mu[idx], plans)

    if nthreads <= 1:
        plans, rc = chunk(np.arange(N))
    else:
        parts = np.array_split(np.arange(N), nthreads)
        with ThreadPoolExecutor(nthreads) as ex:
            out = list(ex.map(chunk, parts))
        plans = np.vstack([o[0] for o in out])
        rc = np.concatenate([o[1] for o in out])
    return plans, rc


@dataclass
class ColgenResult:
    allocation: Allocation
    objective: float
    lp_bound: float
    master_objective: float
    converged: bool
    iterations: int
    trace: Trace
    state: MasterState
    integer_status: str = ""


def _assemble(state: MasterState, x: np.ndarray) -> np.ndarray | None:
    s = state.scenario
    na = state.n_art
    if na and x[:na].max(initial=0.0) > 1e-7:
        return None
    plan = np.full((s.T, s.N), -1, dtype=np.int64)
    z = x[na:]
    for q in np.flatnonzero(z > 0.5):
        col = state.columns[q]
        if plan[0, col.j] >= 0:
            return None
        plan[:, col.j] = col.plan
    if (plan < 0).any():
        return None
    return plan


def _integerize(state: MasterState, time_limit):
    s = state.scenario
    lp = master_lp(state)
    integer = np.zeros(lp.n, dtype=bool)
    integer[state.n_art:] = True

    def score(x):
        plan = _assemble(state, x)
        if plan is None:
            return None
        alloc = Allocation(plan)
        if not check_feasible(s, alloc).feasible:
            return None
        return float(s.H[np.arange(s.T)[:, None], np.arange(s.N)[None, :], plan].sum()), alloc

    return branch_and_bound(lp, integer, score, time_limit=time_limit, root_basis=state.basis, dive=True,
                            tie_key=lambda a: tuple(a.plan.ravel()))


def run_colgen(scenario: Scenario, eps: float = EPS, max_iters: int = MAX_ITERS,
               time_limit: float | None = None, workers: int | None = None,
               integer_time_limit: float | None = None) -> ColgenResult:
    start = time.perf_counter()
    deadline = None if time_limit is None else start + time_limit
    state = initialize_pools(scenario)
    trace = Trace(extra_field="columns_total", objective_field="master_objective")
    converged = False
    sol = None
    rc = np.zeros(scenario.N)
    for it in range(max_iters):
        state.iteration = it
        sol, duals = solve_master(state)
        state.bound_history.append(sol.objective)
        state.dual_history.append(duals)
        plans, rc = price_all(scenario, duals, workers)
        added = 0
        for j in np.flatnonzero(rc > eps):
            col = Column.build(scenario, int(j), plans[j], it, float(rc[j]))
            added += state.add(col)
        trace.record(it, sol.objective, time.perf_counter() - start, len(state.columns))
        if not added:
            converged = True
            break
        if deadline is not None and time.perf_counter() > deadline:
            break
    if not converged:
        # restricted master no longer optimal for the new pool: resolve before branching
        sol, duals = solve_master(state)
        plans, rc = price_all(scenario, duals, workers)
    if state.artificial and sol.x[:state.n_art].max(initial=0.0) > 1e-7:
        raise ColgenFailure("scenario infeasible: surplus on lower-count rows stays positive")
    master_obj = sol.objective
    lagrangian_bound = master_obj + float(np.maximum(rc, 0).sum())
    lp_bound = master_obj if converged else lagrangian_bound

    remaining = None
    if integer_time_limit is not None:
        remaining = integer_time_limit
    elif deadline is not None:
        remaining = max(deadline - time.perf_counter(), 0.0)
    res = _integerize(state, remaining)
    if res.payload is None and res.status == "infeasible":
        z = sol.x[state.n_art:]
        weight = np.zeros((scenario.N, scenario.M))
        for q, col in enumerate(state.columns):
            weight[col.j] += z[q] * col.e.sum(axis=0)
        for j in range(scenario.N):
            state.add(Column.build(scenario, j, [int(np.argmax(weight[j]))] * scenario.T, state.iteration))
        state.basis = None
        res = _integerize(state, remaining)
    if res.payload is None:
        raise ColgenFailure(f"integerization over the column pool failed ({res.status}); "
                            "fall back to an adp method")
    alloc = res.payload
    objective = evaluate(scenario, alloc)
    return ColgenResult(alloc, objective, lp_bound, master_obj, converged, len(state.bound_history),
                        trace, state, res.status)
