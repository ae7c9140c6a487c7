"""Exact MIP for curb zoning, solved by LP-based branch-and-bound.

Linearization used by :func:`build_model`:

* ``u[k, j, i]`` binary zone indicators, one-hot per (timestep, curb);
* ``d[k, j, i] >= |u[k+1, j, i] - u[k, j, i]|`` with ``sum_{j,i} d[k] <= 2 b``;
  at integral ``u`` the per-curb total is 0 or 2, so this is exact;
* ``y[k, i, j, j'] <= u[k, j, i]`` and ``<= u[k, j', i]`` for ``j < j'``, with
  objective weight ``2 rho A[j, j']``.  The weight is nonnegative, so the LP
  pushes ``y`` to ``min(u, u')`` and the lower McCormick cut is not needed;
  the relaxation is weaker but the model smaller.

Only ``u`` is branched on; ``d`` and ``y`` become integral with it.

The budget ``b`` applies to every consecutive pair of timesteps separately.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .lp_core import LinearProgram, LpSolution, LpTimeout, solve_lp, solve_lp_warm
from .model import Allocation, Scenario, check_feasible, evaluate

log = logging.getLogger(__name__)

Y_VARIABLE_CAP = 200_000
DENSE_ENTRY_CAP = 40_000_000
INT_TOL = 1e-6
PRUNE_TOL = 1e-9


class ModelTooLarge(ValueError):
    pass


@dataclass
class MipModel:
    lp: LinearProgram
    integer: np.ndarray
    u_index: np.ndarray  # (T, N, M) -> column
    d_index: np.ndarray  # (T-1, N, M) -> column
    y_index: dict = field(default_factory=dict)  # (k, i, j, j') -> column
    row_counts: dict = field(default_factory=dict)

    def variable_name(self, q: int) -> str:
        return self.lp.names[q]

    def plan_from(self, x: np.ndarray) -> np.ndarray | None:
        """Integer plan encoded in ``x`` or ``None`` if some ``u`` is fractional."""
        u = x[self.u_index]
        if np.any(np.abs(u - np.round(u)) > INT_TOL):
            return None
        return np.argmax(np.round(u), axis=-1)


def build_model(scenario: Scenario, y_cap: int = Y_VARIABLE_CAP,
                entry_cap: int = DENSE_ENTRY_CAP) -> MipModel:
    T, N, M = scenario.T, scenario.N, scenario.M
    rho = scenario.rho
    pairs = [(j, jj) for j in range(N) for jj in range(j + 1, N)] if rho > 0 else []
    n_y = T * M * len(pairs)
    if n_y > y_cap:
        raise ModelTooLarge(f"{n_y} pair variables exceed cap {y_cap}; use rho=0, colgen or adp")
    n_u, n_d = T * N * M, (T - 1) * N * M
    n = n_u + n_d + n_y
    m = T * N + 2 * T * M + 2 * n_d + (T - 1) + 2 * n_y
    if n * m > entry_cap:
        raise ModelTooLarge(f"dense model would hold {n}x{m} entries, above cap {entry_cap}; "
                            "use colgen or adp at this scale")

    u_index = np.arange(n_u).reshape(T, N, M)
    d_index = n_u + np.arange(n_d).reshape(T - 1, N, M)
    names = [f"u({k},{j},{i})" for k in range(T) for j in range(N) for i in range(M)]
    names += [f"d({k},{j},{i})" for k in range(T - 1) for j in range(N) for i in range(M)]
    c = np.zeros(n)
    c[:n_u] = scenario.H.ravel()
    y_index = {}
    q = n_u + n_d
    for k in range(T):
        for i in range(M):
            for j, jj in pairs:
                y_index[(k, i, j, jj)] = q
                c[q] = 2.0 * rho * scenario.A[j, jj]
                names.append(f"y({k},{i},{j},{jj})")
                q += 1

    A = np.zeros((m, n))
    rel, rhs = [], []
    r = 0
    counts = {}
    for k in range(T):
        for j in range(N):
            A[r, u_index[k, j]] = 1.0
            rel.append("=")
            rhs.append(1.0)
            r += 1
    counts["one_hot"] = T * N
    for k in range(T):
        for i in range(M):
            for sense, bound in ((">=", scenario.lower[i]), ("<=", scenario.upper[i])):
                A[r, u_index[k, :, i]] = 1.0
                rel.append(sense)
                rhs.append(float(bound))
                r += 1
    counts["count_bounds"] = 2 * T * M
    for k in range(T - 1):
        for j in range(N):
            for i in range(M):
                dq, a, b_ = d_index[k, j, i], u_index[k + 1, j, i], u_index[k, j, i]
                for sgn in (1.0, -1.0):
                    A[r, dq] = 1.0
                    A[r, a] = -sgn
                    A[r, b_] = sgn
                    rel.append(">=")
                    rhs.append(0.0)
                    r += 1
        A[r, d_index[k].ravel()] = 1.0
        rel.append("<=")
        rhs.append(2.0 * scenario.b)
        r += 1
    counts["change"] = 2 * n_d + (T - 1)
    for (k, i, j, jj), yq in y_index.items():
        for uq in (u_index[k, j, i], u_index[k, jj, i]):
            A[r, yq] = 1.0
            A[r, uq] = -1.0
            rel.append("<=")
            rhs.append(0.0)
            r += 1
    counts["pair"] = 2 * n_y
    assert r == m

    integer = np.zeros(n, dtype=bool)
    integer[:n_u] = True
    lp = LinearProgram(c, A, rel, rhs, lo=np.zeros(n), hi=np.ones(n), names=names)
    return MipModel(lp, integer, u_index, d_index, y_index, counts)


@dataclass(order=True)
class BnbNode:
    key: float
    seq: int
    lo: np.ndarray = field(compare=False)
    hi: np.ndarray = field(compare=False)
    parent_bound: float = field(compare=False)
    depth: int = field(compare=False, default=0)
    basis: object = field(compare=False, default=None)


@dataclass
class BnbResult:
    status: str  # optimal | time_limit | no_incumbent | infeasible
    value: float
    bound: float
    payload: object
    x: np.ndarray | None
    nodes: int
    root: LpSolution | None
    trace: list = field(default_factory=list)


def _most_fractional(x, integer):
    frac = np.where(integer, np.abs(x - np.round(x)), 0.0)
    q = int(np.argmax(frac))
    return q if frac[q] > INT_TOL else None


def branch_and_bound(lp: LinearProgram, integer: np.ndarray,
                     score: Callable[[np.ndarray], tuple[float, object] | None], *,
                     time_limit: float | None = None, gap_tol: float = 1e-6,
                     root_basis=None, dive: bool = False,
                     tie_key: Callable[[object], tuple] | None = None) -> BnbResult:
    """Best-bound branch-and-bound, branching on the most fractional integer column.

    ``score(x)`` re-evaluates an integral LP point and returns ``(value,
    payload)`` or ``None`` when the point must be rejected.  Nodes whose LP
    bound does not exceed the incumbent by more than ``1e-9`` are pruned.
    Child LPs are warm-started from the parent basis.
    """
    start = time.perf_counter()
    deadline = None if time_limit is None else start + time_limit
    remaining = lambda: None if deadline is None else max(deadline - time.perf_counter(), 0.0)  # noqa: E731

    best_val, best_payload, best_x = -math.inf, None, None
    trace = []
    nodes = 0
    seq = itertools.count()

    def offer(x, sol_value):
        nonlocal best_val, best_payload, best_x
        got = score(x)
        if got is None:
            log.warning("integral LP point rejected by re-validation (lp value %.9g)", sol_value)
            return
        val, payload = got
        better = val > best_val + PRUNE_TOL
        tie = (not better and tie_key is not None and best_payload is not None
               and abs(val - best_val) <= PRUNE_TOL and tie_key(payload) < tie_key(best_payload))
        if better or tie:
            best_val, best_payload, best_x = val, payload, x.copy()
            trace.append((nodes, best_val, time.perf_counter() - start))

    def finish(status, bound):
        if best_payload is None and status in ("optimal", "time_limit"):
            status = "infeasible" if status == "optimal" else "no_incumbent"
        return BnbResult(status, best_val, bound, best_payload, best_x, nodes, root, trace)

    try:
        root = solve_lp_warm(lp, root_basis, time_limit=remaining())
    except LpTimeout:
        root = None
        return finish("time_limit", math.inf)
    nodes = 1
    if root.status == "infeasible":
        return BnbResult("infeasible", -math.inf, -math.inf, None, None, 1, root)
    if root.status != "optimal":
        raise RuntimeError(f"LP relaxation is {root.status}")

    if dive:
        try:
            _dive(lp, integer, root, offer, remaining)
        except LpTimeout:
            return finish("time_limit", root.objective)

    heap = [BnbNode(-root.objective, next(seq), lp.lo.copy(), lp.hi.copy(), root.objective, 0, root.basis)]
    first = True
    while heap:
        top_bound = -heap[0].key
        if best_payload is not None and top_bound - best_val <= gap_tol * (1 + abs(best_val)):
            return finish("optimal", max(best_val, top_bound))
        if deadline is not None and time.perf_counter() > deadline:
            return finish("time_limit", max(best_val, top_bound))
        node = heapq.heappop(heap)
        if node.parent_bound <= best_val + PRUNE_TOL:
            continue
        if first:
            sol, first = root, False
        else:
            try:
                sol = solve_lp_warm(lp.with_bounds(node.lo, node.hi), node.basis, time_limit=remaining())
            except LpTimeout:
                return finish("time_limit", max(best_val, node.parent_bound,
                                                max((-h.key for h in heap), default=-math.inf)))
            nodes += 1
        if sol.status != "optimal":
            continue
        bound = min(sol.objective, node.parent_bound)
        if bound <= best_val + PRUNE_TOL:
            continue
        q = _most_fractional(sol.x, integer)
        if q is None:
            offer(sol.x, sol.objective)
            continue
        v = sol.x[q]
        for new_lo, new_hi in ((math.ceil(v), node.hi[q]), (node.lo[q], math.floor(v))):
            lo, hi = node.lo.copy(), node.hi.copy()
            lo[q], hi[q] = new_lo, new_hi
            heapq.heappush(heap, BnbNode(-bound, next(seq), lo, hi, bound, node.depth + 1, sol.basis))
    return finish("optimal", best_val)


def _dive(lp, integer, root, offer, remaining):
    """Fix the integer column nearest to its ceiling until the LP is integral or infeasible."""
    lo, hi = lp.lo.copy(), lp.hi.copy()
    sol = root
    while sol.status == "optimal":
        x = sol.x
        frac = np.where(integer, np.abs(x - np.round(x)), 0.0)
        if frac.max() <= INT_TOL:
            offer(x, sol.objective)
            return
        cand = np.flatnonzero(frac > INT_TOL)
        q = int(cand[np.argmax(x[cand] - np.floor(x[cand]))])
        lo[q] = math.ceil(x[q])
        sol = solve_lp_warm(lp.with_bounds(lo, hi), sol.basis, time_limit=remaining())


@dataclass
class ExactResult:
    status: str
    allocation: Allocation | None
    objective: float
    bound: float
    node_count: int
    trace: list = field(default_factory=list)
    message: str = ""

    @property
    def gap(self) -> float:
        if self.allocation is None:
            return math.inf
        return (self.bound - self.objective) / max(1.0, abs(self.bound))


def separable_bound(scenario: Scenario) -> float:
    """Cheap upper bound: best type per cell plus every same-type pair rewarded."""
    return float(scenario.H.max(axis=2).sum() + scenario.rho * scenario.T * scenario.A.sum())


def solve_exact(scenario: Scenario, time_limit: float | None = None, gap_tol: float = 1e-6,
                dive: bool = False) -> ExactResult:
    try:
        model = build_model(scenario)
    except ModelTooLarge as exc:
        return ExactResult("no_incumbent", None, -math.inf, separable_bound(scenario), 0, message=str(exc))

    def score(x):
        plan = model.plan_from(x)
        if plan is None:
            return None
        alloc = Allocation(plan)
        if not check_feasible(scenario, alloc).feasible:
            return None
        return evaluate(scenario, alloc), alloc

    res = branch_and_bound(model.lp, model.integer, score, time_limit=time_limit, gap_tol=gap_tol,
                           dive=dive, tie_key=lambda a: tuple(a.plan.ravel()))
    trace = [(n, v, t) for n, v, t in res.trace]
    bound = min(res.bound, separable_bound(scenario))
    if res.payload is None:
        if res.status == "infeasible":
            bound = -math.inf
        return ExactResult(res.status, None, -math.inf, bound, res.nodes, trace)
    return ExactResult(res.status, res.payload, res.value, max(bound, res.value), res.nodes, trace)
