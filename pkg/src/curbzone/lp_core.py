"""Dense bounded-variable simplex for small and medium LPs.

Problems are maximizations over rows ``a x {<=, >=, =} rhs`` and variable
boxes ``lo <= x <= hi`` (infinite bounds allowed).  Internally every
inequality row gets a slack (``+1`` for ``<=``, ``-1`` for ``>=``) and every
row gets an artificial column used only by phase 1.  The basis inverse is
kept as a dense matrix with product-form updates and periodic
refactorization.

Entering columns are chosen by the largest reduced cost (lowest index on
ties); after a run of degenerate pivots the solver switches to Bland's
least-index rule until progress resumes, which rules out cycling.  Passing
``rule="bland"`` uses Bland's rule throughout.  Either way the pivot
sequence is a deterministic function of the input.

Dual sign convention (maximization): ``y >= 0`` on ``<=`` rows, ``y <= 0``
on ``>=`` rows, free on ``=`` rows.  Reduced costs are ``c - A^T y``; at an
optimum a variable strictly between its bounds has zero reduced cost, one at
its lower bound a nonpositive one and one at its upper bound a nonnegative
one.

Warm starts (:func:`solve_lp_warm`) take the :class:`Basis` of an earlier
solve.  Columns may have been appended or bounds tightened since; the hint
is repaired with primal simplex when it is still primal feasible, with dual
simplex when it is dual feasible, and otherwise dropped for a cold solve.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

log = logging.getLogger(__name__)

TOL_FEAS = 1e-9
TOL_DUAL = 1e-9
TOL_PIVOT = 1e-9
MIN_PIVOT = 1e-10
REFACTOR_EVERY = 64
DEGENERATE_SWITCH = 25

LE, GE, EQ = "<=", ">=", "="
_REL_ALIASES = {"<=": LE, "<": LE, "L": LE, ">=": GE, ">": GE, "G": GE, "=": EQ, "==": EQ, "E": EQ}

_LOWER, _UPPER, _FREE, _BASIC = 0, 1, 2, 3


class DegenerateBasisError(ArithmeticError):
    """The basis became numerically singular; the answer cannot be trusted."""


class LpTimeout(TimeoutError):
    """The wall-clock deadline passed inside the simplex loop."""


@dataclass
class LinearProgram:
    """``max c x`` subject to ``A[r] x (rel[r]) rhs[r]`` and ``lo <= x <= hi``."""

    c: np.ndarray
    A: np.ndarray
    relations: Sequence[str]
    rhs: np.ndarray
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    names: Sequence[str] | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n)
        self.rhs = np.asarray(self.rhs, dtype=float).ravel()
        self.relations = [_REL_ALIASES[r] for r in self.relations]
        m = self.A.shape[0]
        if self.rhs.size != m or len(self.relations) != m:
            raise ValueError("rows, relations and rhs must have equal length")
        self.lo = np.zeros(n) if self.lo is None else np.asarray(self.lo, dtype=float).copy()
        self.hi = np.full(n, np.inf) if self.hi is None else np.asarray(self.hi, dtype=float).copy()
        if self.lo.shape != (n,) or self.hi.shape != (n,):
            raise ValueError("bounds must have one entry per variable")
        if np.any(self.lo > self.hi):
            raise ValueError("every variable needs lo <= hi")
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.rhs))):
            raise ValueError("objective, rows and rhs must be finite")
        if np.any(self.lo == np.inf) or np.any(self.hi == -np.inf):
            raise ValueError("lower bound +inf or upper bound -inf")

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def with_bounds(self, lo, hi) -> "LinearProgram":
        return LinearProgram(self.c, self.A, self.relations, self.rhs, lo, hi, self.names)


@dataclass(frozen=True)
class Basis:
    """Basis labels: ``("x", j)`` structural, ``("s", r)`` slack, ``("a", r)`` artificial.

    ``rows`` lists the (nonempty) rows the basis was built for; rows that
    have gained coefficients since enter a warm start with their slack basic.
    """

    basic: tuple[Hashable, ...]
    at_upper: frozenset = frozenset()
    rows: tuple[int, ...] | None = None


@dataclass
class LpSolution:
    status: str
    x: np.ndarray | None = None
    objective: float = float("nan")
    y: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    basis: Basis | None = None
    iterations: int = 0
    warm: bool = False

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    def dual_objective(self, lp: LinearProgram) -> float:
        """``y.rhs`` plus the bound terms of the reduced costs."""
        d = self.reduced_costs
        val = float(self.y @ lp.rhs)
        pos, neg = d > 0, d < 0
        with np.errstate(invalid="ignore"):
            val += float((d[pos] * lp.hi[pos]).sum()) + float((d[neg] * lp.lo[neg]).sum())
        return val


class _Simplex:
    """Working state for one solve; owns all its arrays."""

    def __init__(self, lp: LinearProgram, deadline: float | None, rule: str = "dantzig"):
        if rule not in ("dantzig", "bland"):
            raise ValueError(f"unknown pricing rule {rule!r}")
        self.lp = lp
        self.deadline = deadline
        self.rule = rule
        n, m = lp.n, lp.m
        keep = np.flatnonzero(np.any(lp.A != 0, axis=1))
        self.rows = keep
        for r in np.setdiff1d(np.arange(m), keep):
            rel, b = lp.relations[r], lp.rhs[r]
            if (rel == LE and b < -TOL_FEAS) or (rel == GE and b > TOL_FEAS) or (rel == EQ and abs(b) > TOL_FEAS):
                self.empty_infeasible = True
                break
        else:
            self.empty_infeasible = False
        A = lp.A[keep]
        rels = [lp.relations[r] for r in keep]
        mm = len(keep)
        slack_rows = [r for r, rel in enumerate(rels) if rel != EQ]
        ns = len(slack_rows)
        S = np.zeros((mm, ns))
        for s, r in enumerate(slack_rows):
            S[r, s] = 1.0 if rels[r] == LE else -1.0
        self.A = np.hstack([A, S, np.eye(mm)])
        self.b = lp.rhs[keep].copy()
        self.n, self.ns, self.m = n, ns, mm
        self.ntot = n + ns + mm
        self.lo = np.concatenate([lp.lo, np.zeros(ns), np.zeros(mm)])
        self.hi = np.concatenate([lp.hi, np.full(ns, np.inf), np.zeros(mm)])
        self.labels = ([("x", j) for j in range(n)] + [("s", int(keep[r])) for r in slack_rows]
                       + [("a", int(keep[r])) for r in range(mm)])
        self.index = {lab: q for q, lab in enumerate(self.labels)}
        self.slack_of_row = {r: n + s for s, r in enumerate(slack_rows)}
        self.slack_rows = np.array(slack_rows, dtype=np.int64)
        self.slack_sign = S[self.slack_rows, np.arange(ns)] if ns else np.zeros(0)
        self.cost = np.zeros(self.ntot)
        self._y = None
        self._unit_row = {n + s: r for s, r in enumerate(slack_rows)}
        self._unit_row.update((n + ns + r, r) for r in range(mm))
        self.refactor_every = max(REFACTOR_EVERY, mm // 8)
        self.iterations = 0
        self._since_refactor = 0

    # -- basis bookkeeping -------------------------------------------------

    def _nonbasic_value(self, q: int) -> float:
        st = self.status[q]
        if st == _LOWER:
            return self.lo[q]
        if st == _UPPER:
            return self.hi[q]
        return 0.0

    def _default_status(self, q: int) -> int:
        if np.isfinite(self.lo[q]):
            return _LOWER
        if np.isfinite(self.hi[q]):
            return _UPPER
        return _FREE

    def refactor(self):
        basis = np.asarray(self.basis)
        if basis.size and basis.min() >= self.n:
            # slack/artificial basis: a signed permutation of the identity
            rows = np.array([self._unit_row[q] for q in basis])
            signs = self.A[rows, basis]
            binv = np.zeros((self.m, self.m))
            binv[np.arange(self.m), rows] = 1.0 / signs
        else:
            B = self.A[:, basis]
            try:
                binv = np.linalg.inv(B)
            except np.linalg.LinAlgError as exc:
                raise DegenerateBasisError("singular basis matrix") from exc
            if not np.all(np.isfinite(binv)) or np.abs(binv).max() * max(np.abs(B).max(), 1.0) > 1 / MIN_PIVOT:
                raise DegenerateBasisError("ill-conditioned basis matrix")
        self.binv = binv
        self._y = None
        self._since_refactor = 0
        self.recompute_x()

    def recompute_x(self):
        st = self.status
        self.x = np.where(st == _LOWER, self.lo, np.where(st == _UPPER, self.hi, 0.0))
        self.x[self.basis] = 0.0
        self.x[self.basis] = self.binv @ (self.b - self.A @ self.x)

    def set_basis(self, basis: list[int], status: np.ndarray):
        self.basis = list(basis)
        self.status = status
        self.status[self.basis] = _BASIC
        self.x = np.zeros(self.ntot)
        self.refactor()

    def pivot(self, r: int, q: int, alpha: np.ndarray, dq: float | None = None):
        piv = alpha[r]
        if abs(piv) < MIN_PIVOT:
            raise DegenerateBasisError(f"pivot element {piv:.3e} below {MIN_PIVOT:g}")
        row = self.binv[r] / piv
        nz = np.flatnonzero(alpha)
        self.binv[nz] -= alpha[nz, None] * row[None, :]
        self.binv[r] = row
        if self._y is not None and dq is not None:
            self._y += dq * row
        else:
            self._y = None
        self.basis[r] = q
        self.status[q] = _BASIC
        self.iterations += 1
        self._since_refactor += 1
        if self._since_refactor >= self.refactor_every:
            self.refactor()

    def check_time(self):
        if self.deadline is not None and time.perf_counter() > self.deadline:
            raise LpTimeout("simplex deadline reached")

    def duals(self) -> np.ndarray:
        if self._y is None:
            self._y = self.cost[self.basis] @ self.binv
        return self._y

    def set_cost(self, cost: np.ndarray):
        self.cost = cost
        self._y = None

    def reduced(self, y: np.ndarray) -> np.ndarray:
        n, ns = self.n, self.ns
        d = self.cost.copy()
        d[:n] -= y @ self.A[:, :n]
        d[n:n + ns] -= y[self.slack_rows] * self.slack_sign
        d[n + ns:] -= y * self.A[np.arange(self.m), n + ns + np.arange(self.m)]
        return d

    def primal_infeasibility(self) -> np.ndarray:
        xb = self.x[self.basis]
        lo, hi = self.lo[self.basis], self.hi[self.basis]
        return np.maximum(lo - xb, 0) + np.maximum(xb - hi, 0)

    # -- primal simplex ----------------------------------------------------

    def primal(self) -> str:
        degenerate_run = 0
        while True:
            self.check_time()
            y = self.duals()
            d = self.reduced(y)
            st = self.status
            can_up = ((st == _LOWER) | (st == _FREE)) & (d > TOL_DUAL) & (self.hi > self.lo)
            can_dn = ((st == _UPPER) | (st == _FREE)) & (d < -TOL_DUAL) & (self.hi > self.lo)
            cand = np.flatnonzero(can_up | can_dn)
            if cand.size == 0:
                return "optimal"
            if self.rule == "bland" or degenerate_run >= DEGENERATE_SWITCH:
                q = int(cand[0])
            else:
                q = int(cand[np.argmax(np.abs(d[cand]))])
            direction = 1.0 if can_up[q] else -1.0
            alpha = self.binv @ self.A[:, q]
            delta = -direction * alpha
            xb = self.x[self.basis]
            lob, hib = self.lo[self.basis], self.hi[self.basis]
            ratios = np.full(self.m, np.inf)
            dec = delta < -TOL_PIVOT
            inc = delta > TOL_PIVOT
            ratios[dec] = (xb[dec] - lob[dec]) / -delta[dec]
            ratios[inc] = (hib[inc] - xb[inc]) / delta[inc]
            ratios = np.maximum(ratios, 0.0)
            t_flip = self.hi[q] - self.lo[q]
            t_min = ratios.min() if self.m else np.inf
            if not np.isfinite(t_min) and not np.isfinite(t_flip):
                return "unbounded"
            if t_flip <= t_min:
                self.x[q] += direction * t_flip
                self.x[self.basis] += delta * t_flip
                self.status[q] = _UPPER if direction > 0 else _LOWER
                self.iterations += 1
                degenerate_run = 0
                continue
            degenerate_run = degenerate_run + 1 if t_min <= TOL_FEAS * 1e-3 else 0
            ties = np.flatnonzero(ratios <= t_min + TOL_FEAS * 1e-3)
            basic = np.asarray(self.basis)
            r = int(ties[np.argmin(basic[ties])])
            p = self.basis[r]
            self.x[q] += direction * t_min
            self.x[self.basis] += delta * t_min
            self.status[p] = _LOWER if delta[r] < 0 else _UPPER
            if not np.isfinite(self._nonbasic_value(p)):
                self.status[p] = _FREE
            self.x[p] = self._nonbasic_value(p)
            self.pivot(r, q, alpha, d[q])

    # -- dual simplex ------------------------------------------------------

    def dual_feasible(self, d: np.ndarray) -> bool:
        st = self.status
        bad = ((st == _LOWER) & (d > TOL_DUAL)) | ((st == _UPPER) & (d < -TOL_DUAL)) | \
              ((st == _FREE) & (np.abs(d) > TOL_DUAL))
        bad &= self.hi > self.lo
        return not bad.any()

    def dual(self) -> str:
        limit = self.iterations + 20 * (self.m + self.ntot)
        while True:
            self.check_time()
            if self.iterations > limit:
                return "stalled"
            infeas = self.primal_infeasibility()
            rows = np.flatnonzero(infeas > TOL_FEAS)
            if rows.size == 0:
                return "optimal"
            basic = np.asarray(self.basis)
            r = int(rows[np.argmin(basic[rows])])
            p = self.basis[r]
            below = self.x[p] < self.lo[p]
            target = self.lo[p] if below else self.hi[p]
            y = self.duals()
            d = self.reduced(y)
            arow = self.binv[r] @ self.A
            st = self.status
            movable = (st != _BASIC) & (self.hi > self.lo)
            if below:
                elig = movable & ((((st == _LOWER) | (st == _FREE)) & (arow < -TOL_PIVOT)) |
                                  (((st == _UPPER) | (st == _FREE)) & (arow > TOL_PIVOT)))
            else:
                elig = movable & ((((st == _LOWER) | (st == _FREE)) & (arow > TOL_PIVOT)) |
                                  (((st == _UPPER) | (st == _FREE)) & (arow < -TOL_PIVOT)))
            cand = np.flatnonzero(elig)
            if cand.size == 0:
                return "infeasible"
            ratios = np.abs(d[cand] / arow[cand])
            q = int(cand[np.flatnonzero(ratios <= ratios.min() + TOL_DUAL * 1e-3)[0]])
            alpha = self.binv @ self.A[:, q]
            step = (self.x[p] - target) / alpha[r]
            self.x[q] += step
            self.x[self.basis] -= alpha * step
            self.status[p] = _LOWER if below else _UPPER
            self.x[p] = target
            self.pivot(r, q, alpha, d[q])

    # -- drivers -------------------------------------------------------------

    def cold_start(self) -> str:
        n, ns, m = self.n, self.ns, self.m
        status = np.array([self._default_status(q) for q in range(self.ntot)])
        self.status = status
        xs = np.array([self._nonbasic_value(q) for q in range(n)])
        resid = self.b - self.A[:, :n] @ xs
        basis = []
        for r in range(m):
            s = self.slack_of_row.get(r)
            if s is not None and resid[r] * self.A[r, s] >= 0:
                basis.append(s)
            else:
                a = n + ns + r
                self.A[r, a] = 1.0 if resid[r] >= 0 else -1.0
                self.hi[a] = np.inf
                basis.append(a)
        self.set_basis(basis, status)
        art = slice(n + ns, self.ntot)
        if np.any(self.hi[art] > 0):
            phase1 = np.zeros(self.ntot)
            phase1[art] = -1.0
            self.set_cost(phase1)
            self.primal()
            if self.x[art].sum() > TOL_FEAS * max(1.0, np.abs(self.b).max(initial=0.0)) * 10:
                return "infeasible"
            self.hi[art] = 0.0
            self.x[art] = np.where(self.status[art] == _BASIC, self.x[art], 0.0)
            self.status[art] = np.where(self.status[art] == _BASIC, _BASIC, _LOWER)
            self.refactor()
        phase2 = np.zeros(self.ntot)
        phase2[:n] = self.lp.c
        self.set_cost(phase2)
        return self.primal()

    def warm_start(self, hint: Basis) -> str | None:
        try:
            basis = [self.index[lab] for lab in hint.basic]
        except KeyError:
            return None
        if hint.rows is not None:
            known = set(hint.rows)
            for r, orig in enumerate(self.rows):
                if int(orig) not in known:
                    s = self.slack_of_row.get(r)
                    basis.append(s if s is not None else self.n + self.ns + r)
        if len(basis) != self.m or len(set(basis)) != self.m:
            return None
        status = np.array([self._default_status(q) for q in range(self.ntot)])
        for lab in hint.at_upper:
            q = self.index.get(lab)
            if q is not None and np.isfinite(self.hi[q]):
                status[q] = _UPPER
        try:
            self.set_basis(basis, status)
        except DegenerateBasisError:
            return None
        cost = np.zeros(self.ntot)
        cost[: self.n] = self.lp.c
        self.set_cost(cost)
        if self.primal_infeasibility().max(initial=0.0) <= TOL_FEAS:
            return self.primal()
        d = self.reduced(self.duals())
        box = (self.status != _BASIC) & np.isfinite(self.lo) & np.isfinite(self.hi)
        self.status[box & (d > TOL_DUAL)] = _UPPER
        self.status[box & (d < -TOL_DUAL)] = _LOWER
        self.recompute_x()
        if not self.dual_feasible(d):
            return None
        st = self.dual()
        if st == "stalled":
            return None
        if st != "optimal":
            return st
        return self.primal()

    def solution(self, status: str, warm: bool) -> LpSolution:
        lp = self.lp
        if status != "optimal":
            return LpSolution(status, iterations=self.iterations, warm=warm)
        self.refactor()
        x = self.x[: self.n].copy()
        x = np.clip(x, lp.lo, lp.hi)
        yk = self.duals()
        y = np.zeros(lp.m)
        y[self.rows] = yk
        d = lp.c - y @ lp.A
        basic = tuple(self.labels[q] for q in self.basis)
        upper = frozenset(self.labels[q] for q in np.flatnonzero(self.status == _UPPER))
        basis = Basis(basic, upper, tuple(int(r) for r in self.rows))
        return LpSolution("optimal", x, float(lp.c @ x), y, d, basis, self.iterations, warm)


def _deadline(time_limit):
    return None if time_limit is None else time.perf_counter() + time_limit


def solve_lp(lp: LinearProgram, time_limit: float | None = None, rule: str = "dantzig") -> LpSolution:
    """Two-phase primal simplex from a slack/artificial basis."""
    sx = _Simplex(lp, _deadline(time_limit), rule)
    if sx.empty_infeasible:
        return LpSolution("infeasible")
    return sx.solution(sx.cold_start(), warm=False)


def solve_lp_warm(lp: LinearProgram, basis_hint: Basis | None,
                  time_limit: float | None = None, rule: str = "dantzig") -> LpSolution:
    """Re-solve from a prior basis; falls back to :func:`solve_lp` when the hint is unusable."""
    deadline = _deadline(time_limit)
    if basis_hint is not None:
        sx = _Simplex(lp, deadline, rule)
        if sx.empty_infeasible:
            return LpSolution("infeasible")
        try:
            status = sx.warm_start(basis_hint)
        except DegenerateBasisError:
            status = None
        if status is not None:
            return sx.solution(status, warm=True)
        log.debug("basis hint unusable, cold solve")
    sx = _Simplex(lp, deadline, rule)
    if sx.empty_infeasible:
        return LpSolution("infeasible")
    return sx.solution(sx.cold_start(), warm=False)


def write_lp(lp: LinearProgram, path) -> None:
    """Dump ``lp`` in CPLEX LP text format for cross-checking with other solvers."""
    names = list(lp.names) if lp.names else [f"x{j}" for j in range(lp.n)]
    names = [n.replace(" ", "").replace(",", "_").replace("(", "_").replace(")", "") for n in names]

    def expr(coefs):
        terms = [f"{'+' if v >= 0 else '-'} {abs(v):.17g} {names[j]}" for j, v in enumerate(coefs) if v]
        return " ".join(terms) if terms else f"0 {names[0]}"

    out = ["Maximize", f" obj: {expr(lp.c)}", "Subject To"]
    for r in range(lp.m):
        out.append(f" r{r}: {expr(lp.A[r])} {lp.relations[r]} {lp.rhs[r]:.17g}")
    out.append("Bounds")
    for j, nm in enumerate(names):
        lo, hi = lp.lo[j], lp.hi[j]
        lo_s = "-inf" if lo == -np.inf else f"{lo:.17g}"
        hi_s = "+inf" if hi == np.inf else f"{hi:.17g}"
        out.append(f" {lo_s} <= {nm} <= {hi_s}")
    out.append("End")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")
