"""Domain types for the dynamic curb zoning problem.

A :class:`Scenario` carries everything a solver needs: the valuation tensor
``H[k, j, i]`` (timestep, curb, zone type), the curb distance matrix, the
per-step change budget, per-type count bounds and the regularizer weight.
An :class:`Allocation` is the integer plan ``plan[k, j]`` holding the zone
type index of curb ``j`` at timestep ``k``; its one-hot expansion is the
binary decision tensor the MIP works with.

The objective is::

    sum_k sum_j H[k, j, plan[k, j]] + rho * sum_k sum_i u_ki^T A u_ki

where ``u_ki`` is the 0/1 indicator of curbs holding type ``i`` at step ``k``.
The auxiliary ``w`` variables of the MIP never appear here: for ``rho >= 0``
they sit at their upper bound ``u^T A u`` at any maximizer.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

DEFAULT_ZONE_LABELS = ("pp", "cv", "bus")
BRUTE_FORCE_CAP = 10**6


class ScenarioError(ValueError):
    """A scenario violates one of its invariants."""


class InfeasibleError(RuntimeError):
    """No allocation satisfies the change budget and count bounds."""


@dataclass(frozen=True)
class ZoneType:
    index: int
    label: str


@dataclass(frozen=True)
class Curb:
    id: str
    x: float
    y: float


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def build_distance_matrix(curbs: Sequence, metric: str = "euclidean") -> np.ndarray:
    """Pairwise curb distances; ``curbs`` holds :class:`Curb` or ``(x, y)`` pairs."""
    xy = np.array([(c.x, c.y) if isinstance(c, Curb) else tuple(c) for c in curbs], dtype=float)
    if xy.ndim != 2 or xy.shape[0] < 1 or xy.shape[1] != 2:
        raise ValueError("need at least one (x, y) coordinate")
    if not np.all(np.isfinite(xy)):
        raise ValueError("curb coordinates must be finite")
    diff = xy[:, None, :] - xy[None, :, :]
    if metric == "euclidean":
        A = np.sqrt((diff**2).sum(axis=-1))
    elif metric == "manhattan":
        A = np.abs(diff).sum(axis=-1)
    else:
        raise ValueError(f"unknown distance metric {metric!r}")
    np.fill_diagonal(A, 0.0)
    return A


@dataclass(frozen=True, eq=False)
class Scenario:
    """A full problem instance. Arrays are copied and made read-only."""

    T: int
    curbs: tuple[Curb, ...]
    zone_types: tuple[ZoneType, ...]
    H: np.ndarray
    A: np.ndarray
    b: int
    count_bounds: np.ndarray
    rho: float = 0.0
    name: str = "scenario"
    distance_metric: str = "euclidean"
    provenance: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("curbs", tuple(self.curbs))
        zt = tuple(z if isinstance(z, ZoneType) else ZoneType(n, str(z)) for n, z in enumerate(self.zone_types))
        set_("zone_types", zt)
        H = np.asarray(self.H, dtype=float)
        A = np.asarray(self.A, dtype=float)
        bounds = np.asarray(self.count_bounds, dtype=np.int64)
        T, N, M = self.T, len(self.curbs), len(zt)
        labels = [z.label for z in zt]

        if not isinstance(T, (int, np.integer)) or T < 1:
            raise ScenarioError(f"num_timesteps: must be an integer >= 1, got {T!r}")
        if N < 1:
            raise ScenarioError("curbs: need at least one curb")
        if len({c.id for c in self.curbs}) != N:
            raise ScenarioError("curbs: ids must be unique")
        if M < 2:
            raise ScenarioError("zone_types: need at least two zone types")
        if len(set(labels)) != M:
            raise ScenarioError("zone_types: labels must be unique")
        if any(z.index != n for n, z in enumerate(zt)):
            raise ScenarioError("zone_types: indices must be 0..M-1 in order")
        if H.shape != (T, N, M):
            raise ScenarioError(f"valuations: expected shape {(T, N, M)}, got {H.shape}")
        if not np.all(np.isfinite(H)):
            raise ScenarioError("valuations: entries must be finite")
        if A.shape != (N, N):
            raise ScenarioError(f"distance matrix: expected shape {(N, N)}, got {A.shape}")
        if not np.all(np.isfinite(A)) or np.any(A < 0):
            raise ScenarioError("distance matrix: entries must be finite and nonnegative")
        if not np.allclose(A, A.T, rtol=0, atol=1e-12) or np.any(np.diag(A) != 0):
            raise ScenarioError("distance matrix: must be symmetric with zero diagonal")
        if int(self.b) != self.b or self.b < 0:
            raise ScenarioError(f"change_budget: must be a nonnegative integer, got {self.b!r}")
        if bounds.shape != (M, 2):
            raise ScenarioError(f"count_bounds: expected one (lower, upper) pair per zone type, got shape {bounds.shape}")
        for lab, (lo, hi) in zip(labels, bounds):
            if lo < 0 or hi > N or lo > hi:
                raise ScenarioError(f"count_bounds.{lab}: need 0 <= lower <= upper <= {N}, got ({lo}, {hi})")
        if bounds[:, 0].sum() > N:
            raise ScenarioError(f"count_bounds: lower bounds sum to {bounds[:, 0].sum()} > {N} curbs")
        if bounds[:, 1].sum() < N:
            raise ScenarioError(f"count_bounds: upper bounds sum to {bounds[:, 1].sum()} < {N} curbs")
        if not math.isfinite(self.rho) or self.rho < 0:
            raise ScenarioError(f"rho: must be finite and >= 0, got {self.rho!r}")

        set_("T", int(T))
        set_("b", int(self.b))
        set_("rho", float(self.rho))
        set_("H", _frozen(H))
        set_("A", _frozen(A))
        set_("count_bounds", _frozen(bounds))

    @property
    def N(self) -> int:
        return len(self.curbs)

    @property
    def M(self) -> int:
        return len(self.zone_types)

    @property
    def labels(self) -> list[str]:
        return [z.label for z in self.zone_types]

    @property
    def lower(self) -> np.ndarray:
        return self.count_bounds[:, 0]

    @property
    def upper(self) -> np.ndarray:
        return self.count_bounds[:, 1]

    def replace(self, **changes) -> "Scenario":
        kw = {f: getattr(self, f) for f in self.__dataclass_fields__}
        kw.update(changes)
        return Scenario(**kw)


def make_scenario(H, coords=None, *, b=None, count_bounds=None, rho=0.0, labels=None,
                  metric="euclidean", name="scenario") -> Scenario:
    """Convenience constructor for tests and scripts.

    ``coords`` defaults to curbs on a unit-spaced line, ``b`` to ``N`` (never
    binding) and ``count_bounds`` to ``(0, N)`` for every type.
    """
    H = np.asarray(H, dtype=float)
    T, N, M = H.shape
    if coords is None:
        coords = [(float(j), 0.0) for j in range(N)]
    curbs = tuple(Curb(f"c{j}", float(x), float(y)) for j, (x, y) in enumerate(coords))
    if labels is None:
        labels = DEFAULT_ZONE_LABELS if M == 3 else tuple(f"z{i}" for i in range(M))
    if count_bounds is None:
        count_bounds = [(0, N)] * M
    elif isinstance(count_bounds, dict):
        count_bounds = [count_bounds.get(lab, (0, N)) for lab in labels]
    return Scenario(T=T, curbs=curbs, zone_types=tuple(labels), H=H,
                    A=build_distance_matrix(curbs, metric), b=N if b is None else b,
                    count_bounds=count_bounds, rho=rho, name=name, distance_metric=metric)


@dataclass(frozen=True, eq=False)
class Allocation:
    """Integer zoning plan, ``plan[k, j]`` in ``0..M-1``."""

    plan: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.plan)
        if p.ndim != 2:
            raise ValueError(f"plan must be 2-D (timestep x curb), got shape {p.shape}")
        if p.size and not np.issubdtype(p.dtype, np.integer):
            if not np.all(p == np.round(p)):
                raise ValueError("plan entries must be integers")
        object.__setattr__(self, "plan", _frozen(p.astype(np.int64)))

    @property
    def T(self) -> int:
        return self.plan.shape[0]

    @property
    def N(self) -> int:
        return self.plan.shape[1]

    def one_hot(self, M: int) -> np.ndarray:
        """Binary tensor ``u[k, j, i]``."""
        return (self.plan[..., None] == np.arange(M)).astype(np.int64)

    @classmethod
    def from_one_hot(cls, u) -> "Allocation":
        u = np.asarray(u)
        if not np.all(u.sum(axis=-1) == 1):
            raise ValueError("one-hot tensor must have exactly one 1 per (timestep, curb)")
        return cls(np.argmax(u, axis=-1))

    def __eq__(self, other):
        return isinstance(other, Allocation) and np.array_equal(self.plan, other.plan)

    def __hash__(self):
        return hash(self.plan.tobytes())

    def tolist(self) -> list[list[int]]:
        return self.plan.tolist()


@dataclass
class FeasibilityReport:
    change_ok: bool
    change_counts: list[int]
    counts_ok: bool
    counts: np.ndarray
    violations: list[str]

    @property
    def feasible(self) -> bool:
        return self.change_ok and self.counts_ok

    def to_dict(self) -> dict:
        return {"feasible": self.feasible, "change_ok": self.change_ok,
                "change_counts": list(self.change_counts), "counts_ok": self.counts_ok,
                "counts": self.counts.tolist(), "violations": list(self.violations)}


def _check_dims(scenario: Scenario, alloc: Allocation):
    if alloc.plan.shape != (scenario.T, scenario.N):
        raise ValueError(f"allocation shape {alloc.plan.shape} does not match scenario "
                         f"(T={scenario.T}, N={scenario.N})")
    if alloc.plan.size and (alloc.plan.min() < 0 or alloc.plan.max() >= scenario.M):
        raise ValueError(f"plan entries must lie in 0..{scenario.M - 1}")


def regularizer(scenario: Scenario, plan: np.ndarray) -> float:
    """``sum_k sum_i u_ki^T A u_ki`` for an integer plan (without ``rho``)."""
    plan = np.asarray(plan)
    same = plan[:, :, None] == plan[:, None, :]
    return float((same * scenario.A).sum())


def evaluate(scenario: Scenario, alloc: Allocation) -> float:
    _check_dims(scenario, alloc)
    p = alloc.plan
    T, N = p.shape
    value = float(scenario.H[np.arange(T)[:, None], np.arange(N)[None, :], p].sum())
    if scenario.rho:
        value += scenario.rho * regularizer(scenario, p)
    return value


def change_count(alloc: Allocation, k: int) -> int:
    """Number of curbs whose type differs between steps ``k`` and ``k + 1``."""
    if not 0 <= k < alloc.T - 1:
        raise IndexError(f"timestep {k} has no successor (T={alloc.T})")
    return int(np.count_nonzero(alloc.plan[k + 1] != alloc.plan[k]))


def check_feasible(scenario: Scenario, alloc: Allocation) -> FeasibilityReport:
    _check_dims(scenario, alloc)
    p = alloc.plan
    changes = np.count_nonzero(p[1:] != p[:-1], axis=1).tolist()
    counts = (p[..., None] == np.arange(scenario.M)).sum(axis=1)
    violations = []
    for k, c in enumerate(changes):
        if c > scenario.b:
            violations.append(f"timestep {k}->{k + 1}: {c} changes exceed budget {scenario.b}")
    lo, hi = scenario.lower, scenario.upper
    for k, i in zip(*np.nonzero((counts < lo) | (counts > hi))):
        violations.append(f"timestep {k}: {scenario.labels[i]} count {counts[k, i]} "
                          f"outside [{lo[i]}, {hi[i]}]")
    change_ok = all(c <= scenario.b for c in changes)
    counts_ok = bool(np.all((counts >= lo) & (counts <= hi)))
    return FeasibilityReport(change_ok, changes, counts_ok, counts, violations)


def brute_force_solve(scenario: Scenario, cap: int = BRUTE_FORCE_CAP,
                      chunk: int = 1 << 15) -> tuple[Allocation, float]:
    """Exhaustive search over all ``M**(N*T)`` plans.

    Plans are enumerated in lexicographic order of the row-major plan, so the
    first maximizer found is the lexicographically smallest one.
    """
    T, N, M = scenario.T, scenario.N, scenario.M
    cells = T * N
    if M**cells > cap:
        raise ValueError(f"brute force needs {M}^{cells} plans, above cap {cap}")
    kk, jj = np.divmod(np.arange(cells), N)
    Hc = scenario.H[kk, jj]  # (cells, M)
    lo, hi = scenario.lower, scenario.upper
    best_val, best_plan = -np.inf, None
    product = itertools.product(range(M), repeat=cells)
    while True:
        block = np.array(list(itertools.islice(product, chunk)), dtype=np.int64)
        if block.size == 0:
            break
        plans = block.reshape(-1, T, N)
        counts = (plans[..., None] == np.arange(M)).sum(axis=2)
        ok = np.all((counts >= lo) & (counts <= hi), axis=(1, 2))
        if T > 1:
            ok &= np.all(np.count_nonzero(plans[:, 1:] != plans[:, :-1], axis=2) <= scenario.b, axis=1)
        if not ok.any():
            continue
        plans, block = plans[ok], block[ok]
        vals = Hc[np.arange(cells), block].sum(axis=1)
        if scenario.rho:
            same = plans[:, :, :, None] == plans[:, :, None, :]
            vals = vals + scenario.rho * (same * scenario.A).sum(axis=(1, 2, 3))
        n = int(np.argmax(vals))
        if vals[n] > best_val:
            best_val, best_plan = float(vals[n]), plans[n]
    if best_plan is None:
        raise InfeasibleError("no plan satisfies the change budget and count bounds")
    alloc = Allocation(best_plan)
    return alloc, evaluate(scenario, alloc)
