"""Independent reference computations used by the test-suite."""

import itertools

import numpy as np


def lp_vertex_max(c, A, rel, rhs, lo, hi, tol=1e-9):
    """Best objective over the vertices of a box-bounded polytope, or None if empty.

    A vertex fixes every variable either by an active row or by one of its
    bounds; equality rows are always active.  All bound patterns for a given
    (rows, free variables) pair are solved in one batch.
    """
    c, A, rhs, lo, hi = (np.asarray(a, float) for a in (c, A, rhs, lo, hi))
    m, n = A.shape
    rel = list(rel)
    eq = [r for r in range(m) if rel[r] == "="]
    ineq = [r for r in range(m) if rel[r] != "="]
    le = np.array([r == "<=" for r in rel])
    ge = np.array([r == ">=" for r in rel])
    eqm = np.array([r == "=" for r in rel])
    best = None
    for s in range(len(eq), min(m, n) + 1):
        for extra in itertools.combinations(ineq, s - len(eq)):
            rows = eq + list(extra)
            for free in itertools.combinations(range(n), s):
                fixed = [j for j in range(n) if j not in free]
                pats = np.array(list(itertools.product((0, 1), repeat=len(fixed))), dtype=bool)
                pats = pats.reshape(2 ** len(fixed), len(fixed))
                X = np.zeros((pats.shape[0], n))
                if fixed:
                    X[:, fixed] = np.where(pats, hi[fixed], lo[fixed])
                if s:
                    sub = A[np.ix_(rows, free)]
                    if abs(np.linalg.det(sub)) < 1e-12:
                        continue
                    r = rhs[rows][None, :] - X[:, fixed] @ A[np.ix_(rows, fixed)].T
                    X[:, list(free)] = np.linalg.solve(sub, r.T).T
                ok = np.all((X >= lo - tol) & (X <= hi + tol), axis=1)
                AX = X @ A.T
                ok &= np.all(~le | (AX <= rhs + tol), axis=1)
                ok &= np.all(~ge | (AX >= rhs - tol), axis=1)
                ok &= np.all(~eqm | (np.abs(AX - rhs) <= tol), axis=1)
                if ok.any():
                    v = float((X[ok] @ c).max())
                    best = v if best is None else max(best, v)
    return best


def plan_values(scenario, j, g, nu):
    """Reduced cost (without the convexity dual) of every plan for curb ``j``.

    ``g[k, i]`` holds the dual-adjusted stage value.  Plans are listed in
    lexicographic order.
    """
    T, M = g.shape
    out = []
    for plan in itertools.product(range(M), repeat=T):
        v = sum(g[k, plan[k]] for k in range(T))
        v -= sum(nu[k] for k in range(T - 1) if plan[k + 1] != plan[k])
        out.append((plan, v))
    return out


def evaluate_loops(scenario, plan):
    """Triple-loop objective: stage values plus the pairwise same-type distance reward."""
    T, N = len(plan), len(plan[0])
    total = 0.0
    for k in range(T):
        for j in range(N):
            total += scenario.H[k][j][plan[k][j]]
    for k in range(T):
        for i in range(scenario.M):
            for j in range(N):
                for jj in range(N):
                    if plan[k][j] == i and plan[k][jj] == i:
                        total += scenario.rho * scenario.A[j][jj]
    return total


def random_lp(rng, max_vars=10, max_rows=10, max_pairs=12870):
    """Seeded box-bounded LP small enough for :func:`lp_vertex_max`."""
    from math import comb

    while True:
        n = int(rng.integers(1, max_vars + 1))
        m = int(rng.integers(1, max_rows + 1))
        if comb(n + m, n) <= max_pairs:
            break
    c = rng.integers(-5, 6, n).astype(float)
    A = rng.integers(-4, 5, (m, n)).astype(float)
    rel = list(rng.choice(["<=", ">=", "="], size=m, p=[0.6, 0.25, 0.15]))
    x0 = rng.uniform(-1, 2, n)
    lo = np.floor(x0 - rng.uniform(0, 3, n))
    hi = np.ceil(x0 + rng.uniform(0, 3, n))
    # rhs around a reference point keeps most instances feasible
    ax = A @ rng.uniform(lo, hi)
    rhs = np.round(ax + np.where(np.array(rel) == "<=", 1, np.where(np.array(rel) == ">=", -1, 0))
                   * rng.uniform(0, 3, m), 1)
    if rng.random() < 0.1:
        rhs = rhs + np.where(np.array(rel) == ">=", 50.0, 0.0)
    return c, A, rel, rhs, lo, hi
