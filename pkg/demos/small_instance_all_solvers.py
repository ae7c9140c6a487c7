"""Solve one tiny instance with every method and compare against brute force.

With three curbs and three timesteps there are 3**9 plans, so the exhaustive
search is instant and gives the true optimum to compare with.
"""

import numpy as np

from curbzone import brute_force_solve, check_feasible, evaluate, make_scenario
from curbzone.adp import run_adp
from curbzone.colgen import run_colgen
from curbzone.exact_mip import solve_exact

rng = np.random.default_rng(2024)
H = rng.uniform(0, 1, (3, 3, 3))
scenario = make_scenario(H, rng.uniform(0, 2, (3, 2)), b=1,
                         count_bounds={"pp": (1, 3), "cv": (0, 2), "bus": (0, 2)}, rho=0.1)

plan, best = brute_force_solve(scenario)
print(f"brute force  {best:.6f}\n{plan.plan}")

exact = solve_exact(scenario)
print(f"mip          {exact.objective:.6f}  status={exact.status} nodes={exact.node_count}")

# column generation prices without the regularizer; the integer plan is
# re-scored with rho afterwards
dw = run_colgen(scenario)
flat = evaluate(scenario.replace(rho=0.0), dw.allocation)
print(f"dw           {dw.objective:.6f}  rho=0 value {flat:.6f} <= lp bound {dw.lp_bound:.6f}, rounds={dw.iterations}")

for variant in ("adp1", "adp2", "adp3", "adp4"):
    res = run_adp(scenario, variant=variant, n_outer=30, seed=0)
    assert check_feasible(scenario, res.allocation).feasible
    print(f"{variant:12} {res.objective:.6f}  candidates={res.candidates}")

assert abs(evaluate(scenario, exact.allocation) - best) < 1e-9
