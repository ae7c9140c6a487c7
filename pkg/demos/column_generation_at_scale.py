"""Column generation on a 289-curb, 10-step synthetic city.

Prints the restricted-master value per pricing round, then compares the
integer plan with the LP bound and with a quick adp4 run.
"""

import sys
import time

from curbzone import check_feasible
from curbzone.adp import run_adp
from curbzone.colgen import run_colgen
from curbzone.scenario_io import generate_synthetic

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 1
scenario = generate_synthetic(289, 10, seed=seed, profile="peaked")
print(f"{scenario.name}: b={scenario.b}, bounds={scenario.count_bounds.tolist()[0]} per type")

t0 = time.perf_counter()
res = run_colgen(scenario)
print(f"\n{'round':>5} {'master':>12} {'columns':>8} {'ms':>9}")
for it, obj, ms, ncols in res.trace.rows:
    print(f"{it:>5} {obj:>12.4f} {ncols:>8} {ms:>9.1f}")
print(f"\ninteger plan {res.objective:.4f} vs lp bound {res.lp_bound:.4f} "
      f"(gap {(res.lp_bound - res.objective) / res.lp_bound:.2e}), {time.perf_counter() - t0:.1f}s")
assert check_feasible(scenario, res.allocation).feasible

adp = run_adp(scenario, variant="adp4", seed=0, time_limit=20)
print(f"adp4 after {adp.trace.times_ms[-1] / 1e3:.1f}s: {adp.objective:.4f} "
      f"({adp.objective / res.lp_bound:.1%} of the bound)")
