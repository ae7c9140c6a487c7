"""Compare the four heuristics across seeds and write plot-ready CSV files.

Uses the same bench layer as ``curbzone bench``; with an output directory
argument the per-run reports and convergence/summary CSVs are kept there.
"""

import sys
import tempfile
from collections import defaultdict

from curbzone.bench import run_bench
from curbzone.scenario_io import generate_synthetic

out = sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="curbzone-bench-")
scenario = generate_synthetic(50, 10, seed=1, profile="peaked")
reports = run_bench(scenario, ["adp1", "adp2", "adp3", "adp4", "dw"], seeds=[0, 1, 2], out_dir=out,
                    time_limit=10)

by_method = defaultdict(list)
for r in reports:
    by_method[r.method].append(r.objective)
for method, vals in by_method.items():
    print(f"{method:5} " + "  ".join(f"{v:8.3f}" for v in vals))
print(f"\nCSV files in {out}")
