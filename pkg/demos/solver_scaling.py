"""Multigrid-preconditioned CG needs a grid-independent number of iterations,
so the work per unknown stays flat as the grid is refined.

    python demos/solver_scaling.py [systems]
"""

import sys

from fvmlmc.experiments import run_solver_bench
from fvmlmc.fields import LOGNORMAL, GaussianFieldSpec
from fvmlmc.problems import MODEL_PROBLEM_2, DarcyProblem

systems = int(sys.argv[1]) if len(sys.argv) > 1 else 10
spec = GaussianFieldSpec(0.0, 1.0, 0.3, 2)

for d, sizes in ((2, [16, 32, 64, 128]), (3, [8, 16, 32])):
    tab = run_solver_bench(DarcyProblem(d=d, problem=MODEL_PROBLEM_2, model=LOGNORMAL, field_spec=spec), sizes, systems)
    print(f"\nd={d}")
    print(f"{'DOF':>8} {'iterations':>10} {'work/DOF':>9} {'s/DOF':>9}")
    for dof, it, w, t in zip(tab.column("DOF"), tab.column("mean_iterations"), tab.column("work_per_dof"), tab.column("seconds_per_dof")):
        print(f"{int(dof):8d} {it:10.1f} {w:9.2f} {t:9.2e}")
