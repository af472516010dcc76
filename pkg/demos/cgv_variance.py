"""Coarse grid variates on a stationary log-normal field.

Every fine sample splits into 2**d interleaved coarse samples. The standard
estimator solves on one of them, CGV averages the solves on all of them.
The fine solves are shared, so the two variances are directly comparable.

    python demos/cgv_variance.py [samples]
"""

import sys

from fvmlmc.experiments import run_cgv_comparison
from fvmlmc.fields import LOGNORMAL
from fvmlmc.problems import MODEL_PROBLEM_2, DarcyProblem

samples = int(sys.argv[1]) if len(sys.argv) > 1 else 300

for d, levels in ((1, [1, 2, 3]), (2, [1, 2, 3]), (3, [1])):
    tab = run_cgv_comparison(DarcyProblem(d=d, problem=MODEL_PROBLEM_2, model=LOGNORMAL, m0=4), levels, samples)
    print(f"\nd={d}")
    print(f"{'h':>8} {'V[Y] std':>10} {'V[Y] cgv':>10} {'factor':>7} {'work ratio':>10}")
    for r in tab.rows:
        _, _, h, _, vs, vc, red, *_, ratio = r
        print(f"{h:8.4f} {vs:10.3e} {vc:10.3e} {red:7.1f} {ratio:10.2f}")
