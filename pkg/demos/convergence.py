"""Discretisation error and level-difference variance on a dyadic hierarchy.

The local average (Model Problem 1) converges quadratically in h, the
outflow (Model Problem 2) linearly, because the outflow sees the staircase
approximation of the layer interfaces directly.

    python demos/convergence.py [samples]
"""

import sys

from fvmlmc.experiments import run_convergence_study
from fvmlmc.fields import PIECEWISE_CONSTANT, PIECEWISE_CORRELATED
from fvmlmc.problems import MODEL_PROBLEM_1, MODEL_PROBLEM_2, DarcyProblem

samples = int(sys.argv[1]) if len(sys.argv) > 1 else 400

for model in (PIECEWISE_CONSTANT, PIECEWISE_CORRELATED):
    for problem in (MODEL_PROBLEM_1, MODEL_PROBLEM_2):
        tab = run_convergence_study(DarcyProblem(d=2, problem=problem, model=model), L=3, reference_level=4, samples=samples)
        print(f"\n{model}, {problem}")
        print(f"{'h':>9} {'|E[Q_ref-Q_h]|':>15} {'V[Y_l]':>11}")
        for h, e, v in zip(tab.column("h"), tab.column("error"), tab.column("var_Y")):
            print(f"{h:9.5f} {abs(e):15.3e} {v:11.3e}")
        s = tab.summary
        print(f"alpha {s['alpha']:.2f} (log-log {s['alpha_loglog']:.2f}), beta {s['beta']:.2f}")
