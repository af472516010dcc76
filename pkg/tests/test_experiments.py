import math

import numpy as np
import pytest

from fvmlmc import rng as rngmod
from fvmlmc.estimators import MLMCConfig
from fvmlmc.experiments import (
    fit_cost_exponent,
    run_cgv_comparison,
    run_convergence_study,
    run_mlmc,
    run_solver_bench,
)
from fvmlmc.fields import LOGNORMAL, PIECEWISE_CORRELATED, GaussianFieldSpec, PiecewiseConstantSpec, StationarityError
from fvmlmc.problems import CGV, MODEL_PROBLEM_1, MODEL_PROBLEM_2, STANDARD, DarcyProblem


def streams(i, level=1, ns=rngmod.MLMC):
    return rngmod.SampleStreams(0, ns, level, i)


def test_level_zero_has_no_coarse_solve():
    p = DarcyProblem(d=2)
    ys = p.sample_Y(0, streams(0, 0))
    assert ys.solves == 1 and ys.q_coarse == 0.0 and ys.y == ys.q_fine


def test_standard_difference():
    p = DarcyProblem(d=2)
    ys = p.sample_Y(2, streams(1, 2))
    assert ys.solves == 2
    assert ys.y == pytest.approx(ys.q_fine - ys.q_coarse)
    fine = p.sample_permeability(2, streams(1, 2))
    q, _ = p.solve_qoi(p.coarse_permeability(fine))
    assert q == ys.q_coarse


def test_constant_permeability_gives_exact_outflow():
    # tight solves, so that only the discretisation is measured
    p = DarcyProblem(d=2, piecewise=PiecewiseConstantSpec((0, 0, 0), (0, 0, 0)), tol=1e-13)
    for level in range(4):
        ys = p.sample_Y(level, streams(2, level))
        assert ys.q_fine == pytest.approx(1.0, abs=1e-10)
        if level:
            assert abs(ys.y) < 1e-10


def test_cgv_sample_structure():
    p = DarcyProblem(d=2, model=LOGNORMAL)
    ys = p.sample_Y(1, streams(3), CGV)
    assert ys.solves == 5 and len(ys.coarse_values) == 4
    assert ys.q_coarse == pytest.approx(np.mean(ys.coarse_values))
    std = p.sample_Y(1, streams(3), STANDARD)
    assert std.q_fine == ys.q_fine and std.q_coarse == ys.coarse_values[0]


def test_cgv_rejected_for_layers():
    with pytest.raises(StationarityError):
        DarcyProblem(d=2).sample_Y(1, streams(0), CGV)
    with pytest.raises(ValueError):
        DarcyProblem(d=2).sample_Y(1, streams(0), "antithetic")


def test_convergence_study_table():
    p = DarcyProblem(d=1, problem=MODEL_PROBLEM_1)
    tab = run_convergence_study(p, 2, 3, 30)
    assert tab.columns[:6] == ("level", "m", "h", "N", "mean_Q", "error")
    assert len(tab.rows) == 3
    assert math.isnan(tab.rows[0][tab.columns.index("var_Y")])
    assert np.isfinite(tab.summary["alpha"])
    with pytest.raises(ValueError):
        run_convergence_study(p, 3, 3, 10)


def test_convergence_study_with_constant_field():
    # with k = 1 the 1D outflow is exact on every grid
    p = DarcyProblem(d=1, piecewise=PiecewiseConstantSpec((0, 0, 0), (0, 0, 0)), tol=1e-13)
    tab = run_convergence_study(p, 2, 3, 5)
    assert np.all(np.abs(tab.column("error")) < 1e-10)


def test_cgv_zero_variance_reports_na():
    p = DarcyProblem(d=2, model=LOGNORMAL, field_spec=GaussianFieldSpec(0, 0, 0.3, 1))
    tab = run_cgv_comparison(p, [1], 5)
    assert tab.summary["levels"][1]["reduction"] is None
    assert tab.column("var_Y_standard")[0] == pytest.approx(0, abs=1e-20)
    assert math.isnan(tab.column("reduction")[0])


def test_cgv_comparison_rejects_layers():
    with pytest.raises(StationarityError):
        run_cgv_comparison(DarcyProblem(d=2), [1], 5)


def test_cgv_reduces_variance_small():
    p = DarcyProblem(d=2, model=LOGNORMAL)
    tab = run_cgv_comparison(p, [1], 200)
    assert tab.column("reduction")[0] > 5
    assert tab.column("work_ratio")[0] <= 2


def test_solver_bench_constant_k_iterations():
    p = DarcyProblem(d=2, piecewise=PiecewiseConstantSpec((0, 0, 0), (0, 0, 0)))
    tab = run_solver_bench(p, [16, 32, 64, 128], 2)
    its = tab.column("mean_iterations")
    assert its.max() - its.min() <= 2
    assert np.all(tab.column("max_relative_residual") < 1e-10)


def test_solver_bench_single_grid():
    tab = run_solver_bench(DarcyProblem(d=1), [8], 3)
    assert len(tab.rows) == 1 and tab.summary["work_per_dof_spread"] == 1.0


def test_fit_cost_exponent():
    eps = np.array([0.1, 0.05, 0.025])
    assert fit_cost_exponent(eps, 3 * eps**-2.5) == pytest.approx(2.5)


def test_run_mlmc_summary():
    p = DarcyProblem(d=1, problem=MODEL_PROBLEM_2)
    cfg = MLMCConfig(warmup=20, L_min=1, L_max=4)
    tab = run_mlmc(p, [0.1, 0.05], config=cfg, compare_mc=True)
    s = tab.summary
    assert len(s["runs"]) == 2 and len(s["mc"]) == 2
    assert np.isfinite(s["mlmc_cost_exponent"]) and np.isfinite(s["mc_cost_exponent"])
    assert s["mc"][0]["level"] == s["runs"][0]["L"]


def test_cgv_mlmc_cheaper_than_standard():
    p = DarcyProblem(d=2, model=LOGNORMAL)
    cfg = MLMCConfig(warmup=50, L_min=2, L_max=4)
    std = run_mlmc(p, [0.03], STANDARD, cfg).results["mlmc"][0]
    cgv = run_mlmc(p, [0.03], CGV, cfg).results["mlmc"][0]
    assert cgv.total_cost < std.total_cost
