import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from fvmlmc import rng as rngmod
from fvmlmc.assembly import BoundarySpec, Neumann, Dirichlet, assemble
from fvmlmc.grid import Grid
from fvmlmc.problems import DarcyProblem, MODEL_PROBLEM_1
from fvmlmc.fields import LOGNORMAL, PIECEWISE_CORRELATED
from fvmlmc.solver import (
    ConvergenceError,
    Preconditioner,
    coarsen_permeability,
    direct_solve,
    pcg,
    solve,
    write_residuals,
)
from fvmlmc import _kernels


def system(rng, d, m, bc=None, sigma=1.0, f=1.0):
    g = Grid(d, m)
    bc = bc or BoundarySpec.pressure_drop(d)
    return assemble(g, np.exp(sigma * rng.normal(size=g.shape)), bc, f)


def dense(s):
    return scipy.linalg.solve(s.matrix().toarray(), s.rhs.ravel(), assume_a="pos").reshape(s.grid.shape)


@pytest.mark.parametrize("kind", ["mg", "sgs", "none"])
@pytest.mark.parametrize("d,m", [(1, 16), (2, 16), (2, 12), (3, 8)])
def test_pcg_matches_dense(rng, kind, d, m):
    s = system(rng, d, m)
    rep = pcg(s, kind, tol=1e-12)
    ref = dense(s)
    assert np.linalg.norm(rep.x - ref) <= 1e-8 * np.linalg.norm(ref)
    assert rep.relative_residual < 1e-12
    assert rep.residual_history[0] == 1.0
    assert rep.work == s.n * rep.iterations


def test_true_residual_reaches_tolerance(rng):
    s = system(rng, 2, 64, sigma=2.0)
    rep = pcg(s, "mg", tol=1e-10)
    b = s.rhs
    assert np.linalg.norm(b - s.apply(rep.x)) / np.linalg.norm(b) < 1e-9


def test_multigrid_beats_sgs(rng):
    s = system(rng, 2, 64)
    its = [pcg(s, kind, max_iter=5000).iterations for kind in ("mg", "sgs", "none")]
    assert its[0] < its[1] < its[2]


def test_preconditioner_is_symmetric_positive(rng):
    s = system(rng, 2, 16, sigma=1.5)
    M = Preconditioner(s, "mg")
    n = s.n
    P = np.column_stack([M.apply(e.reshape(s.grid.shape)).ravel() for e in np.eye(n)])
    np.testing.assert_allclose(P, P.T, atol=1e-12 * np.abs(P).max())
    assert np.linalg.eigvalsh((P + P.T) / 2).min() > 0


def test_setup_matches_python_coarsening(rng):
    s = system(rng, 2, 16)
    M = Preconditioner(s, "mg")
    assert M.n_levels == 4
    k = s.k
    for level in range(1, M.n_levels):
        k = coarsen_permeability(k)
        g = Grid(2, k.shape[0])
        coarse = assemble(g, k, s.bc)
        np.testing.assert_allclose(M.DIAG[level].reshape(g.shape), coarse.diagonal(), rtol=1e-12)


def test_coarsen_permeability():
    k = np.array([[1.0, 1.0], [1.0, 1.0 / 3]])
    assert coarsen_permeability(k)[0, 0] == pytest.approx(4 / 6)
    c = _kernels.coarsen(k.reshape(1, 2, 2), 2)
    assert c[0, 0, 0] == pytest.approx(4 / 6)


def test_non_power_of_two_falls_back():
    s = assemble(Grid(2, 12), np.ones((12, 12)), BoundarySpec.homogeneous_dirichlet(2), 1.0)
    assert Preconditioner(s, "mg").kind == "sgs"


def test_zero_rhs():
    s = assemble(Grid(2, 8), np.ones((8, 8)), BoundarySpec.homogeneous_dirichlet(2), 0.0)
    rep = pcg(s)
    assert rep.iterations == 0 and np.all(rep.x == 0)


def test_convergence_error(rng):
    s = system(rng, 2, 32)
    with pytest.raises(ConvergenceError) as err:
        pcg(s, "none", tol=1e-10, max_iter=3)
    assert len(err.value.history) == 4


def test_unknown_preconditioner(rng):
    with pytest.raises(ValueError):
        pcg(system(rng, 1, 8), "ilu")


def test_direct_solve(rng):
    s = system(rng, 2, 8)
    np.testing.assert_allclose(direct_solve(s).x, dense(s), rtol=1e-12)
    np.testing.assert_allclose(solve(s, "direct").x, dense(s), rtol=1e-12)


def test_energy_error_decreases(rng):
    # CG minimises the energy norm of the error over growing Krylov spaces
    s = system(rng, 2, 16)
    A = s.matrix()
    ref = dense(s).ravel()
    energy = []
    for it in range(1, 6):
        with pytest.raises(ConvergenceError):
            pcg(s, "none", tol=1e-30, max_iter=it)
    for it in range(1, 6):
        x = _partial(s, it)
        e = x - ref
        energy.append(e @ (A @ e))
    assert all(b < a for a, b in zip(energy, energy[1:]))
    rep = pcg(s, "mg", tol=1e-12)
    assert np.all(rep.rz_history >= 0)


def _partial(s, iterations):
    # the kernel returns the iterate reached so far instead of raising
    M = Preconditioner(s, "none")
    b = np.ascontiguousarray(s.rhs.reshape(M.shape3()))
    x, *_ = _kernels.pcg(M.WX, M.WY, M.WZ, M.DIAG, M.DINV, M.X, M.B, M.R, M.coarse_inv, M.flags, M.mode, M.sweeps, b, 1e-30, iterations)
    return x.ravel()


@given(st.integers(0, 2**32 - 1), st.sampled_from([1, 2, 3]))
@settings(max_examples=20, deadline=None)
def test_random_boundary_mix(seed, d):
    rng = np.random.default_rng(seed)
    faces = {}
    for a in range(d):
        for side in (0, 1):
            faces[(a, side)] = Dirichlet(rng.normal()) if rng.random() < 0.5 else Neumann(rng.normal())
    faces[(0, 0)] = Dirichlet(1.0)
    s = system(rng, d, 8 if d < 3 else 4, BoundarySpec(d, faces), sigma=1.0, f=rng.normal())
    ref = dense(s)
    assert np.linalg.norm(pcg(s, "mg").x - ref) <= 1e-8 * max(np.linalg.norm(ref), 1e-300)


def test_write_residuals(tmp_path, rng):
    rep = pcg(system(rng, 1, 8))
    write_residuals(tmp_path / "r.csv", [rep], ["a"])
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "label,iteration,relative_residual"
    assert lines[1] == "a,0,1.0"
    assert len(lines) == rep.iterations + 2


@pytest.mark.parametrize("model", [LOGNORMAL, PIECEWISE_CORRELATED])
def test_iterations_bounded_on_problem_fields(model):
    problem = DarcyProblem(d=2, problem=MODEL_PROBLEM_1, model=model)
    its = []
    for m in (16, 64):
        k = problem.sample_on_grid(Grid(2, m), rngmod.SampleStreams(0, rngmod.SOLVER_BENCH, m, 0))
        its.append(pcg(assemble(k.grid, k.values, problem.bc, problem.source)).iterations)
    assert its[1] <= 3 * its[0] + 5
