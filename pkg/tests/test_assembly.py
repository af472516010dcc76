import itertools

import numpy as np
import pytest
import scipy.sparse.linalg as spla
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from fvmlmc.assembly import (
    ARITHMETIC,
    HARMONIC,
    BoundarySpec,
    Dirichlet,
    Neumann,
    assemble,
    edge_permeability,
)
from fvmlmc.grid import Grid


def loop_matrix(m, d, k, bc, f, mode=HARMONIC):
    """Cell-by-cell assembly, written independently of the vectorised code."""
    h = 1.0 / m
    n = m**d
    A = np.zeros((n, n))
    b = np.zeros(n)
    cells = list(itertools.product(range(m), repeat=d))
    index = {c: i for i, c in enumerate(cells)}
    for c in cells:
        i = index[c]
        centre = (np.array(c) + 0.5) * h
        b[i] += f * h**d
        for a in range(d):
            for step in (-1, 1):
                nb = list(c)
                nb[a] += step
                if 0 <= nb[a] < m:
                    ka, kb = k[c], k[tuple(nb)]
                    kf = 2 * ka * kb / (ka + kb) if mode == HARMONIC else (ka + kb) / 2
                    w = kf * h ** (d - 2)
                    A[i, i] += w
                    A[i, index[tuple(nb)]] -= w
                else:
                    side = 0 if step < 0 else 1
                    cond = bc[(a, side)]
                    mid = centre.copy()
                    mid[a] = side
                    if isinstance(cond, Dirichlet):
                        w = 2 * k[c] * h ** (d - 2)
                        A[i, i] += w
                        b[i] += w * cond(mid[None])[0]
                    else:
                        b[i] -= cond(mid[None])[0] * h ** (d - 1)
    return A, b


def random_k(rng, shape):
    return np.exp(rng.normal(size=shape))


def test_edge_permeability():
    assert edge_permeability(1.0, 3.0) == pytest.approx(1.5)
    assert edge_permeability(1.0, 3.0, ARITHMETIC) == pytest.approx(2.0)
    assert edge_permeability(2.0, 2.0) == 2.0
    with pytest.raises(ValueError):
        edge_permeability(0.0, 1.0)
    with pytest.raises(ValueError):
        edge_permeability(1.0, 1.0, "geometric")


@given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
def test_harmonic_bounds(a, b):
    hm = edge_permeability(a, b)
    assert min(a, b) * (1 - 1e-12) <= hm <= edge_permeability(a, b, ARITHMETIC) * (1 + 1e-12)
    assert hm == pytest.approx(edge_permeability(b, a))


def test_1d_stencil_by_hand():
    g = Grid(1, 3)
    bc = BoundarySpec(1, {(0, 0): Dirichlet(1.0), (0, 1): Dirichlet(0.0)})
    s = assemble(g, np.ones(3), bc)
    # h**(d-2) = 3 in 1D
    expected = 3 * np.array([[3, -1, 0], [-1, 2, -1], [0, -1, 3]])
    np.testing.assert_allclose(s.matrix().toarray(), expected)
    np.testing.assert_allclose(s.rhs, [6, 0, 0])


def test_2d_five_point_row():
    g = Grid(2, 4)
    s = assemble(g, np.ones((4, 4)), BoundarySpec.homogeneous_dirichlet(2))
    A = s.matrix().toarray()
    interior = 1 * 4 + 1  # cell (1, 1)
    assert A[interior, interior] == 4
    assert sorted(A[interior][A[interior] != 0]) == [-1, -1, -1, -1, 4]
    assert A[0, 0] == 6  # two Dirichlet half-cell faces
    np.testing.assert_allclose(s.rhs, 0)


SETUPS = [
    (1, BoundarySpec(1, {(0, 0): Dirichlet(2.0), (0, 1): Neumann(0.5)})),
    (2, BoundarySpec.pressure_drop(2)),
    (2, BoundarySpec(2, {(0, 0): Dirichlet(lambda x: x[..., 1]), (0, 1): Neumann(lambda x: x[..., 1] ** 2), (1, 0): Dirichlet(0.3), (1, 1): Neumann(-1.0)})),
    (3, BoundarySpec.homogeneous_dirichlet(3)),
    (3, BoundarySpec.pressure_drop(3)),
]


@pytest.mark.parametrize("d,bc", SETUPS)
@pytest.mark.parametrize("mode", [HARMONIC, ARITHMETIC])
def test_matches_loop_oracle(rng, d, bc, mode):
    m = 4 if d == 3 else 6
    k = random_k(rng, (m,) * d)
    s = assemble(Grid(d, m), k, bc, 0.7, mode)
    A, b = loop_matrix(m, d, k, bc, 0.7, mode)
    np.testing.assert_allclose(s.matrix().toarray(), A, rtol=1e-13, atol=1e-13)
    np.testing.assert_allclose(s.rhs.ravel(), b, rtol=1e-13, atol=1e-13)
    x = rng.normal(size=s.n)
    np.testing.assert_allclose(s.apply(x).ravel(), A @ x, rtol=1e-12, atol=1e-12)


@given(st.integers(1, 3), st.integers(0, 2**32 - 1), st.sampled_from(["mp1", "mp2"]))
@settings(max_examples=30, deadline=None)
def test_m_matrix_structure(d, seed, which):
    m = 4 if d == 3 else 8
    rng = np.random.default_rng(seed)
    bc = BoundarySpec.homogeneous_dirichlet(d) if which == "mp1" else BoundarySpec.pressure_drop(d)
    A = assemble(Grid(d, m), np.exp(2 * rng.normal(size=(m,) * d)), bc).matrix().toarray()
    np.testing.assert_allclose(A, A.T, rtol=0, atol=0)
    off = A - np.diag(np.diag(A))
    assert np.all(off <= 0)
    assert np.all(np.diag(A) > 0)
    # weak diagonal dominance, strict on rows touching a Dirichlet face
    rowsum = A.sum(axis=1)
    assert np.all(rowsum >= -1e-12 * np.diag(A))
    assert np.any(rowsum > 0)
    assert np.linalg.eigvalsh(A).min() > 0


def test_stencil_width():
    for d, nnz_row in ((1, 3), (2, 5), (3, 7)):
        m = 4
        A = assemble(Grid(d, m), np.ones((m,) * d), BoundarySpec.homogeneous_dirichlet(d)).matrix()
        assert np.diff(A.indptr).max() == nnz_row


@pytest.mark.parametrize("d", [1, 2, 3])
def test_affine_exactness(rng, d):
    m = 8 if d < 3 else 4
    g = Grid(d, m)
    s = assemble(g, np.ones(g.shape), BoundarySpec.pressure_drop(d))
    p = spla.spsolve(s.matrix().tocsc(), s.rhs.ravel()).reshape(g.shape)
    np.testing.assert_allclose(p, 1 - g.centres()[..., 0], atol=1e-12)


@given(arrays(float, 4, elements=st.floats(0.01, 100)))
@settings(max_examples=40, deadline=None)
def test_1d_layered_flux_matches_series_resistance(k):
    # 1D: constant flux equals 1 / total resistance of the cells in series
    g = Grid(1, 4)
    s = assemble(g, k, BoundarySpec.pressure_drop(1))
    p = np.linalg.solve(s.matrix().toarray(), s.rhs)
    h = 0.25
    resistance = h / (2 * k[0]) + h / (2 * k[-1]) + sum(h * (1 / k[i] + 1 / k[i + 1]) / 2 for i in range(3))
    flux = 2 * k[-1] / h * p[-1]
    assert flux == pytest.approx(1 / resistance, rel=1e-10)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=20, deadline=None)
def test_discrete_maximum_principle(seed):
    rng = np.random.default_rng(seed)
    g = Grid(2, 8)
    s = assemble(g, np.exp(rng.normal(size=g.shape)), BoundarySpec.pressure_drop(2))
    p = spla.spsolve(s.matrix().tocsc(), s.rhs.ravel())
    assert p.min() >= -1e-12 and p.max() <= 1 + 1e-12


def test_rejects_bad_input():
    g = Grid(2, 4)
    bc = BoundarySpec.homogeneous_dirichlet(2)
    with pytest.raises(ValueError, match="shape"):
        assemble(g, np.ones((4, 5)), bc)
    with pytest.raises(ValueError, match="positive"):
        assemble(g, -np.ones((4, 4)), bc)
    with pytest.raises(ValueError, match="positive"):
        assemble(g, np.full((4, 4), np.nan), bc)
    with pytest.raises(ValueError, match="Dirichlet"):
        BoundarySpec(1, {(0, 0): Neumann(), (0, 1): Neumann()})
    with pytest.raises(ValueError, match="faces"):
        BoundarySpec(2, {(0, 0): Dirichlet()})


def test_export_coo(tmp_path):
    s = assemble(Grid(1, 3), np.ones(3), BoundarySpec.homogeneous_dirichlet(1))
    s.export_coo(tmp_path / "a.txt")
    lines = (tmp_path / "a.txt").read_text().splitlines()
    assert lines[0] == "# 3 3 7"
    assert lines[1] == "0 0 9.0"
