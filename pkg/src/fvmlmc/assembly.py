"""Cell-centred finite volume discretisation of ``-div(k grad p) = f``.

The flux through the face between two neighbouring cells is
``w * (p_a - p_b)`` with transmissibility ``w = k_face * h**(d-2)``, where
``k_face`` averages the two cell values. Summing the outward fluxes of a cell
and equating them to the midpoint-rule source ``f(centre) * h**d`` gives one
row of a symmetric M-matrix (the familiar 3-, 5- and 7-point stencils).

Boundary faces:

* Dirichlet ``p = g``: one-sided difference over the half cell, i.e. a face
  transmissibility ``2 * k_cell * h**(d-2)`` added to the diagonal and
  ``2 * k_cell * h**(d-2) * g(face midpoint)`` added to the right-hand side.
* Neumann ``-k grad p . n = q``: the outward flux ``q(face midpoint) * h**(d-1)``
  is moved to the right-hand side.

Face transmissibilities are stored per axis in arrays whose extent along
that axis is ``m + 1``; entries ``0`` and ``m`` are the boundary faces.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .grid import Grid

HARMONIC = "harmonic"
ARITHMETIC = "arithmetic"


@dataclass(frozen=True)
class Dirichlet:
    value: object = 0.0

    def __call__(self, points):
        return _evaluate(self.value, points)


@dataclass(frozen=True)
class Neumann:
    flux: object = 0.0

    def __call__(self, points):
        return _evaluate(self.flux, points)


def _evaluate(data, points):
    if callable(data):
        return np.asarray(data(points), dtype=float) * np.ones(points.shape[:-1])
    return np.full(points.shape[:-1], float(data))


@dataclass(frozen=True)
class BoundarySpec:
    """Boundary condition on each face ``(axis, side)`` of the unit cube;
    side 0 is ``x_axis = 0`` and side 1 is ``x_axis = 1``."""

    d: int
    faces: dict = field(hash=False)

    def __post_init__(self):
        expected = {(a, s) for a in range(self.d) for s in (0, 1)}
        if set(self.faces) != expected:
            raise ValueError(f"boundary conditions needed on faces {sorted(expected)}")
        if not any(isinstance(c, Dirichlet) for c in self.faces.values()):
            raise ValueError("at least one Dirichlet face is required; pure Neumann problems are singular")

    def __getitem__(self, face):
        return self.faces[face]

    def is_dirichlet(self, axis, side) -> bool:
        return isinstance(self.faces[(axis, side)], Dirichlet)

    def dirichlet_flags(self) -> np.ndarray:
        """``(3, 2)`` array of 0/1 flags, padded with Neumann for unused axes."""
        flags = np.zeros((3, 2), dtype=np.int64)
        for (a, s), cond in self.faces.items():
            flags[a, s] = isinstance(cond, Dirichlet)
        return flags

    @classmethod
    def homogeneous_dirichlet(cls, d):
        return cls(d, {(a, s): Dirichlet(0.0) for a in range(d) for s in (0, 1)})

    @classmethod
    def pressure_drop(cls, d, inlet=1.0, outlet=0.0):
        """``p = inlet`` at ``x1 = 0``, ``p = outlet`` at ``x1 = 1``, no flow elsewhere."""
        faces = {(a, s): Neumann(0.0) for a in range(1, d) for s in (0, 1)}
        faces[(0, 0)] = Dirichlet(inlet)
        faces[(0, 1)] = Dirichlet(outlet)
        return cls(d, faces)


def edge_permeability(ka, kb, mode=HARMONIC):
    ka = np.asarray(ka, dtype=float)
    kb = np.asarray(kb, dtype=float)
    if np.any(ka <= 0) or np.any(kb <= 0):
        raise ValueError("permeability must be positive")
    if mode == HARMONIC:
        out = 2.0 * ka * kb / (ka + kb)
    elif mode == ARITHMETIC:
        out = 0.5 * (ka + kb)
    else:
        raise ValueError(f"unknown averaging mode {mode!r}")
    return out if out.ndim else float(out)


def face_midpoints(grid: Grid, axis: int, side: int) -> np.ndarray:
    """Midpoints of the boundary faces on ``x_axis = side``, shaped like a
    slab of cells (the ``axis`` dimension has length 1)."""
    c = grid.centres()
    sl = [slice(None)] * grid.d
    sl[axis] = slice(0, 1) if side == 0 else slice(grid.m - 1, grid.m)
    pts = c[tuple(sl)].copy()
    pts[..., axis] = float(side)
    return pts


def boundary_slab(grid: Grid, axis: int, side: int) -> tuple:
    sl = [slice(None)] * grid.d
    sl[axis] = slice(0, 1) if side == 0 else slice(grid.m - 1, grid.m)
    return tuple(sl)


@dataclass(frozen=True)
class StencilSystem:
    grid: Grid
    faces: tuple  # per axis, transmissibilities, extent m + 1 along the axis
    rhs: np.ndarray
    k: np.ndarray
    bc: BoundarySpec
    mode: str = HARMONIC

    @property
    def n(self) -> int:
        return self.grid.n_cells

    def diagonal(self) -> np.ndarray:
        diag = np.zeros(self.grid.shape)
        for a, w in enumerate(self.faces):
            diag += np.take(w, np.arange(self.grid.m), axis=a)
            diag += np.take(w, np.arange(1, self.grid.m + 1), axis=a)
        return diag

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(self.grid.shape)
        out = self.diagonal() * x
        m = self.grid.m
        for a, w in enumerate(self.faces):
            wi = np.take(w, np.arange(1, m), axis=a)
            lo = np.take(x, np.arange(0, m - 1), axis=a)
            hi = np.take(x, np.arange(1, m), axis=a)
            idx_lo = [slice(None)] * self.grid.d
            idx_hi = [slice(None)] * self.grid.d
            idx_lo[a] = slice(0, m - 1)
            idx_hi[a] = slice(1, m)
            out[tuple(idx_lo)] -= wi * hi
            out[tuple(idx_hi)] -= wi * lo
        return out

    def matrix(self) -> sp.csr_matrix:
        """Sparse matrix in C (last coordinate fastest) ordering."""
        m, d = self.grid.m, self.grid.d
        index = np.arange(self.n).reshape(self.grid.shape)
        rows, cols, vals = [], [], []
        for a, w in enumerate(self.faces):
            wi = np.take(w, np.arange(1, m), axis=a).ravel()
            lo = np.take(index, np.arange(0, m - 1), axis=a).ravel()
            hi = np.take(index, np.arange(1, m), axis=a).ravel()
            rows += [lo, hi]
            cols += [hi, lo]
            vals += [-wi, -wi]
        rows.append(index.ravel())
        cols.append(index.ravel())
        vals.append(self.diagonal().ravel())
        A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(self.n, self.n))
        return A.tocsr()

    def export_coo(self, path):
        """Write the matrix as ``row col value`` lines (0-based indices)."""
        A = self.matrix().tocoo()
        order = np.lexsort((A.col, A.row))
        with open(path, "w") as fh:
            fh.write(f"# {self.n} {self.n} {A.nnz}\n")
            for r, c, v in zip(A.row[order], A.col[order], A.data[order]):
                fh.write(f"{r} {c} {float(v)!r}\n")


def source_values(grid: Grid, f) -> np.ndarray:
    if f is None:
        return np.zeros(grid.shape)
    if callable(f):
        return np.asarray(f(grid.centres()), dtype=float) * np.ones(grid.shape)
    return np.full(grid.shape, float(f))


def _check_k(grid, k):
    kv = np.asarray(getattr(k, "values", k), dtype=float)
    if kv.shape != grid.shape:
        raise ValueError(f"permeability shape {kv.shape} does not match grid {grid.shape}")
    if np.any(~(kv > 0)):
        raise ValueError("permeability must be positive on every cell")
    return kv


def transmissibilities(grid: Grid, k, bc: BoundarySpec, mode=HARMONIC) -> tuple:
    """Face transmissibilities per axis; Neumann boundary faces get zero."""
    kv = _check_k(grid, k)
    d, m = grid.d, grid.m
    scale = grid.h ** (d - 2)
    faces = []
    for a in range(d):
        shape = list(grid.shape)
        shape[a] = m + 1
        w = np.zeros(shape)
        inner = [slice(None)] * d
        inner[a] = slice(1, m)
        w[tuple(inner)] = scale * edge_permeability(
            np.take(kv, np.arange(0, m - 1), axis=a), np.take(kv, np.arange(1, m), axis=a), mode
        )
        for side in (0, 1):
            if bc.is_dirichlet(a, side):
                face = [slice(None)] * d
                face[a] = slice(0, 1) if side == 0 else slice(m, m + 1)
                w[tuple(face)] = 2.0 * kv[boundary_slab(grid, a, side)] * scale
        faces.append(w)
    return tuple(faces)


def assemble(grid: Grid, k, bc: BoundarySpec, f=0.0, mode=HARMONIC) -> StencilSystem:
    """Assemble the finite volume system for permeability ``k`` at the cell centres."""
    kv = _check_k(grid, k)
    if bc.d != grid.d:
        raise ValueError("boundary specification has the wrong dimension")
    d, m, h = grid.d, grid.m, grid.h
    faces = transmissibilities(grid, kv, bc, mode)
    rhs = source_values(grid, f) * h**d
    for a in range(d):
        for side in (0, 1):
            cond = bc[(a, side)]
            slab = boundary_slab(grid, a, side)
            face = [slice(None)] * d
            face[a] = slice(0, 1) if side == 0 else slice(m, m + 1)
            if isinstance(cond, Dirichlet):
                if not callable(cond.value) and float(cond.value) == 0.0:
                    continue
                rhs[slab] += faces[a][tuple(face)] * cond(face_midpoints(grid, a, side))
            elif callable(cond.flux) or float(cond.flux) != 0.0:
                rhs[slab] -= cond(face_midpoints(grid, a, side)) * h ** (d - 1)
    return StencilSystem(grid, faces, rhs, kv, bc, mode)
