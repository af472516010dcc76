"""Solvers for the finite volume systems.

The workhorse is conjugate gradients preconditioned by one geometric
multigrid V-cycle. The multigrid hierarchy is built by coarsening the cell
permeability (harmonic mean of the ``2**d`` children) and re-discretising on
each coarse grid; transfers are cell-centred d-linear interpolation and its
transpose. With symmetric Gauss-Seidel smoothing before and after the
coarse correction and an exact coarsest solve, the V-cycle is a symmetric
operator, so it is a valid CG preconditioner.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import _kernels
from .assembly import HARMONIC, StencilSystem

IDENTITY = "none"
SGS = "sgs"
MULTIGRID = "mg"
_MODES = {IDENTITY: 0, SGS: 1, MULTIGRID: 2}


class ConvergenceError(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


@dataclass
class SolveReport:
    x: np.ndarray = field(repr=False)
    iterations: int
    relative_residual: float
    residual_history: np.ndarray = field(repr=False)
    seconds: float
    work: float
    rz_history: np.ndarray = field(default=None, repr=False)


def _shape3(shape):
    # unused axes go first so the innermost loops of the kernels stay long
    return (1,) * (3 - len(shape)) + tuple(shape)


def _padded_faces(faces, shape):
    """Per-axis transmissibility arrays padded to three dimensions."""
    d = len(faces)
    shape3 = _shape3(shape)
    out = []
    for a in range(3 - d):
        s = list(shape3)
        s[a] += 1
        out.append(np.zeros(s))
    for w in faces:
        out.append(np.ascontiguousarray(w.reshape((1,) * (3 - d) + w.shape)))
    return out


def _padded_flags(bc):
    flags = np.zeros((3, 2), dtype=np.int64)
    flags[3 - bc.d :] = bc.dirichlet_flags()[: bc.d]
    return flags


def coarsen_permeability(k: np.ndarray) -> np.ndarray:
    """Harmonic mean over each block of ``2**d`` children."""
    d = k.ndim
    m = k.shape[0]
    blocks = k.reshape(sum(((m // 2, 2) for _ in range(d)), ()))
    return 1.0 / np.mean(1.0 / blocks, axis=tuple(range(1, 2 * d, 2)))


def _is_power_of_two(m):
    return m >= 1 and m & (m - 1) == 0


class Preconditioner:
    """Scratch space and operators for ``pcg``.

    ``kind`` is ``"mg"`` (V-cycle), ``"sgs"`` (symmetric Gauss-Seidel) or
    ``"none"``. A multigrid request on a grid whose size is not a power of two,
    or which cannot be coarsened, falls back to symmetric Gauss-Seidel.
    """

    def __init__(self, system: StencilSystem, kind=MULTIGRID, sweeps=2, coarsest=2):
        if kind not in _MODES:
            raise ValueError(f"unknown preconditioner {kind!r}")
        grid = system.grid
        if kind == MULTIGRID and (not _is_power_of_two(grid.m) or grid.m <= coarsest):
            kind = SGS
        self.kind = kind
        self.sweeps = int(sweeps)
        self.flags = _padded_flags(system.bc)
        n_levels = 1
        if kind == MULTIGRID:
            n_levels = int(np.log2(grid.m // coarsest)) + 1
        self.grids = [grid]
        for _ in range(n_levels - 1):
            self.grids.append(self.grids[-1].coarsen(2))
        wx, wy, wz = _padded_faces(system.faces, grid.shape)
        k3 = np.ascontiguousarray(system.k.reshape(_shape3(grid.shape)))
        (self.WX, self.WY, self.WZ, self.DIAG, self.DINV, self.X, self.B, self.R, self.coarse_inv) = _kernels.setup(
            wx, wy, wz, k3, self.flags, grid.d, grid.h, system.mode == HARMONIC, n_levels
        )
        self.mode = _MODES[kind]

    @property
    def n_levels(self):
        return len(self.grids)

    def shape3(self):
        return self.DIAG[0].shape

    def apply(self, r) -> np.ndarray:
        r3 = np.ascontiguousarray(np.asarray(r, dtype=float).reshape(self.shape3()))
        z = np.zeros_like(r3)
        _kernels.precondition(self.WX, self.WY, self.WZ, self.DIAG, self.DINV, self.X, self.B, self.R, self.coarse_inv, self.flags, self.mode, self.sweeps, r3, z)
        return z.reshape(np.shape(r))


def vcycle_preconditioner(system: StencilSystem, sweeps=2) -> Preconditioner:
    return Preconditioner(system, MULTIGRID, sweeps)


def pcg(system: StencilSystem, preconditioner=MULTIGRID, tol=1e-10, max_iter=500, sweeps=2) -> SolveReport:
    """Solve ``A x = b`` by preconditioned CG until ``|r_m| / |r_0| < tol``.

    ``preconditioner`` is a :class:`Preconditioner` or one of ``"mg"``,
    ``"sgs"``, ``"none"``. The work estimate is ``DOF * iterations``.
    """
    t0 = time.perf_counter()
    if not isinstance(preconditioner, Preconditioner):
        preconditioner = Preconditioner(system, preconditioner, sweeps)
    M = preconditioner
    b = np.ascontiguousarray(system.rhs.reshape(M.shape3()))
    x, it, hist, rz = _kernels.pcg(M.WX, M.WY, M.WZ, M.DIAG, M.DINV, M.X, M.B, M.R, M.coarse_inv, M.flags, M.mode, M.sweeps, b, tol, max_iter)
    if hist[-1] >= tol and it > 0 or not np.all(np.isfinite(hist)):
        raise ConvergenceError(f"PCG did not reach relative residual {tol} in {max_iter} iterations (reached {hist[-1]:.3e})", hist)
    seconds = time.perf_counter() - t0
    return SolveReport(x.reshape(system.grid.shape), it, float(hist[-1]), hist, seconds, float(system.n * max(it, 1)), rz)


def direct_solve(system: StencilSystem) -> SolveReport:
    """Dense Cholesky solve, meant for small systems and as a test oracle."""
    t0 = time.perf_counter()
    A = system.matrix().toarray()
    b = system.rhs.ravel()
    x = scipy.linalg.cho_solve(scipy.linalg.cho_factor(A), b)
    nb = np.linalg.norm(b)
    res = np.linalg.norm(b - A @ x) / nb if nb else 0.0
    n = system.n
    return SolveReport(x.reshape(system.grid.shape), 1, float(res), np.array([1.0, res]), time.perf_counter() - t0, float(n))


def solve(system: StencilSystem, method=MULTIGRID, tol=1e-10, max_iter=500, sweeps=2) -> SolveReport:
    if method == "direct":
        return direct_solve(system)
    return pcg(system, method, tol, max_iter, sweeps)


def write_residuals(path, reports, labels=None):
    """CSV with columns ``label,iteration,relative_residual``."""
    labels = labels if labels is not None else range(len(reports))
    with open(path, "w") as fh:
        fh.write("label,iteration,relative_residual\n")
        for lab, rep in zip(labels, reports):
            for i, v in enumerate(rep.residual_history):
                fh.write(f"{lab},{i},{float(v)!r}\n")
