"""Quantities of interest computed from finite volume solutions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import BoundarySpec, Dirichlet, boundary_slab, face_midpoints
from .grid import Grid

LOCAL_AVERAGE = "local_average"
OUTFLOW = "outflow"


@dataclass(frozen=True)
class Box:
    """Axis-aligned cube of side ``side`` centred at ``centre``."""

    centre: tuple
    side: float

    def bounds(self):
        c = np.asarray(self.centre, dtype=float)
        return c - self.side / 2, c + self.side / 2


@dataclass(frozen=True)
class QoISpec:
    kind: str = OUTFLOW
    box: Box | None = None
    face: tuple = (0, 1)  # (axis, side) of the outflow face

    def __post_init__(self):
        if self.kind not in (LOCAL_AVERAGE, OUTFLOW):
            raise ValueError(f"unknown quantity of interest {self.kind!r}")
        if self.kind == LOCAL_AVERAGE:
            if self.box is None:
                raise ValueError("local average needs a box")
            lo, hi = self.box.bounds()
            if np.any(lo < 0) or np.any(hi > 1) or self.box.side <= 0:
                raise ValueError("averaging box must lie inside the unit cube")


def default_box(d, side=0.25) -> Box:
    return Box((0.5,) * d, side)


def box_slices(grid: Grid, box: Box) -> tuple:
    """Index slices of the cells covering ``box``; the box faces must lie on
    grid lines."""
    lo, hi = box.bounds()
    if len(lo) != grid.d:
        raise ValueError("box dimension does not match the grid")
    a, b = lo * grid.m, hi * grid.m
    ia, ib = np.rint(a).astype(int), np.rint(b).astype(int)
    if not (np.allclose(a, ia, rtol=0, atol=1e-9) and np.allclose(b, ib, rtol=0, atol=1e-9)) or np.any(ib <= ia):
        raise ValueError(f"box {box} is not resolvable on a grid with m={grid.m}")
    return tuple(slice(i, j) for i, j in zip(ia, ib))


def local_average(solution, grid: Grid, box: Box) -> float:
    """Mean of the cell values inside ``box`` (midpoint rule for the box integral)."""
    u = np.asarray(solution).reshape(grid.shape)
    return float(np.mean(u[box_slices(grid, box)]))


def face_flux(solution, k, grid: Grid, bc: BoundarySpec, face=(0, 1)) -> float:
    """Outward flux through a Dirichlet face, using the same half-cell
    one-sided difference as the assembly."""
    axis, side = face
    cond = bc[face]
    if not isinstance(cond, Dirichlet):
        raise ValueError(f"face {face} is a Neumann face; its flux is prescribed data")
    u = np.asarray(solution).reshape(grid.shape)
    kv = np.asarray(getattr(k, "values", k)).reshape(grid.shape)
    slab = boundary_slab(grid, axis, side)
    g = cond(face_midpoints(grid, axis, side))
    t = 2.0 * kv[slab] * grid.h ** (grid.d - 2)
    return float(np.sum(t * (u[slab] - g)))


def outflow(solution, k, grid: Grid, bc: BoundarySpec, face=(0, 1)) -> float:
    return face_flux(solution, k, grid, bc, face)


def inflow(solution, k, grid: Grid, bc: BoundarySpec, face=(0, 0)) -> float:
    return -face_flux(solution, k, grid, bc, face)


def evaluate(spec: QoISpec, solution, k, grid: Grid, bc: BoundarySpec) -> float:
    if spec.kind == LOCAL_AVERAGE:
        return local_average(solution, grid, spec.box)
    return outflow(solution, k, grid, bc, spec.face)
