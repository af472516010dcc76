"""Uniform cell-centred grids on the unit cube and their nested hierarchies.

Multi-indices in the public functions are 1-based, ``(i_1, ..., i_d)`` with
``1 <= i_k <= m``. Arrays of cell values are stored 0-based with shape
``(m,) * d`` in C order, so the last coordinate varies fastest.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field

import numpy as np

#: default guard on the number of cells of the finest grid of a hierarchy
MAX_CELLS = 2**24


@dataclass(frozen=True)
class Grid:
    """Isotropic grid of ``m**d`` square cells covering ``(0, 1)**d``."""

    d: int
    m: int

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.d}")
        if self.m < 1:
            raise ValueError(f"cells per direction must be positive, got {self.m}")

    @property
    def h(self) -> float:
        return 1.0 / self.m

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.m,) * self.d

    @property
    def n_cells(self) -> int:
        return self.m**self.d

    def coordinates(self) -> np.ndarray:
        """1D array of cell-centre coordinates along one axis."""
        return (np.arange(self.m) + 0.5) * self.h

    def centres(self) -> np.ndarray:
        """Cell centres as a read-only array of shape ``(m,)*d + (d,)``."""
        return _centres(self.d, self.m)

    def centre(self, index) -> np.ndarray:
        """Centre of the cell with 1-based multi-index ``index``."""
        index = np.asarray(index, dtype=float)
        return (index - 0.5) * self.h

    def coarsen(self, s: int = 2) -> "Grid":
        if self.m % s:
            raise ValueError(f"m={self.m} is not divisible by {s}")
        return Grid(self.d, self.m // s)


@functools.lru_cache(maxsize=32)
def _centres(d, m):
    x = (np.arange(m) + 0.5) / m
    c = np.stack(np.meshgrid(*([x] * d), indexing="ij"), axis=-1)
    c.setflags(write=False)
    return c


@dataclass(frozen=True)
class GridHierarchy:
    """Grids ``m_l = m0 * s**l`` for ``l = 0..L``."""

    base: Grid
    s: int = 2
    L: int = 0
    grids: tuple[Grid, ...] = field(init=False, repr=False)

    def __post_init__(self):
        grids = tuple(Grid(self.base.d, self.base.m * self.s**l) for l in range(self.L + 1))
        object.__setattr__(self, "grids", grids)

    def __len__(self):
        return self.L + 1

    def __getitem__(self, level: int) -> Grid:
        return self.grids[level]

    def __iter__(self):
        return iter(self.grids)

    @property
    def d(self) -> int:
        return self.base.d

    def h(self, level: int) -> float:
        return self.grids[level].h


def build_hierarchy(d: int, m0: int, s: int = 2, L: int = 0, max_cells: int = MAX_CELLS) -> GridHierarchy:
    """Build the nested hierarchy of grids with ``h_l = h_{l-1} / s``.

    Raises ``ValueError`` for invalid arguments or if the finest grid would
    exceed ``max_cells`` cells.
    """
    if d not in (1, 2, 3):
        raise ValueError(f"dimension must be 1, 2 or 3, got {d}")
    if m0 < 2:
        raise ValueError(f"m0 must be at least 2, got {m0}")
    if s < 2:
        raise ValueError(f"refinement factor must be at least 2, got {s}")
    if L < 0:
        raise ValueError(f"finest level must be non-negative, got {L}")
    # integer arithmetic, no overflow in python ints
    finest = (m0 * s**L) ** d
    if finest > max_cells:
        raise ValueError(f"finest grid has {finest} cells, exceeding the budget of {max_cells}")
    return GridHierarchy(Grid(d, m0), s, L)


def parity_offsets(d: int) -> list[tuple[int, ...]]:
    """All ``2**d`` offsets in ``{0, 1}**d``, in lexicographic order."""
    if d not in (1, 2, 3):
        raise ValueError(f"dimension must be 1, 2 or 3, got {d}")
    return list(itertools.product((0, 1), repeat=d))


def _check_offset(offset, d):
    offset = tuple(int(o) for o in offset)
    if len(offset) != d or any(o not in (0, 1) for o in offset):
        raise ValueError(f"offset must be a {d}-tuple of 0/1, got {offset}")
    return offset


def subgrid_slices(offset, s: int = 2) -> tuple[slice, ...]:
    """0-based slices selecting the fine cells of one parity subgrid."""
    return tuple(slice(o, None, s) for o in offset)


def subgrid_index_map(fine: Grid, offset) -> np.ndarray:
    """Map coarse multi-indices to fine multi-indices of a parity subgrid.

    Returns an integer array of shape ``(m/2,)*d + (d,)`` whose entry at
    coarse position ``j`` (0-based storage of the 1-based index ``j + 1``) is
    the 1-based fine multi-index ``2*j_k - 1 + offset_k``.
    """
    if fine.m % 2:
        raise ValueError(f"parity subgrids need an even number of cells, got m={fine.m}")
    offset = _check_offset(offset, fine.d)
    coarse = np.arange(1, fine.m // 2 + 1)
    axes = np.meshgrid(*([coarse] * fine.d), indexing="ij")
    return np.stack([2 * a - 1 + o for a, o in zip(axes, offset)], axis=-1)
