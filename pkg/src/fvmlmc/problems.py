"""Model problems tying together sampling, assembly, solve and QoI.

A :class:`DarcyProblem` fixes the PDE data (source, boundary conditions,
quantity of interest), the permeability model and the grid hierarchy. Its
:meth:`DarcyProblem.sample_Y` computes one level difference
``Y_l = Q_l - Q_{l-1}`` from one random input.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import fields, rng
from .assembly import HARMONIC, BoundarySpec, assemble
from .fields import GaussianFieldSpec, PermeabilitySample, PiecewiseConstantSpec
from .grid import Grid, parity_offsets
from .qoi import LOCAL_AVERAGE, OUTFLOW, Box, QoISpec, default_box, evaluate
from .solver import MULTIGRID, solve

MODEL_PROBLEM_1 = "model_problem_1"
MODEL_PROBLEM_2 = "model_problem_2"

STANDARD = "standard"
CGV = "cgv"

#: layer specs of the piecewise correlated experiments: outer layers share one
#: law, the middle layer is more permeable and correlated over shorter range
LAYERED_CORRELATED_SPECS = (
    GaussianFieldSpec(0.0, 1.0, 0.3, 2),
    GaussianFieldSpec(4.0, 1.0, 0.1, 2),
    GaussianFieldSpec(0.0, 1.0, 0.3, 2),
)


@dataclass
class YSample:
    """One level difference and what it cost."""

    y: float
    q_fine: float
    q_coarse: float  # 0 on level 0
    work: float
    seconds: float
    solves: int
    iterations: int
    coarse_values: tuple = ()  # per-subsample coarse QoIs for CGV
    coarse_work: tuple = ()


@dataclass(frozen=True)
class DarcyProblem:
    d: int = 2
    problem: str = MODEL_PROBLEM_2
    model: str = fields.PIECEWISE_CONSTANT
    m0: int = 8
    s: int = 2
    piecewise: PiecewiseConstantSpec = field(default_factory=PiecewiseConstantSpec)
    layer_specs: tuple = LAYERED_CORRELATED_SPECS
    field_spec: GaussianFieldSpec = field(default_factory=lambda: GaussianFieldSpec(0.0, 1.0, 0.3, 1))
    box: Box | None = None
    averaging: str = HARMONIC
    solver: str = MULTIGRID
    tol: float = 1e-10
    max_iter: int = 500
    sweeps: int = 2

    def __post_init__(self):
        if self.problem not in (MODEL_PROBLEM_1, MODEL_PROBLEM_2):
            raise ValueError(f"unknown model problem {self.problem!r}")
        if self.model not in (fields.PIECEWISE_CONSTANT, fields.PIECEWISE_CORRELATED, fields.LOGNORMAL):
            raise ValueError(f"unknown permeability model {self.model!r}")
        if self.problem == MODEL_PROBLEM_1 and self.box is None:
            object.__setattr__(self, "box", default_box(self.d))
        if len(self.layer_specs) != 3:
            raise ValueError("three layer specs are needed")

    # -- PDE data ------------------------------------------------------------

    def grid(self, level: int) -> Grid:
        return Grid(self.d, self.m0 * self.s**level)

    @property
    def bc(self) -> BoundarySpec:
        if self.problem == MODEL_PROBLEM_1:
            return BoundarySpec.homogeneous_dirichlet(self.d)
        return BoundarySpec.pressure_drop(self.d)

    @property
    def source(self) -> float:
        return 1.0 if self.problem == MODEL_PROBLEM_1 else 0.0

    @property
    def qoi(self) -> QoISpec:
        if self.problem == MODEL_PROBLEM_1:
            return QoISpec(LOCAL_AVERAGE, box=self.box)
        return QoISpec(OUTFLOW, face=(0, 1))

    @property
    def stationary(self) -> bool:
        return self.model == fields.LOGNORMAL

    # -- permeability --------------------------------------------------------

    def sample_permeability(self, level: int, streams) -> PermeabilitySample:
        """Permeability on ``level`` from the generators of one sample."""
        return self.sample_on_grid(self.grid(level), streams, level)

    def sample_on_grid(self, grid: Grid, streams, level=0) -> PermeabilitySample:
        if self.model == fields.LOGNORMAL:
            return fields.sample_lognormal(grid, self.field_spec, streams(rng.PERMEABILITY), level)
        layers = fields.sample_layers(streams(rng.LAYERS))
        if self.model == fields.PIECEWISE_CONSTANT:
            return fields.sample_piecewise_constant(grid, layers, self.piecewise, streams(rng.PERMEABILITY), level)
        return fields.sample_piecewise_correlated(grid, layers, self.layer_specs, streams(rng.PERMEABILITY), level)

    def coarse_permeability(self, fine: PermeabilitySample) -> PermeabilitySample:
        """Coarse sample of the standard coupling."""
        if self.stationary:
            if self.s != 2:
                return fields.couple_coarse_nonstationary(fine, self.s)
            return fields.extract_coarse_subsample(fine, (0,) * self.d)
        return fields.couple_coarse_nonstationary(fine, self.s)

    # -- solves --------------------------------------------------------------

    def solve_qoi(self, k: PermeabilitySample):
        """Return ``(Q, report)`` for one permeability sample."""
        system = assemble(k.grid, k.values, self.bc, self.source, self.averaging)
        report = solve(system, self.solver, self.tol, self.max_iter, self.sweeps)
        return evaluate(self.qoi, report.x, k.values, k.grid, self.bc), report

    def sample_Y(self, level: int, streams, coupling: str = STANDARD) -> YSample:
        """One sample of ``Y_l``; on level 0 ``Y_0 = Q_0`` and no coarse solve
        is done.

        ``coupling="cgv"`` replaces the single coarse solve by the mean over
        the ``2**d`` parity subsamples of the fine permeability.
        """
        if coupling not in (STANDARD, CGV):
            raise ValueError(f"unknown coupling {coupling!r}")
        if coupling == CGV and level > 0:
            if not self.stationary:
                raise fields.StationarityError("CGV requires stationary permeability")
            if self.s != 2:
                raise ValueError("CGV needs refinement factor 2")
        t0 = time.perf_counter()
        fine = self.sample_permeability(level, streams)
        qf, rep = self.solve_qoi(fine)
        work = fine.work + rep.work
        iterations = rep.iterations
        solves = 1
        qc = 0.0
        coarse_values = coarse_work = ()
        if level > 0:
            if coupling == STANDARD:
                coarse = [self.coarse_permeability(fine)]
            else:
                coarse = [fields.extract_coarse_subsample(fine, o) for o in parity_offsets(self.d)]
            qs, ws = [], []
            for kc in coarse:
                q, rc = self.solve_qoi(kc)
                qs.append(q)
                ws.append(kc.work + rc.work)
                iterations += rc.iterations
                solves += 1
            work += sum(ws)
            coarse_values, coarse_work = tuple(qs), tuple(ws)
            qc = float(np.mean(qs))
        return YSample(qf - qc, qf, qc, work, time.perf_counter() - t0, solves, iterations, coarse_values, coarse_work)
