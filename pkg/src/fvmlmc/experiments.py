"""Experiment drivers behind the command line: convergence studies, the CGV
variance comparison, the solver benchmark and MLMC/MC runs.

Each driver returns a :class:`Table` of rows plus a summary dictionary; the
column names map onto the axes of the corresponding plots (``h`` or
``DOF`` on the abscissa, errors, variances or times on the ordinate).
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import fields, rng
from .assembly import assemble
from .estimators import MLMCConfig, Sampler, fit_rate, fit_rate_reference, mc_run, mlmc_run
from .grid import Grid, parity_offsets
from .problems import CGV, STANDARD, DarcyProblem
from .solver import solve

logger = logging.getLogger(__name__)


@dataclass
class Table:
    columns: tuple
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    residuals: list = field(default_factory=list)  # (label, SolveReport)
    results: dict = field(default_factory=dict)

    def column(self, name) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([r[i] for r in self.rows], dtype=float)

    def write_csv(self, path, header: dict | None = None):
        with open(path, "w") as fh:
            for k, v in (header or {}).items():
                fh.write(f"# {k}: {v}\n")
            fh.write(",".join(self.columns) + "\n")
            for row in self.rows:
                fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v):
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ""
    return str(v)


def _se(x):
    return float(np.std(x, ddof=1) / np.sqrt(len(x))) if len(x) > 1 else math.nan


# -- convergence --------------------------------------------------------------


def _convergence_batch(problem, levels, ref, seed, indices):
    """QoIs on every study level and on the reference level from one random input each."""
    grids = [problem.grid(l) for l in levels]
    out = []
    for i in indices:
        fine = problem.sample_permeability(ref, rng.SampleStreams(seed, rng.CONVERGENCE, ref, i))
        qs = [problem.solve_qoi(fields.restrict_to_level(fine, g.m))[0] for g in grids]
        qs.append(problem.solve_qoi(fine)[0])
        out.append(qs)
    return out


def run_convergence_study(problem: DarcyProblem, L: int, reference_level: int, samples: int, seed=0, threads=1) -> Table:
    """Monte Carlo estimates of ``|E[Q_ref - Q_h]|`` and ``V[Q_h - Q_2h]``.

    ``alpha`` fits ``|E[Q_ref - Q_h]| = C (h**alpha - h_ref**alpha)``, which
    accounts for the error of the reference itself; ``alpha_loglog`` is the
    plain log-log slope.

    All levels of one sample are computed from the permeability drawn on the
    reference grid, restricted to the coarser grids by the standard coupling.
    """
    if reference_level <= L:
        raise ValueError("reference level must be finer than every study level")
    levels = list(range(L + 1))
    with Sampler(threads) as sampler:
        Q = np.array(sampler.run(_convergence_batch, (problem, levels, reference_level, seed), 0, samples))
    q_ref = Q[:, -1]
    table = Table(("level", "m", "h", "N", "mean_Q", "error", "error_se", "mean_Y", "var_Y", "var_Y_se"))
    for l in levels:
        err = q_ref - Q[:, l]
        if l > 0:
            y = Q[:, l] - Q[:, l - 1]
            var_y = float(np.var(y, ddof=1))
            # standard error of a sample variance, from the fourth central moment
            c = y - y.mean()
            var_se = float(np.sqrt(max(np.mean(c**4) - var_y**2, 0.0) / samples))
            mean_y = float(y.mean())
        else:
            var_y = var_se = mean_y = math.nan
        m = problem.grid(l).m
        table.rows.append((l, m, 1.0 / m, samples, float(Q[:, l].mean()), float(err.mean()), _se(err), mean_y, var_y, var_se))
    h = table.column("h")
    h_ref = 1.0 / problem.grid(reference_level).m
    alpha, c_alpha = fit_rate_reference(h, table.column("error"), h_ref)
    alpha_loglog, _ = fit_rate(h, table.column("error"))
    beta, c_beta = fit_rate(h[1:], table.column("var_Y")[1:]) if L >= 2 else (math.nan, math.nan)
    table.summary = {
        "alpha": alpha,
        "C_alpha": c_alpha,
        "alpha_loglog": alpha_loglog,
        "beta": beta,
        "C_beta": c_beta,
        "reference_m": problem.grid(reference_level).m,
        "mean_Q_reference": float(q_ref.mean()),
        "samples": samples,
    }
    return table


# -- CGV comparison -----------------------------------------------------------


def _cgv_batch(problem, level, seed, indices):
    out = []
    for i in indices:
        ys = problem.sample_Y(level, rng.SampleStreams(seed, rng.CGV_COMPARE, level, i), CGV)
        # the standard sample is the fine solve plus the parity-zero coarse solve
        work_fine = ys.work - sum(ys.coarse_work)
        out.append((ys.q_fine, *ys.coarse_values, work_fine, work_fine + ys.coarse_work[0], ys.work))
    return out


def run_cgv_comparison(problem: DarcyProblem, levels, samples: int, seed=0, threads=1) -> Table:
    """``V[Y_l]`` with the standard and the CGV coupling on the same samples.

    The standard coupling uses the parity-zero subsample, which is one of the
    ``2**d`` CGV subsamples, so both estimators see identical fine solves.
    """
    if not problem.stationary:
        raise fields.StationarityError("CGV requires stationary permeability")
    table = Table(("level", "m", "h", "N", "var_Y_standard", "var_Y_cgv", "reduction", "work_fine", "work_standard", "work_cgv", "work_ratio"))
    n_sub = 2**problem.d
    per_level = {}
    with Sampler(threads) as sampler:
        for l in levels:
            if l < 1:
                raise ValueError("CGV compares level differences, so levels start at 1")
            R = np.array(sampler.run(_cgv_batch, (problem, l, seed), 0, samples))
            qf, qc = R[:, 0], R[:, 1 : 1 + n_sub]
            work_fine, work_std, work_cgv = R[:, -3], R[:, -2], R[:, -1]
            v_std = float(np.var(qf - qc[:, 0], ddof=1))
            v_cgv = float(np.var(qf - qc.mean(axis=1), ddof=1))
            fine_grid, coarse_grid = problem.grid(l), problem.grid(l - 1)
            w_fine, w_cgv = float(np.mean(work_fine)), float(np.mean(work_cgv))
            reduction = v_std / v_cgv if v_cgv > 0 else None
            table.rows.append(
                (l, fine_grid.m, 1.0 / fine_grid.m, samples, v_std, v_cgv, reduction if reduction is not None else math.nan, w_fine, float(np.mean(work_std)), w_cgv, w_cgv / w_fine)
            )
            per_level[l] = {
                "reduction": reduction,
                "mean_Q_subsample": qc.mean(axis=0).tolist(),
                "se_Q_subsample": [_se(qc[:, j]) for j in range(n_sub)],
                "coarse_m": coarse_grid.m,
                "mean_Q_cgv_coarse": float(qc.mean(axis=1).mean()),
                "se_Q_cgv_coarse": _se(qc.mean(axis=1)),
            }
    table.summary = {"levels": per_level, "samples": samples}
    return table


# -- solver benchmark ---------------------------------------------------------


def _bench_batch(problem, m, seed, indices):
    grid = Grid(problem.d, m)
    out = []
    for i in indices:
        k = problem.sample_on_grid(grid, rng.SampleStreams(seed, rng.SOLVER_BENCH, m, i))
        system = assemble(grid, k.values, problem.bc, problem.source, problem.averaging)
        rep = solve(system, problem.solver, problem.tol, problem.max_iter, problem.sweeps)
        out.append(rep)
    return out


def run_solver_bench(problem: DarcyProblem, sizes, systems: int, seed=0, threads=1) -> Table:
    """Mean solve time and iteration count per grid size over random systems."""
    table = Table(("m", "DOF", "systems", "mean_iterations", "max_iterations", "mean_seconds", "seconds_per_dof", "work_per_dof", "max_relative_residual"))
    with Sampler(threads) as sampler:
        for m in sizes:
            reports = sampler.run(_bench_batch, (problem, m, seed), 0, systems)
            n = m**problem.d
            its = np.array([r.iterations for r in reports])
            secs = np.array([r.seconds for r in reports])
            work = np.array([r.work for r in reports])
            table.rows.append((m, n, systems, float(its.mean()), int(its.max()), float(secs.mean()), float(secs.mean() / n), float(work.mean() / n), float(max(r.relative_residual for r in reports))))
            table.residuals.append((f"m{m}", reports[0]))
    wpd = table.column("work_per_dof")
    table.summary = {"work_per_dof_spread": float(wpd.max() / wpd.min()), "time_per_dof_spread": float(table.column("seconds_per_dof").max() / table.column("seconds_per_dof").min())}
    return table


# -- MLMC ---------------------------------------------------------------------


def fit_cost_exponent(eps, costs) -> float:
    """Slope of ``log cost`` against ``log(1/eps)``."""
    x = np.log(1.0 / np.asarray(eps, dtype=float))
    y = np.log(np.asarray(costs, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def run_mlmc(problem: DarcyProblem, eps_list, coupling=STANDARD, config: MLMCConfig | None = None, compare_mc=False) -> Table:
    """MLMC (or CGV-MLMC) for each ``eps``; optionally plain MC on the same
    finest level for a head-to-head cost comparison."""
    cfg = config or MLMCConfig()
    table = Table(("eps", "level", "m", "h", "N", "mean_Y", "var_Y", "cost_work", "cost_seconds"))
    runs, mcs = [], []
    with Sampler(cfg.threads) as sampler:
        for eps in eps_list:
            t0 = time.perf_counter()
            res = mlmc_run(problem, eps, coupling, cfg, sampler)
            logger.info("eps=%g: L=%d, estimate %.6g, cost %.4g (%.1fs)", eps, res.L, res.estimate, res.total_cost, time.perf_counter() - t0)
            runs.append(res)
            for s in res.levels:
                table.rows.append((eps, s.level, s.m, 1.0 / s.m, s.n, s.mean, s.variance, s.cost, s.seconds))
            if compare_mc:
                mc = mc_run(problem, eps, res.L, cfg.warmup, cfg.seed, sampler=sampler)
                logger.info("eps=%g: MC with N=%d on L=%d, cost %.4g", eps, mc.n, mc.level, mc.total_cost)
                mcs.append(mc)
    summary = {"runs": [r.to_dict() for r in runs]}
    if len(runs) >= 2:
        summary["mlmc_cost_exponent"] = fit_cost_exponent(eps_list, [r.total_cost for r in runs])
    if mcs:
        summary["mc"] = [m.to_dict() for m in mcs]
        if len(mcs) >= 2:
            summary["mc_cost_exponent"] = fit_cost_exponent(eps_list, [m.total_cost for m in mcs])
    table.summary = summary
    table.results = {"mlmc": runs, "mc": mcs}
    return table
