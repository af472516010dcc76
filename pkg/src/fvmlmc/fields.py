"""Random permeability fields sampled at cell centres.

Three models are provided:

* piecewise constant log-normal values on three random layers,
* piecewise log-normal fields, one stationary Gaussian field per layer,
* a single stationary log-normal field on the whole domain.

Gaussian fields with exponential covariance are sampled exactly on the cell
centre lattice by circulant embedding. Each FFT yields two independent
fields (real and imaginary parts); :class:`GaussianFieldStream` hands them
out first-in first-out.
"""

from __future__ import annotations

import functools
import logging
from dataclasses import dataclass, field

import numpy as np

from .grid import Grid, subgrid_slices

logger = logging.getLogger(__name__)

PIECEWISE_CONSTANT = "piecewise_constant"
PIECEWISE_CORRELATED = "piecewise_correlated"
LOGNORMAL = "lognormal"

LAYER_RANGES = ((0.8, 0.9), (0.6, 0.7), (0.2, 0.3), (0.4, 0.5))


class EmbeddingError(ValueError):
    pass


class StationarityError(ValueError):
    pass


@dataclass(frozen=True)
class LayerSample:
    """Two straight interfaces: the upper one through ``(0, y1)`` and
    ``(1, y2)``, the lower one through ``(0, y3)`` and ``(1, y4)``."""

    y1: float
    y2: float
    y3: float
    y4: float

    def upper(self, x1):
        return self.y1 + (self.y2 - self.y1) * x1

    def lower(self, x1):
        return self.y3 + (self.y4 - self.y3) * x1

    def check(self):
        for y, (lo, hi) in zip((self.y1, self.y2, self.y3, self.y4), LAYER_RANGES):
            if not lo <= y <= hi:
                raise ValueError(f"interface ordinate {y} outside [{lo}, {hi}]")
        # both interfaces are affine, so comparing the endpoints suffices
        if not (self.y1 > self.y3 and self.y2 > self.y4):
            raise ValueError("upper interface must lie above the lower interface")
        return self


@dataclass(frozen=True)
class GaussianFieldSpec:
    """Stationary Gaussian field with covariance ``sigma2 * exp(-|x-y|_r / lam)``."""

    mu: float = 0.0
    sigma2: float = 1.0
    lam: float = 0.3
    norm_r: int = 2

    def __post_init__(self):
        if self.sigma2 < 0:
            raise ValueError(f"variance must be non-negative, got {self.sigma2}")
        if self.lam <= 0:
            raise ValueError(f"correlation length must be positive, got {self.lam}")
        if self.norm_r not in (1, 2):
            raise ValueError(f"covariance norm must be 1 or 2, got {self.norm_r}")

    def covariance(self, lag):
        """Covariance at separation vectors ``lag`` of shape ``(..., d)``."""
        lag = np.abs(np.asarray(lag, dtype=float))
        dist = lag.sum(axis=-1) if self.norm_r == 1 else np.sqrt((lag * lag).sum(axis=-1))
        return self.sigma2 * np.exp(-dist / self.lam)


@dataclass(frozen=True)
class PiecewiseConstantSpec:
    """Per-layer log-normal constants ``exp(N(mu_i, sigma2_i))``, layers 1..3."""

    mu: tuple = (0.0, 0.0, 0.0)
    sigma2: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if len(self.mu) != 3 or len(self.sigma2) != 3:
            raise ValueError("piecewise constant model needs three layers")
        if any(s < 0 for s in self.sigma2):
            raise ValueError("layer variances must be non-negative")


@dataclass(frozen=True)
class CirculantEmbedding:
    spec: GaussianFieldSpec
    grid: Grid
    extended_shape: tuple
    eigenvalues: np.ndarray = field(repr=False)

    @property
    def padding(self) -> int:
        return self.extended_shape[0] // self.grid.m

    @property
    def size(self) -> int:
        return int(np.prod(self.extended_shape))


@dataclass
class PermeabilitySample:
    """Permeability values at the cell centres of one level.

    Besides the values, the sample keeps the random inputs it was built from
    (layers, layer constants, Gaussian log-fields) so coarse samples can be
    derived from the same randomness.
    """

    level: int
    grid: Grid
    values: np.ndarray
    model: str
    layers: LayerSample | None = None
    z: np.ndarray | None = None
    log_fields: tuple | None = None
    work: float = 0.0

    @property
    def stationary(self) -> bool:
        return self.model == LOGNORMAL


# -- layers -------------------------------------------------------------------


def sample_layers(rng) -> LayerSample:
    lo = [r[0] for r in LAYER_RANGES]
    hi = [r[1] for r in LAYER_RANGES]
    y = rng.uniform(lo, hi)
    return LayerSample(*(float(v) for v in y)).check()


def classify_points(points, layers: LayerSample) -> np.ndarray:
    """Layer index (1 top, 2 middle, 3 bottom) for points of shape ``(..., d)``."""
    points = np.asarray(points, dtype=float)
    d = points.shape[-1]
    if d == 1:
        # 1D: x1 plays the role of the vertical coordinate
        x = points[..., 0]
        upper, lower = layers.y1, layers.y3
    else:
        x = points[..., 1]
        upper = layers.upper(points[..., 0])
        lower = layers.lower(points[..., 0])
    out = np.full(x.shape, 2, dtype=np.int8)
    out[x > upper] = 1
    out[x < lower] = 3
    return out


def classify_cell(x, layers: LayerSample) -> int:
    return int(classify_points(np.atleast_1d(np.asarray(x, dtype=float)), layers))


def layer_map(grid: Grid, layers: LayerSample) -> np.ndarray:
    return classify_points(grid.centres(), layers)


def sample_piecewise_constant(grid: Grid, layers: LayerSample, spec: PiecewiseConstantSpec, rng, level=0):
    z = np.asarray(spec.mu) + np.sqrt(np.asarray(spec.sigma2)) * rng.standard_normal(3)
    return piecewise_constant_values(grid, layers, z, level)


def piecewise_constant_values(grid, layers, z, level=0):
    values = np.exp(z)[layer_map(grid, layers) - 1]
    return PermeabilitySample(level, grid, values, PIECEWISE_CONSTANT, layers=layers, z=np.asarray(z), work=grid.n_cells)


# -- circulant embedding ------------------------------------------------------


def _periodic_covariance(spec: GaussianFieldSpec, grid: Grid, n: int) -> np.ndarray:
    idx = np.arange(n)
    lag = np.minimum(idx, n - idx) * grid.h
    lags = np.stack(np.meshgrid(*([lag] * grid.d), indexing="ij"), axis=-1)
    return spec.covariance(lags)


def _embed(spec, grid, padding, tol):
    n = padding * grid.m
    c = _periodic_covariance(spec, grid, n)
    lam = np.fft.fftn(c)
    scale = max(np.abs(lam).max(), 1e-300)
    if np.abs(lam.imag).max() > 1e-10 * scale:
        raise EmbeddingError("embedded covariance has a non-real spectrum")
    lam = lam.real
    top = lam.max()
    if top > 0 and lam.min() < -tol * top:
        return None
    neg = lam < 0
    if neg.any():
        logger.warning("clipping %d slightly negative circulant eigenvalues (min %.3e)", neg.sum(), lam.min())
        lam = np.where(neg, 0.0, lam)
    return CirculantEmbedding(spec, grid, (n,) * grid.d, lam)


def build_circulant_embedding(spec: GaussianFieldSpec, grid: Grid, padding=2, max_padding=8, tol=1e-8):
    """Spectrum of the covariance embedded in a periodic lattice of ``padding * m``
    points per direction; the padding is doubled until the spectrum is
    non-negative, up to ``max_padding``."""
    while padding <= max_padding:
        emb = _embed(spec, grid, padding, tol)
        if emb is not None:
            return emb
        padding *= 2
    raise EmbeddingError("embedding not non-negative definite; increase padding")


@functools.lru_cache(maxsize=64)
def cached_embedding(spec: GaussianFieldSpec, grid: Grid) -> CirculantEmbedding:
    return build_circulant_embedding(spec, grid)


def sample_gaussian_field(embedding: CirculantEmbedding, rng):
    """Two independent realisations of the Gaussian field at the cell centres."""
    shape = embedding.extended_shape
    xi = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    y = np.fft.fftn(np.sqrt(embedding.eigenvalues / embedding.size) * xi)
    window = tuple(slice(0, embedding.grid.m) for _ in shape)
    mu = embedding.spec.mu
    return y.real[window] + mu, y.imag[window] + mu


class GaussianFieldStream:
    """FIFO of fields drawn from one embedding and one generator."""

    def __init__(self, embedding: CirculantEmbedding, rng):
        self.embedding = embedding
        self.rng = rng
        self._buffer = []

    def next(self) -> np.ndarray:
        if not self._buffer:
            self._buffer.extend(sample_gaussian_field(self.embedding, self.rng))
        return self._buffer.pop(0)


def sample_lognormal(grid: Grid, spec: GaussianFieldSpec, rng, level=0, embedding=None):
    """Stationary log-normal field on the whole domain."""
    emb = embedding or cached_embedding(spec, grid)
    g = GaussianFieldStream(emb, rng).next()
    return PermeabilitySample(level, grid, np.exp(g), LOGNORMAL, log_fields=(g,), work=grid.n_cells)


def sample_piecewise_correlated(grid: Grid, layers: LayerSample, specs, rng, level=0):
    """One independent Gaussian field per layer; each cell takes the field of
    its own layer. Layers with equal specs share an embedding and a stream."""
    if len(specs) != 3:
        raise ValueError("piecewise correlated model needs three layer specs")
    streams = {}
    fields = []
    for spec in specs:
        if spec not in streams:
            streams[spec] = GaussianFieldStream(cached_embedding(spec, grid), rng)
        fields.append(streams[spec].next())
    return piecewise_correlated_values(grid, layers, tuple(fields), level, work=3 * grid.n_cells)


def piecewise_correlated_values(grid, layers, log_fields, level=0, work=0.0):
    labels = layer_map(grid, layers)
    g = np.choose(labels - 1, log_fields)
    return PermeabilitySample(level, grid, np.exp(g), PIECEWISE_CORRELATED, layers=layers, log_fields=log_fields, work=work)


# -- level coupling -----------------------------------------------------------


def extract_coarse_subsample(fine: PermeabilitySample, offset) -> PermeabilitySample:
    """Coarse sample made of the fine values on one parity subgrid.

    Valid only for stationary fields, where every subgrid has the law of a
    directly sampled coarse field.
    """
    if not fine.stationary:
        raise StationarityError("CGV requires stationary permeability")
    if fine.grid.m % 2:
        raise ValueError(f"parity subgrids need an even number of cells, got m={fine.grid.m}")
    offset = tuple(int(o) for o in offset)
    if len(offset) != fine.grid.d or any(o not in (0, 1) for o in offset):
        raise ValueError(f"offset must be a {fine.grid.d}-tuple of 0/1, got {offset}")
    sl = subgrid_slices(offset)
    log_fields = tuple(g[sl] for g in fine.log_fields) if fine.log_fields else None
    return PermeabilitySample(fine.level - 1, fine.grid.coarsen(2), fine.values[sl], fine.model, log_fields=log_fields)


def couple_coarse_nonstationary(fine: PermeabilitySample, s: int = 2) -> PermeabilitySample:
    """Coarse sample driven by the same random inputs as ``fine``.

    Piecewise constant: the same layers and constants evaluated at the coarse
    centres. Correlated models: each Gaussian log-field is restricted to the
    first child (offset zero) of every coarse cell, and the coarse cell takes
    the field of the layer containing its own centre.
    """
    coarse = fine.grid.coarsen(s)
    level = fine.level - 1
    if fine.model == PIECEWISE_CONSTANT:
        out = piecewise_constant_values(coarse, fine.layers, fine.z, level)
        out.work = 0.0
        return out
    sl = subgrid_slices((0,) * fine.grid.d, s)
    if fine.model == PIECEWISE_CORRELATED:
        return piecewise_correlated_values(coarse, fine.layers, tuple(g[sl] for g in fine.log_fields), level)
    g = fine.log_fields[0][sl]
    return PermeabilitySample(level, coarse, np.exp(g), fine.model, log_fields=(g,))


def restrict_to_level(fine: PermeabilitySample, target_m: int) -> PermeabilitySample:
    """Repeated offset-zero coupling down to a grid with ``target_m`` cells."""
    if fine.grid.m % target_m:
        raise ValueError(f"{target_m} does not divide {fine.grid.m}")
    ratio = fine.grid.m // target_m
    if ratio == 1:
        return fine
    level = fine.level - int(round(np.log2(ratio)))
    coarse = Grid(fine.grid.d, target_m)
    if fine.model == PIECEWISE_CONSTANT:
        out = piecewise_constant_values(coarse, fine.layers, fine.z, level)
        out.work = 0.0
        return out
    sl = subgrid_slices((0,) * fine.grid.d, ratio)
    logs = tuple(g[sl] for g in fine.log_fields)
    if fine.model == PIECEWISE_CORRELATED:
        return piecewise_correlated_values(coarse, fine.layers, logs, level)
    return PermeabilitySample(level, coarse, np.exp(logs[0]), fine.model, log_fields=logs)


def dump_field(path, values: np.ndarray):
    """Write a lattice of cell values. ``.csv`` gives one row per cell
    (1-based multi-index then value); anything else is raw little-endian
    float64 in C order (last coordinate fastest)."""
    values = np.asarray(values, dtype="<f8")
    path = str(path)
    if path.endswith(".csv"):
        idx = np.indices(values.shape).reshape(values.ndim, -1).T + 1
        cols = [f"i{k + 1}" for k in range(values.ndim)] + ["value"]
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for row, v in zip(idx, values.ravel()):
                fh.write(",".join(str(i) for i in row) + f",{float(v)!r}\n")
    else:
        values.tofile(path)
