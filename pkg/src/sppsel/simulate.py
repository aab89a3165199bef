"""Point pattern and covariate generation, plus the four simulation scenarios.

Gaussian random fields use an exponential covariance with a nugget,
``C(h) = variance * exp(-h / scale) + nugget * 1{h = 0}``, sampled at cell
centers: dense Cholesky up to 64x64 cells, circulant embedding above that
(with negative eigenvalues clipped once they carry negligible mass).
The nugget is independent white noise and is always added separately.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg

from .core import (
    CovariateField,
    PointPattern,
    QuadratureGrid,
    RasterField,
    Region,
    UNIT_SQUARE,
    coord_x,
    coord_y,
    product_xy,
    square_x,
)
from .errors import ConfigurationError, GenerationError
from .likelihood import ModelSpec
from .mcmc import PriorSpec

__all__ = [
    "GrfSpec",
    "IntensitySpec",
    "PerCell",
    "Thinning",
    "Scenario",
    "simulate_grf",
    "simulate_nhpp",
    "scenario_preset",
    "expected_count",
    "CHOLESKY_MAX_CELLS",
]

CHOLESKY_MAX_CELLS = 64 * 64
_JITTER = 1e-10
# padding factors tried for the circulant embedding, per axis
_EMBED_FACTORS = (2, 3, 4, 6, 8, 12)
_CLIP_TOL = 1e-3


@dataclass(frozen=True)
class GrfSpec:
    mean: float = 0.0
    variance: float = 1.0
    scale: float = 1.0
    nugget: float = 0.0
    nx: int = 100
    ny: int = 100

    def __post_init__(self):
        if self.variance < 0 or self.nugget < 0:
            raise ConfigurationError("GRF variance and nugget must be >= 0")
        if not self.scale > 0:
            raise ConfigurationError("GRF scale must be > 0")
        if self.nx < 1 or self.ny < 1:
            raise ConfigurationError("GRF grid must be at least 1x1")


@dataclass(frozen=True)
class IntensitySpec:
    """Generating intensity ``lambda0 * exp(sum_j coef_j Z_j(s) + W(s))``.

    ``latent`` (optional) describes the unobserved field W; a fresh draw is
    made for every simulated pattern and never handed to fitting.
    """

    lambda0: float
    terms: tuple[tuple[CovariateField, float], ...] = ()
    latent: GrfSpec | None = None

    def __post_init__(self):
        if not self.lambda0 > 0:
            raise ConfigurationError("lambda0 must be positive")
        if not all(math.isfinite(c) for _, c in self.terms):
            raise ConfigurationError("intensity coefficients must be finite")

    def log_intensity(self, xy, latent: RasterField | None = None) -> np.ndarray:
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        out = np.full(len(xy), math.log(self.lambda0))
        for f, c in self.terms:
            out += c * f.evaluate(xy)
        if latent is not None:
            out += latent.evaluate(xy)
        return out


@dataclass(frozen=True)
class PerCell:
    nx: int = 100
    ny: int = 100


@dataclass(frozen=True)
class Thinning:
    probe: int = 200
    inflation: float = 1.2


def _exp_cov(h: np.ndarray, spec: GrfSpec) -> np.ndarray:
    return spec.variance * np.exp(-h / spec.scale)


def _grf_cholesky(spec: GrfSpec, region: Region, rng: np.random.Generator) -> np.ndarray:
    centers = QuadratureGrid(spec.nx, spec.ny, region).centers
    d = np.hypot(centers[:, None, 0] - centers[None, :, 0], centers[:, None, 1] - centers[None, :, 1])
    cov = _exp_cov(d, spec)
    cov[np.diag_indices_from(cov)] += _JITTER
    try:
        chol = linalg.cholesky(cov, lower=True)
    except linalg.LinAlgError:
        raise GenerationError(
            "covariance matrix is not positive definite after jitter; "
            "use circulant embedding for this grid"
        ) from None
    return chol @ rng.standard_normal(len(centers))


def _embedding_eigenvalues(spec: GrfSpec, dx: float, dy: float, mx: int, my: int) -> np.ndarray:
    ix = np.arange(mx)
    iy = np.arange(my)
    lx = np.minimum(ix, mx - ix) * dx
    ly = np.minimum(iy, my - iy) * dy
    h = np.hypot(ly[:, None], lx[None, :])
    return np.fft.fft2(_exp_cov(h, spec)).real


@functools.lru_cache(maxsize=8)
def _embedding_sqrt(spec: GrfSpec, dx: float, dy: float) -> np.ndarray:
    """Square-root spectrum of the smallest adequate circulant embedding.

    The exponential kernel in 2-d is not guaranteed to embed nonnegatively;
    the padding grows until the negative spectral mass (which bounds the
    covariance error once clipped) drops below ``_CLIP_TOL * variance``.
    """
    for factor in _EMBED_FACTORS:
        mx, my = factor * spec.nx, factor * spec.ny
        lam = _embedding_eigenvalues(spec, dx, dy, mx, my)
        if -lam[lam < 0].sum() / lam.size <= _CLIP_TOL * spec.variance:
            out = np.sqrt(np.clip(lam, 0.0, None) / lam.size)
            out.setflags(write=False)
            return out
    raise GenerationError(
        f"circulant embedding stays indefinite up to padding factor {_EMBED_FACTORS[-1]}"
    )


def _grf_circulant(spec: GrfSpec, region: Region, rng: np.random.Generator) -> np.ndarray:
    root = _embedding_sqrt(spec, region.width / spec.nx, region.height / spec.ny)
    noise = rng.standard_normal(root.shape) + 1j * rng.standard_normal(root.shape)
    draw = np.fft.fft2(root * noise)
    return draw.real[: spec.ny, : spec.nx].ravel()


def simulate_grf(spec: GrfSpec, region: Region = UNIT_SQUARE, seed: int = 0, name: str = "grf") -> RasterField:
    """One draw of the field at the cell centers of an nx-by-ny grid."""
    rng = np.random.default_rng(seed)
    n = spec.nx * spec.ny
    values = np.full(n, float(spec.mean))
    if spec.variance > 0:
        if n <= CHOLESKY_MAX_CELLS:
            values += _grf_cholesky(spec, region, rng)
        else:
            values += _grf_circulant(spec, region, rng)
    if spec.nugget > 0:
        values += math.sqrt(spec.nugget) * rng.standard_normal(n)
    return RasterField(spec.nx, spec.ny, region, values, name)


def _uniform_in_cells(grid: QuadratureGrid, counts: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    r = grid.region
    dx, dy = r.width / grid.nx, r.height / grid.ny
    cells = np.repeat(np.arange(grid.n_cells), counts)
    iy, ix = np.divmod(cells, grid.nx)
    x = r.xmin + (ix + rng.random(len(cells))) * dx
    y = r.ymin + (iy + rng.random(len(cells))) * dy
    return np.column_stack([np.minimum(x, r.xmax), np.minimum(y, r.ymax)])


def simulate_nhpp(
    spec: IntensitySpec,
    region: Region = UNIT_SQUARE,
    method: PerCell | Thinning = PerCell(),
    seed: int = 0,
) -> PointPattern:
    """Draw one realisation of the Poisson process.

    ``PerCell`` draws a Poisson count per cell with mean ``lambda(center) * |cell|``
    and scatters the points uniformly inside; ``Thinning`` draws a dominating
    homogeneous process and keeps points with probability ``lambda(s) / lambda_max``.
    """
    latent_seed, point_seed = np.random.SeedSequence(int(seed)).spawn(2)
    latent = None
    if spec.latent is not None:
        latent = simulate_grf(spec.latent, region, int(latent_seed.generate_state(1)[0]), "latent")
    rng = np.random.default_rng(point_seed)

    if isinstance(method, PerCell):
        grid = QuadratureGrid(method.nx, method.ny, region)
        with np.errstate(over="ignore"):
            mu = np.exp(spec.log_intensity(grid.centers, latent)) * grid.cell_area
        if not np.all(np.isfinite(mu)):
            raise GenerationError("intensity overflows on the generation grid")
        counts = rng.poisson(mu)
        return PointPattern(_uniform_in_cells(grid, counts, rng), region)

    if isinstance(method, Thinning):
        probe = QuadratureGrid(method.probe, method.probe, region)
        lam_max = float(np.exp(spec.log_intensity(probe.centers, latent).max())) * method.inflation
        if not math.isfinite(lam_max):
            raise GenerationError("intensity bound is not finite")
        n = rng.poisson(lam_max * region.area)
        xy = np.column_stack([
            region.xmin + rng.random(n) * region.width,
            region.ymin + rng.random(n) * region.height,
        ])
        lam = np.exp(spec.log_intensity(xy, latent))
        if np.any(lam > lam_max):
            raise GenerationError(
                f"intensity {lam.max():.6g} exceeds thinning bound {lam_max:.6g}; increase inflation"
            )
        keep = rng.random(n) < lam / lam_max
        return PointPattern(xy[keep], region)

    raise ConfigurationError(f"unknown simulation method {method!r}")


def expected_count(spec: IntensitySpec, grid: QuadratureGrid, latent: RasterField | None = None) -> float:
    """Midpoint-rule integral of the generating intensity (latent field fixed)."""
    with np.errstate(over="ignore"):
        lam = np.exp(spec.log_intensity(grid.centers, latent))
    return grid.region.area * float(np.mean(lam))


# ------------------------------------------------------------------ scenarios


@dataclass(frozen=True)
class Scenario:
    """A generating model together with everything needed to fit candidates."""

    id: int
    intensity: IntensitySpec
    fields: tuple[CovariateField, ...]
    candidates: tuple[ModelSpec, ...]
    true_model: ModelSpec
    prior: PriorSpec = field(default_factory=PriorSpec)
    grid: QuadratureGrid = field(default_factory=QuadratureGrid)
    method: PerCell | Thinning = field(default_factory=PerCell)

    @property
    def region(self) -> Region:
        return self.grid.region


_GRF_COVARIATE = GrfSpec(mean=1.0, variance=1.0, scale=1.0, nugget=0.2, nx=100, ny=100)
_GRF_LATENT = GrfSpec(mean=0.0, variance=1.0, scale=1.0, nugget=0.2, nx=100, ny=100)


def _models(p: int, rows: Sequence[tuple[str, tuple[int, ...]]]) -> tuple[ModelSpec, ...]:
    return tuple(ModelSpec(idx, p, label) for label, idx in rows)


def _scenario1() -> Scenario:
    fields = (coord_x("Z1"), coord_y("Z2"), product_xy("Z1Z2"))
    intensity = IntensitySpec(30.0, ((fields[0], 2.0), (fields[1], 0.0), (fields[2], 1.0)))
    cands = _models(3, [
        ("Model 1 (b1)", (1,)),
        ("Model 2 (b2)", (2,)),
        ("Model 3 (b3)", (3,)),
        ("Model 4 (b1,b2)", (1, 2)),
        ("DGM (b1,b3)", (1, 3)),
        ("Model 5 (b2,b3)", (2, 3)),
        ("Model 6 (b1,b2,b3)", (1, 2, 3)),
    ])
    return Scenario(1, intensity, fields, cands, cands[4])


def _scenario2() -> Scenario:
    fields = (square_x("Z1^2"), coord_x("Z1"), coord_y("Z2"))
    intensity = IntensitySpec(50.0, ((fields[0], 4.0),))
    cands = _models(3, [
        ("DGM", (1,)),
        ("Model 1", (2,)),
        ("Model 2", (3,)),
        ("Model 3", (2, 3)),
    ])
    return Scenario(2, intensity, fields, cands, cands[0])


def _scenario3(seed: int) -> Scenario:
    seeds = np.random.SeedSequence(int(seed)).spawn(4)
    fields = tuple(
        simulate_grf(_GRF_COVARIATE, UNIT_SQUARE, int(s.generate_state(1)[0]), f"Z{i + 1}")
        for i, s in enumerate(seeds)
    )
    intensity = IntensitySpec(1.0, ((fields[0], 2.0), (fields[1], 1.0)))
    rows = [
        ("Model 1 (b1)", (1,)),
        ("Model 2 (b2)", (2,)),
        ("Model 3 (b3)", (3,)),
        ("Model 4 (b4)", (4,)),
        ("DGM (b1,b2)", (1, 2)),
        ("Model 5 (b1,b3)", (1, 3)),
        ("Model 6 (b1,b4)", (1, 4)),
        ("Model 7 (b2,b3)", (2, 3)),
        ("Model 8 (b2,b4)", (2, 4)),
        ("Model 9 (b3,b4)", (3, 4)),
        ("Model 10 (b1,b2,b3)", (1, 2, 3)),
        ("Model 11 (b1,b2,b4)", (1, 2, 4)),
        ("Model 12 (b1,b3,b4)", (1, 3, 4)),
        ("Model 13 (b2,b3,b4)", (2, 3, 4)),
        ("Model 14 (b1,b2,b3,b4)", (1, 2, 3, 4)),
    ]
    cands = _models(4, rows)
    return Scenario(3, intensity, fields, cands, cands[4])


def _scenario4(seed: int) -> Scenario:
    rng = np.random.default_rng(seed)
    fields = tuple(
        RasterField(100, 100, UNIT_SQUARE, rng.random(100 * 100), f"Z{i + 1}") for i in range(3)
    )
    intensity = IntensitySpec(1.0, ((fields[0], 4.0), (fields[1], 4.0)), latent=_GRF_LATENT)
    cands = _models(3, [
        ("Model 1 (b1)", (1,)),
        ("Model 2 (b2)", (2,)),
        ("Model 3 (b3)", (3,)),
        ("DGM (b1,b2)", (1, 2)),
        ("Model 4 (b1,b3)", (1, 3)),
        ("Model 5 (b2,b3)", (2, 3)),
        ("Model 6 (b1,b2,b3)", (1, 2, 3)),
    ])
    return Scenario(4, intensity, fields, cands, cands[3])


def scenario_preset(scenario_id: int, covariate_seed: int = 0) -> Scenario:
    """Generating model, fitting covariates and candidate list of a scenario.

    Scenarios 3 and 4 draw their random covariates from ``covariate_seed``;
    scenarios 1 and 2 ignore it.
    """
    if scenario_id == 1:
        return _scenario1()
    if scenario_id == 2:
        return _scenario2()
    if scenario_id == 3:
        return _scenario3(covariate_seed)
    if scenario_id == 4:
        return _scenario4(covariate_seed)
    raise ConfigurationError(f"unknown scenario {scenario_id}; choose 1-4")
