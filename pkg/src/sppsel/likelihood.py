"""Log-linear intensity, its integral over the window, and the NHPP log-likelihood.

The intensity is ``lambda(s) = lambda0 * exp(beta . Z(s))`` over the covariates
a model activates.  The integral over the window uses the midpoint rule on a
:class:`~sppsel.core.QuadratureGrid`, written as ``area * mean(lambda(c_i))``
so that a constant intensity integrates exactly for every grid size.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import CovariateField, PointPattern, QuadratureGrid, design_matrix
from .errors import ConfigurationError, NumericError

__all__ = [
    "ModelSpec",
    "Theta",
    "log_intensity",
    "integrated_intensity",
    "log_likelihood",
    "active_design",
    "check_shared_region",
]


@dataclass(frozen=True)
class ModelSpec:
    """Which covariates (1-based positions in the full list) a model uses.

    An empty ``indices`` tuple is the homogeneous model.  ``lambda0`` is
    always part of the model.
    """

    indices: tuple[int, ...]
    p: int
    label: str = ""

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if len(set(idx)) != len(idx):
            raise ConfigurationError(f"duplicate covariate indices {idx}")
        if any(i < 1 or i > self.p for i in idx):
            raise ConfigurationError(f"covariate indices {idx} out of range 1..{self.p}")
        object.__setattr__(self, "indices", tuple(sorted(idx)))
        if not self.label:
            object.__setattr__(self, "label", self.default_label())

    @classmethod
    def homogeneous(cls, p: int = 0, label: str = "") -> "ModelSpec":
        return cls((), p, label or "homogeneous")

    def default_label(self) -> str:
        if not self.indices:
            return "homogeneous"
        return "(" + ",".join(f"beta{i}" for i in self.indices) + ")"

    @property
    def dim(self) -> int:
        return len(self.indices)

    @property
    def columns(self) -> list[int]:
        """0-based column positions in the full design matrix."""
        return [i - 1 for i in self.indices]

    def select(self, fields: Sequence[CovariateField]) -> list[CovariateField]:
        if len(fields) != self.p:
            raise ConfigurationError(
                f"model expects {self.p} covariates, {len(fields)} supplied"
            )
        return [fields[c] for c in self.columns]


@dataclass(frozen=True)
class Theta:
    lambda0: float
    beta: tuple[float, ...] = ()

    def __post_init__(self):
        beta = tuple(float(b) for b in np.atleast_1d(np.asarray(self.beta, dtype=float)))
        if not (self.lambda0 > 0 and math.isfinite(self.lambda0)):
            raise ConfigurationError(f"lambda0 must be positive and finite, got {self.lambda0}")
        if not all(math.isfinite(b) for b in beta):
            raise ConfigurationError(f"beta must be finite, got {beta}")
        object.__setattr__(self, "lambda0", float(self.lambda0))
        object.__setattr__(self, "beta", beta)

    def as_array(self) -> np.ndarray:
        return np.array((self.lambda0,) + self.beta)


def _check_dim(theta: Theta, spec: ModelSpec) -> None:
    if len(theta.beta) != spec.dim:
        raise ConfigurationError(
            f"theta has {len(theta.beta)} coefficients but model {spec.label} has {spec.dim}"
        )


def active_design(spec: ModelSpec, fields: Sequence[CovariateField], xy) -> np.ndarray:
    """Design matrix restricted to the model's covariates."""
    return design_matrix(spec.select(fields), xy)


def check_shared_region(pattern: PointPattern, grid: QuadratureGrid) -> None:
    if not pattern.region.matches(grid.region):
        raise ConfigurationError(
            f"pattern region {pattern.region.as_tuple()} and quadrature region "
            f"{grid.region.as_tuple()} differ"
        )


def log_intensity(theta: Theta, spec: ModelSpec, fields: Sequence[CovariateField], s) -> np.ndarray | float:
    """``log lambda0 + beta . Z(s)``; scalar for one location, array for many."""
    _check_dim(theta, spec)
    xy = np.asarray(s, dtype=float)
    single = xy.ndim == 1
    z = active_design(spec, fields, xy)
    out = math.log(theta.lambda0) + z @ np.asarray(theta.beta)
    return float(out[0]) if single else out


def _cell_intensity(theta: Theta, z_cells: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        return theta.lambda0 * np.exp(z_cells @ np.asarray(theta.beta))


def _integral_from_design(theta: Theta, z_cells: np.ndarray, area: float) -> float:
    lam = _cell_intensity(theta, z_cells)
    total = area * float(np.mean(lam))
    if not math.isfinite(total):
        raise NumericError(f"integrated intensity overflowed at theta={theta}")
    return total


def integrated_intensity(
    theta: Theta, spec: ModelSpec, fields: Sequence[CovariateField], grid: QuadratureGrid
) -> float:
    """Midpoint-rule integral of the intensity over the grid's region."""
    _check_dim(theta, spec)
    z = active_design(spec, fields, grid.centers)
    return _integral_from_design(theta, z, grid.region.area)


def _event_log_intensity(theta: Theta, z_events: np.ndarray) -> np.ndarray:
    eta = math.log(theta.lambda0) + z_events @ np.asarray(theta.beta)
    with np.errstate(over="ignore", under="ignore"):
        vanished = ~(np.exp(eta) > 0) | ~np.isfinite(eta)
    if np.any(vanished):
        j = int(np.flatnonzero(vanished)[0])
        raise NumericError(f"intensity underflows to zero at event {j} (log intensity {eta[j]})")
    return eta


def log_likelihood(
    theta: Theta,
    spec: ModelSpec,
    fields: Sequence[CovariateField],
    pattern: PointPattern,
    grid: QuadratureGrid,
) -> float:
    """Sum of log-intensities at the events minus the integrated intensity."""
    _check_dim(theta, spec)
    check_shared_region(pattern, grid)
    z_ev = active_design(spec, fields, pattern.points)
    z_cells = active_design(spec, fields, grid.centers)
    event_sum = float(np.sum(_event_log_intensity(theta, z_ev)))
    return event_sum - _integral_from_design(theta, z_cells, grid.region.area)

