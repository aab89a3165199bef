"""DIC and LPML for fitted Poisson process regressions.

``lpml`` is the Monte Carlo estimate

    sum_j log harmonic_mean_b lambda(s_j | theta_b)  -  integral of mean_b lambda(u | theta_b)

where the integral uses the same midpoint grid as the likelihood.
``lpml_partition_oracle`` computes the count-based CPO over a finite partition
(with a unit-rate Poisson reference model); as the partition is refined it
should approach ``lpml``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .core import CovariateField, PointPattern, QuadratureGrid, count_in_cells
from .errors import ConfigurationError, NumericError
from .likelihood import ModelSpec, Theta, active_design, check_shared_region, log_likelihood
from .mcmc import Chain

__all__ = [
    "DicResult",
    "LpmlResult",
    "deviance",
    "dic",
    "lpml",
    "lpml_partition_oracle",
    "per_sample_log_likelihood",
    "posterior_mean_surface",
    "score",
]

# cap on cells x samples held in memory at once
_CHUNK_ELEMENTS = 2_000_000


@dataclass(frozen=True)
class DicResult:
    dic: float
    p_d: float
    dev_at_mean: float
    mean_dev: float

    def as_dict(self) -> dict:
        return {"dic": self.dic, "p_d": self.p_d, "dev_at_mean": self.dev_at_mean, "mean_dev": self.mean_dev}


@dataclass(frozen=True, eq=False)
class LpmlResult:
    lpml: float
    event_terms: np.ndarray
    integral_term: float

    def as_dict(self) -> dict:
        return {"lpml": self.lpml, "integral_term": self.integral_term}


def _check_chain(chain: Chain, spec: ModelSpec, minimum: int) -> None:
    if chain.n_kept < minimum:
        raise ConfigurationError(f"criterion needs at least {minimum} samples, chain has {chain.n_kept}")
    if chain.beta.shape[1] != spec.dim:
        raise ConfigurationError(
            f"chain has {chain.beta.shape[1]} coefficients, model {spec.label} has {spec.dim}"
        )


def _chunks(n_rows: int, n_cols: int):
    step = max(1, _CHUNK_ELEMENTS // max(n_rows, 1))
    for start in range(0, n_cols, step):
        yield slice(start, min(start + step, n_cols))


def _event_log_intensities(chain: Chain, z_ev: np.ndarray, cols: slice) -> np.ndarray:
    """log lambda(s_j | theta_b) for events j (rows) and samples b in ``cols``."""
    return np.log(chain.lambda0[cols])[None, :] + z_ev @ chain.beta[cols].T


def _raise_on_vanishing(logs: np.ndarray, offset: int) -> None:
    with np.errstate(under="ignore", over="ignore"):
        bad = ~(np.exp(logs) > 0) | ~np.isfinite(logs)
    if np.any(bad):
        j, b = (int(v) for v in np.argwhere(bad)[0])
        raise NumericError(f"intensity vanishes at event {j} for sample {b + offset}")


def _sample_integrals(chain: Chain, z_cells: np.ndarray, grid: QuadratureGrid) -> np.ndarray:
    """Midpoint-rule integral of the intensity for every posterior sample.

    Identical cell rows are merged with summed weights before exponentiating.
    """
    if z_cells.shape[1] == 0:
        rows, weights = np.empty((1, 0)), np.array([grid.region.area])
    else:
        rows, counts = np.unique(z_cells, axis=0, return_counts=True)
        weights = counts * (grid.region.area / len(z_cells))
    out = np.empty(chain.n_kept)
    for cols in _chunks(len(rows), chain.n_kept):
        with np.errstate(over="ignore"):
            e = np.exp(rows @ chain.beta[cols].T)
        out[cols] = chain.lambda0[cols] * (weights @ e)
    if not np.all(np.isfinite(out)):
        raise NumericError("integrated intensity overflowed for some posterior sample")
    return out


def posterior_mean_surface(
    chain: Chain, spec: ModelSpec, fields: Sequence[CovariateField], grid: QuadratureGrid
) -> np.ndarray:
    """``mean_b lambda(c_i | theta_b)`` at every cell center, row-major."""
    _check_chain(chain, spec, 1)
    z_cells = active_design(spec, fields, grid.centers)
    surface = np.zeros(len(z_cells))
    for cols in _chunks(len(z_cells), chain.n_kept):
        with np.errstate(over="ignore"):
            surface += np.exp(z_cells @ chain.beta[cols].T) @ chain.lambda0[cols]
    return surface / chain.n_kept


def per_sample_log_likelihood(
    chain: Chain,
    spec: ModelSpec,
    fields: Sequence[CovariateField],
    pattern: PointPattern,
    grid: QuadratureGrid,
) -> np.ndarray:
    """Log-likelihood at every sample of the chain."""
    check_shared_region(pattern, grid)
    _check_chain(chain, spec, 1)
    z_ev = active_design(spec, fields, pattern.points)
    integrals = _sample_integrals(chain, active_design(spec, fields, grid.centers), grid)
    return _event_sums(chain, z_ev) - integrals


def _event_sums(chain: Chain, z_ev: np.ndarray) -> np.ndarray:
    out = np.empty(chain.n_kept)
    for cols in _chunks(max(len(z_ev), 1), chain.n_kept):
        logs = _event_log_intensities(chain, z_ev, cols)
        _raise_on_vanishing(logs, cols.start)
        out[cols] = logs.sum(axis=0)
    return out


def _harmonic_event_terms(chain: Chain, z_ev: np.ndarray) -> np.ndarray:
    """log of the posterior harmonic-mean intensity at each event."""
    k = len(z_ev)
    if k == 0:
        return np.zeros(0)
    acc = np.full(k, -np.inf)
    for cols in _chunks(k, chain.n_kept):
        logs = _event_log_intensities(chain, z_ev, cols)
        _raise_on_vanishing(logs, cols.start)
        acc = np.logaddexp(acc, logsumexp(-logs, axis=1))
    return math.log(chain.n_kept) - acc


def deviance(
    theta: Theta,
    spec: ModelSpec,
    fields: Sequence[CovariateField],
    pattern: PointPattern,
    grid: QuadratureGrid,
) -> float:
    return -2.0 * log_likelihood(theta, spec, fields, pattern, grid)


def dic(
    chain: Chain,
    spec: ModelSpec,
    fields: Sequence[CovariateField],
    pattern: PointPattern,
    grid: QuadratureGrid,
) -> DicResult:
    """DIC with the plug-in deviance at the componentwise posterior mean.

    ``lambda0`` is averaged on its natural scale.
    """
    _check_chain(chain, spec, 2)
    loglik = per_sample_log_likelihood(chain, spec, fields, pattern, grid)
    return _dic_result(loglik, deviance(chain.posterior_mean(), spec, fields, pattern, grid))


def _dic_result(loglik: np.ndarray, dev_at_mean: float) -> DicResult:
    mean_dev = float(np.mean(-2.0 * loglik))
    p_d = mean_dev - dev_at_mean
    return DicResult(dic=mean_dev + p_d, p_d=p_d, dev_at_mean=dev_at_mean, mean_dev=mean_dev)


def lpml(
    chain: Chain,
    spec: ModelSpec,
    fields: Sequence[CovariateField],
    pattern: PointPattern,
    grid: QuadratureGrid,
) -> LpmlResult:
    """Monte Carlo LPML: harmonic-mean event terms minus the mean-surface integral.

    The integral of the posterior-mean surface is taken as the average of the
    per-sample midpoint integrals, which is the same sum reordered.
    """
    check_shared_region(pattern, grid)
    _check_chain(chain, spec, 1)
    terms = _harmonic_event_terms(chain, active_design(spec, fields, pattern.points))
    integrals = _sample_integrals(chain, active_design(spec, fields, grid.centers), grid)
    return _lpml_result(terms, integrals)


def _lpml_result(terms: np.ndarray, integrals: np.ndarray) -> LpmlResult:
    integral = float(np.mean(integrals))
    return LpmlResult(lpml=float(np.sum(terms)) - integral, event_terms=terms, integral_term=integral)


def score(
    chain: Chain,
    spec: ModelSpec,
    fields: Sequence[CovariateField],
    pattern: PointPattern,
    grid: QuadratureGrid,
) -> tuple[DicResult, LpmlResult]:
    """DIC and LPML together, sharing one pass over the cells."""
    check_shared_region(pattern, grid)
    _check_chain(chain, spec, 2)
    z_ev = active_design(spec, fields, pattern.points)
    integrals = _sample_integrals(chain, active_design(spec, fields, grid.centers), grid)
    loglik = _event_sums(chain, z_ev) - integrals
    d = _dic_result(loglik, deviance(chain.posterior_mean(), spec, fields, pattern, grid))
    return d, _lpml_result(_harmonic_event_terms(chain, z_ev), integrals)


def lpml_partition_oracle(
    chain: Chain,
    spec: ModelSpec,
    fields: Sequence[CovariateField],
    pattern: PointPattern,
    partition: QuadratureGrid,
) -> float:
    """Count-based LPML over ``partition`` minus the window area.

    Each cell contributes ``-log mean_b [(lambda(A_i)/|A_i|)^(-N_i) exp(lambda(A_i) - |A_i|)]``
    with ``lambda(A_i)`` approximated by the intensity at the cell center times
    the cell area.  Subtracting ``|B|`` puts the result on the scale of :func:`lpml`.
    """
    check_shared_region(pattern, partition)
    _check_chain(chain, spec, 1)
    B = chain.n_kept
    counts = count_in_cells(pattern, partition).astype(float)
    z_cells = active_design(spec, fields, partition.centers)
    a = partition.cell_area
    log_lam0 = np.log(chain.lambda0)
    total = 0.0
    n_cells = partition.n_cells
    step = max(1, _CHUNK_ELEMENTS // B)
    for start in range(0, n_cells, step):
        rows = slice(start, min(start + step, n_cells))
        log_lam = log_lam0[None, :] + z_cells[rows] @ chain.beta.T
        with np.errstate(over="ignore"):
            mass = np.exp(log_lam) * a
        terms = -counts[rows, None] * log_lam + mass - a
        if not np.all(np.isfinite(terms)):
            raise NumericError(
                "cell term overflowed in exp(lambda(A_i)); use a finer partition"
            )
        total += float(np.sum(math.log(B) - logsumexp(terms, axis=1)))
    return total - partition.region.area
