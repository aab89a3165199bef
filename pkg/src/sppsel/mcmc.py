"""Metropolis-Hastings within Gibbs sampling for (lambda0, beta).

Each sweep updates ``beta`` by Gaussian random-walk Metropolis, one
coefficient at a time (``scheme="componentwise"``) or all at once
(``scheme="joint"``), and draws ``lambda0`` exactly from its gamma full
conditional.

With ``collapsed=True`` (the default) the ``beta`` steps target the posterior
of ``beta`` with ``lambda0`` integrated out, which is available in closed form
by conjugacy, and ``lambda0`` is drawn given the new ``beta``.  The joint
target is unchanged; mixing improves sharply because ``lambda0`` and the
coefficients are strongly correlated along ``lambda0 * C(beta) ~ k``.  With
``collapsed=False`` the ``beta`` steps use the full conditional given the
current ``lambda0``.

Collinear covariates (say ``x``, ``y`` and ``xy``) make the coefficients
strongly correlated, and steps along the coordinate axes then mix slowly.
With ``rotate=True`` (the default) burn-in re-estimates the step directions
as the principal axes of the ``beta`` draws so far, with scales matched to
them.  Directions and scales are frozen after burn-in, so the kept chain is a
fixed-kernel Markov chain with the same target.

The gamma prior on ``lambda0`` uses the shape-rate parameterisation, so
``a1 = b1 = 0.01`` has mean 1 and variance 100.

Only the integral term of the log-likelihood depends on the cell grid.  The
event term reduces to ``k log lambda0 + beta . S`` with ``S`` the column sums
of the event design matrix, so one MH step costs one exp-and-dot over the
(deduplicated) cell design rows.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import CovariateField, PointPattern, QuadratureGrid
from .errors import ConfigurationError, InitializationError
from .likelihood import ModelSpec, Theta, active_design, check_shared_region

__all__ = [
    "PriorSpec",
    "McmcConfig",
    "PROFILES",
    "Chain",
    "ParameterSummary",
    "PosteriorSummary",
    "lambda0_full_conditional",
    "sample_posterior",
    "posterior_summary",
    "hpd_interval",
    "effective_sample_size",
    "derive_seed",
    "write_chain_csv",
    "write_summary_json",
]

# Robbins-Monro target acceptance for the random-walk steps
TARGET_ACCEPT = 0.44


@dataclass(frozen=True)
class PriorSpec:
    """beta_j ~ N(0, sigma0_sq); lambda0 ~ Gamma(shape=a1, rate=b1)."""

    sigma0_sq: float = 100.0
    a1: float = 0.01
    b1: float = 0.01

    def __post_init__(self):
        if not (self.sigma0_sq > 0 and self.a1 > 0 and self.b1 > 0):
            raise ConfigurationError(f"prior parameters must be positive: {self}")

    @classmethod
    def simulation(cls) -> "PriorSpec":
        """N(0, 10^2) on each beta and Gamma(1, 1) on lambda0."""
        return cls(100.0, 1.0, 1.0)


@dataclass(frozen=True)
class McmcConfig:
    """Chain length and proposal settings.

    ``proposal_sd`` is a scalar or one value per active coefficient.  A zero
    entry freezes that coefficient at its initial value.  When ``adapt`` is
    set, the scales are tuned during burn-in only.  ``collapsed`` selects the
    marginal (lambda0 integrated out) or conditional target for beta steps.
    ``rotate`` lets burn-in re-estimate the step directions as the principal
    axes of the beta draws so far; otherwise steps follow the coordinate axes.
    """

    n_iter: int = 20_000
    burn_in: int = 10_000
    thin: int = 1
    proposal_sd: float | tuple[float, ...] = 0.1
    adapt: bool = True
    seed: int = 0
    scheme: str = "componentwise"
    init_beta: tuple[float, ...] | None = None
    collapsed: bool = True
    rotate: bool = True

    def __post_init__(self):
        if not (self.n_iter > self.burn_in >= 0):
            raise ConfigurationError(f"need n_iter > burn_in >= 0, got {self.n_iter}, {self.burn_in}")
        if self.thin < 1:
            raise ConfigurationError(f"thin must be >= 1, got {self.thin}")
        sd = np.atleast_1d(np.asarray(self.proposal_sd, dtype=float))
        if np.any(sd < 0) or not np.all(np.isfinite(sd)):
            raise ConfigurationError(f"proposal_sd must be finite and >= 0, got {self.proposal_sd}")
        if self.scheme not in ("componentwise", "joint"):
            raise ConfigurationError(f"unknown MH scheme {self.scheme!r}")
        if self.seed < 0:
            raise ConfigurationError("seed must be a non-negative integer")

    @property
    def n_kept(self) -> int:
        return (self.n_iter - self.burn_in) // self.thin

    def with_seed(self, seed: int) -> "McmcConfig":
        return replace(self, seed=int(seed))


# chain-length presets: simulation study, earthquake analysis, forest analysis
PROFILES: dict[str, McmcConfig] = {
    "sim2018": McmcConfig(n_iter=20_000, burn_in=10_000, thin=1),
    "paper51": McmcConfig(n_iter=50_000, burn_in=30_000, thin=10),
    "paper52": McmcConfig(n_iter=18_000, burn_in=10_000, thin=1),
}


def derive_seed(master_seed: int, *path: int) -> int:
    """Independent 63-bit seed for task ``path`` under ``master_seed``."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


@dataclass(frozen=True, eq=False)
class Chain:
    """Thinned post-burn-in samples.

    ``kernel_sd[b]`` holds the proposal scales in force when sample ``b`` was
    drawn, one per step direction; the directions are the columns of
    ``kernel_basis`` (the identity unless burn-in rotated them), and
    ``acceptance_rate_beta`` is reported per direction.  ``warnings``
    collects tuning problems seen during burn-in.
    """

    spec: ModelSpec
    lambda0: np.ndarray
    beta: np.ndarray
    acceptance_rate_beta: np.ndarray
    kernel_sd: np.ndarray
    iterations: np.ndarray
    warnings: tuple[str, ...] = ()
    seed: int | None = None
    kernel_basis: np.ndarray | None = None

    @classmethod
    def from_samples(cls, spec: ModelSpec, samples: Sequence[Theta]) -> "Chain":
        """Wrap hand-made samples (fixtures, external samplers)."""
        lam = np.array([t.lambda0 for t in samples], dtype=float)
        beta = np.array([t.beta for t in samples], dtype=float).reshape(len(samples), spec.dim)
        if beta.shape[1] != spec.dim:
            raise ConfigurationError("sample dimension does not match model")
        return cls(
            spec,
            lam,
            beta,
            np.full(spec.dim, np.nan),
            np.zeros_like(beta),
            np.arange(1, len(samples) + 1),
        )

    @property
    def n_kept(self) -> int:
        return len(self.lambda0)

    def __len__(self) -> int:
        return self.n_kept

    def theta(self, b: int) -> Theta:
        return Theta(float(self.lambda0[b]), tuple(self.beta[b]))

    @property
    def samples(self) -> list[Theta]:
        return [self.theta(b) for b in range(self.n_kept)]

    def posterior_mean(self) -> Theta:
        return Theta(float(np.mean(self.lambda0)), tuple(np.mean(self.beta, axis=0)))

    def parameter_names(self) -> list[str]:
        return ["lambda0"] + [f"beta_{i}" for i in self.spec.indices]

    def as_matrix(self) -> np.ndarray:
        return np.column_stack([self.lambda0, self.beta])


def lambda0_full_conditional(
    spec: ModelSpec,
    fields: Sequence[CovariateField],
    pattern: PointPattern,
    grid: QuadratureGrid,
    beta,
    prior: PriorSpec = PriorSpec(),
) -> tuple[float, float]:
    """Shape and rate of the gamma full conditional of ``lambda0`` given ``beta``."""
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    if beta.size != spec.dim:
        raise ConfigurationError(f"beta has {beta.size} entries, model needs {spec.dim}")
    check_shared_region(pattern, grid)
    z = active_design(spec, fields, grid.centers)
    c_beta = grid.region.area * float(np.mean(np.exp(z @ beta)))
    return prior.a1 + pattern.k, prior.b1 + c_beta


def _compress_design(z: np.ndarray, cell_area: float) -> tuple[np.ndarray, np.ndarray]:
    """Collapse identical cell rows; weights are multiplicity times cell area."""
    if z.shape[1] == 0:
        return np.empty((1, 0)), np.array([cell_area * len(z)])
    uniq, counts = np.unique(z, axis=0, return_counts=True)
    return uniq, counts * cell_area


def _rotation_checkpoints(burn: int) -> tuple[int, ...]:
    """Burn-in iterations at which the step directions are re-estimated."""
    if burn < 400:
        return ()
    return (burn // 8, burn // 4, burn // 2)


def _principal_axes(window: np.ndarray, free: np.ndarray, p: int) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvectors of the free-coefficient covariance and matching step scales.

    Frozen coefficients keep unit columns and zero scale.
    """
    basis = np.eye(p)
    sd = np.zeros(p)
    cov = np.atleast_2d(np.cov(window[:, free], rowvar=False))
    evals, evecs = np.linalg.eigh(cov)
    evals = np.maximum(evals, 1e-10 * max(float(evals.max()), 1e-12))
    basis[np.ix_(free, free)] = evecs
    # 2.4 sd is close to the optimal one-dimensional random-walk scale
    sd[free] = 2.4 * np.sqrt(evals)
    return basis, sd


def sample_posterior(
    pattern: PointPattern,
    spec: ModelSpec,
    fields: Sequence[CovariateField],
    prior: PriorSpec,
    config: McmcConfig,
    grid: QuadratureGrid,
) -> Chain:
    """Run the sampler and return the thinned post-burn-in chain.

    Deterministic given ``config.seed``.
    """
    check_shared_region(pattern, grid)
    p = spec.dim
    k = pattern.k
    area = grid.region.area
    z_ev = active_design(spec, fields, pattern.points)
    s_stat = z_ev.sum(axis=0) if k else np.zeros(p)
    cells, weights = _compress_design(active_design(spec, fields, grid.centers), grid.cell_area)
    cells_t = np.ascontiguousarray(cells.T)

    sd = np.broadcast_to(np.asarray(config.proposal_sd, dtype=float), (p,)).copy() if p else np.zeros(0)
    if np.ndim(config.proposal_sd) and np.size(config.proposal_sd) not in (1, p):
        raise ConfigurationError(f"proposal_sd needs 1 or {p} entries")
    frozen = sd == 0
    log_sd = np.log(np.where(frozen, 1.0, sd))

    if config.init_beta is not None:
        beta = np.array(config.init_beta, dtype=float).reshape(-1)
        if beta.size != p:
            raise ConfigurationError(f"init_beta has {beta.size} entries, model needs {p}")
    else:
        beta = np.zeros(p)
    lam0 = k / area if k > 0 else prior.a1 / prior.b1

    eta = cells @ beta
    with np.errstate(over="ignore"):
        c_cur = float(weights @ np.exp(eta))
    if not (math.isfinite(c_cur) and c_cur > 0):
        raise InitializationError(
            f"model {spec.label}: non-finite integrated intensity at the initial beta {beta}"
        )

    shape = prior.a1 + k
    inv_2s2 = 0.5 / prior.sigma0_sq
    collapsed = config.collapsed
    rng = np.random.default_rng(config.seed)
    n_iter, burn = config.n_iter, config.burn_in
    gam = rng.standard_gamma(shape, size=n_iter)
    n_steps = p if config.scheme == "componentwise" else (1 if p else 0)
    normals = rng.standard_normal(size=(n_iter, p))
    log_u = np.log(rng.random(size=(n_iter, max(n_steps, 1))))

    # step directions: columns of ``basis``; the identity until re-estimated
    free = np.flatnonzero(~frozen)
    basis = np.eye(p)
    cells_dir = cells_t
    s_dir = s_stat.copy()
    rotations = _rotation_checkpoints(burn) if (config.rotate and config.adapt and free.size > 1) else ()
    trace = np.empty((burn, p)) if rotations else None
    t_adapt = 0

    n_keep = config.n_kept
    out_lam = np.empty(n_keep)
    out_beta = np.empty((n_keep, p))
    out_sd = np.empty((n_keep, p))
    out_iter = np.empty(n_keep, dtype=np.int64)
    accepts_burn = np.zeros(p, dtype=np.int64)
    accepts_post = np.zeros(p, dtype=np.int64)
    buf = np.empty(len(cells))
    kept = 0
    sd_cur = np.exp(log_sd)
    sd_cur[frozen] = 0.0

    with np.errstate(over="ignore"):
        for t in range(n_iter):
            if t in rotations:
                window = trace[t // 2 : t]
                basis, sd_cur = _principal_axes(window, free, p)
                log_sd = np.log(np.where(frozen, 1.0, sd_cur))
                cells_dir = np.ascontiguousarray((cells @ basis).T)
                s_dir = basis.T @ s_stat
                t_adapt = 0
            if not collapsed:
                lam0 = gam[t] / (prior.b1 + c_cur)
            adapting = config.adapt and t < burn
            rate = (t_adapt + 1) ** -0.6
            t_adapt += 1
            if config.scheme == "componentwise":
                for j in range(p):
                    if frozen[j]:
                        continue
                    step = sd_cur[j] * normals[t, j]
                    d = basis[:, j]
                    np.multiply(cells_dir[j], step, out=buf)
                    buf += eta
                    np.exp(buf, out=buf)
                    c_new = float(weights @ buf)
                    b_new = beta + step * d
                    if collapsed:
                        fit = -shape * math.log((prior.b1 + c_new) / (prior.b1 + c_cur))
                    else:
                        fit = -lam0 * (c_new - c_cur)
                    log_r = step * s_dir[j] + fit - float(b_new @ b_new - beta @ beta) * inv_2s2
                    ok = log_u[t, j] < log_r
                    if ok:
                        beta = b_new
                        eta += step * cells_dir[j]
                        c_cur = c_new
                        if t < burn:
                            accepts_burn[j] += 1
                        else:
                            accepts_post[j] += 1
                    if adapting:
                        acc_prob = 1.0 if log_r >= 0 else math.exp(log_r) if log_r > -700 else 0.0
                        log_sd[j] += rate * (acc_prob - TARGET_ACCEPT)
                        sd_cur[j] = math.exp(log_sd[j])
            elif p:
                z_step = sd_cur * normals[t]
                step = basis @ z_step
                eta_new = eta + cells_dir.T @ z_step
                c_new = float(weights @ np.exp(eta_new))
                b_new = beta + step
                if collapsed:
                    fit = -shape * math.log((prior.b1 + c_new) / (prior.b1 + c_cur))
                else:
                    fit = -lam0 * (c_new - c_cur)
                log_r = float(step @ s_stat) + fit - float(b_new @ b_new - beta @ beta) * inv_2s2
                if log_u[t, 0] < log_r:
                    beta = b_new
                    eta = eta_new
                    c_cur = c_new
                    if t < burn:
                        accepts_burn += 1
                    else:
                        accepts_post += 1
                if adapting:
                    acc_prob = 1.0 if log_r >= 0 else math.exp(log_r) if log_r > -700 else 0.0
                    target = TARGET_ACCEPT if free.size == 1 else 0.234
                    log_sd[~frozen] += rate * (acc_prob - target)
                    sd_cur = np.where(frozen, 0.0, np.exp(log_sd))

            if collapsed:
                lam0 = gam[t] / (prior.b1 + c_cur)
            if trace is not None and t < burn:
                trace[t] = beta
            if t >= burn and (t - burn + 1) % config.thin == 0:
                out_lam[kept] = lam0
                out_beta[kept] = beta
                out_sd[kept] = sd_cur
                out_iter[kept] = t + 1
                kept += 1

    notes = []
    if burn > 0 and p:
        for j in range(p):
            if frozen[j]:
                continue
            if accepts_burn[j] == 0 or accepts_burn[j] == burn:
                name = f"beta_{spec.indices[j]}" if rotations == () else f"step direction {j + 1}"
                msg = (
                    f"model {spec.label}: {name} acceptance during burn-in was "
                    f"{accepts_burn[j] / burn:.0%}; proposal scale needs tuning"
                )
                notes.append(msg)
                warnings.warn(msg, RuntimeWarning, stacklevel=2)
    n_post = n_iter - burn
    acc_rate = accepts_post / n_post
    acc_rate[frozen] = np.nan
    return Chain(
        spec=spec,
        lambda0=out_lam,
        beta=out_beta,
        acceptance_rate_beta=acc_rate,
        kernel_sd=out_sd,
        iterations=out_iter,
        kernel_basis=basis,
        warnings=tuple(notes),
        seed=config.seed,
    )


# ------------------------------------------------------------------ summaries


def hpd_interval(samples, level: float = 0.95) -> tuple[float, float]:
    """Narrowest window of ``ceil(level * B)`` consecutive order statistics.

    Ties go to the window starting at the smallest order statistic.
    """
    if not 0 < level < 1:
        raise ConfigurationError(f"HPD level must lie in (0, 1), got {level}")
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = len(x)
    if n == 0:
        raise ConfigurationError("HPD of an empty sample")
    m = min(n, max(1, math.ceil(level * n - 1e-9)))
    widths = x[m - 1:] - x[: n - m + 1]
    i = int(np.argmin(widths))
    return float(x[i]), float(x[i + m - 1])


def effective_sample_size(x) -> float:
    """ESS from Geyer's initial monotone sequence of autocorrelation pairs."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 4:
        return float(n)
    xc = x - x.mean()
    var = float(xc @ xc) / n
    if var == 0:
        return float(n)
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, nfft)
    acf = np.fft.irfft(f * np.conj(f), nfft)[:n] / (n * var)
    pair_sums = acf[0: n - 1: 2] + acf[1:n:2]
    tau = -1.0
    running = np.inf
    for g in pair_sums:
        if g <= 0:
            break
        running = min(running, g)
        tau += 2.0 * running
    tau = max(tau, 1.0 / n)
    return float(n / tau)


@dataclass(frozen=True)
class ParameterSummary:
    mean: float
    sd: float
    hpd: tuple[float, float]
    ess: float

    def as_dict(self) -> dict:
        return {"mean": self.mean, "sd": self.sd, "hpd": list(self.hpd), "ess": self.ess}


@dataclass(frozen=True)
class PosteriorSummary:
    level: float
    parameters: dict[str, ParameterSummary] = field(default_factory=dict)

    def __getitem__(self, name: str) -> ParameterSummary:
        return self.parameters[name]

    def as_dict(self) -> dict:
        return {"level": self.level, "parameters": {k: v.as_dict() for k, v in self.parameters.items()}}


def posterior_summary(chain: Chain, level: float = 0.95) -> PosteriorSummary:
    """Posterior mean, sd, HPD interval and ESS for every parameter."""
    if not 0 < level < 1:
        raise ConfigurationError(f"HPD level must lie in (0, 1), got {level}")
    if chain.n_kept < 10:
        raise ConfigurationError(f"posterior summary needs at least 10 samples, chain has {chain.n_kept}")
    params = {}
    for name, col in zip(chain.parameter_names(), chain.as_matrix().T):
        params[name] = ParameterSummary(
            mean=float(np.mean(col)),
            sd=float(np.std(col, ddof=1)),
            hpd=hpd_interval(col, level),
            ess=effective_sample_size(col),
        )
    return PosteriorSummary(level, params)


def write_chain_csv(chain: Chain, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter"] + chain.parameter_names())
        for it, row in zip(chain.iterations, chain.as_matrix()):
            w.writerow([int(it)] + [repr(float(v)) for v in row])


def write_summary_json(summary: PosteriorSummary, path, extra: dict | None = None) -> None:
    payload = summary.as_dict()
    if extra:
        payload.update(extra)
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
