"""Candidate enumeration, per-model scoring, and replicate selection studies.

A model wins on DIC with the smallest value and on LPML with the largest.
Ties go to the model with fewer covariates, then to the lexicographically
smaller index tuple.
"""
from __future__ import annotations

import csv
import itertools
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import CovariateField, PointPattern, QuadratureGrid, RasterField, Region
from .criteria import DicResult, LpmlResult, score
from .errors import ConfigurationError, FitError, SppselError
from .likelihood import ModelSpec
from .mcmc import Chain, McmcConfig, PosteriorSummary, PriorSpec, derive_seed, posterior_summary, sample_posterior
from .simulate import Scenario, scenario_preset, simulate_nhpp

__all__ = [
    "CandidateSet",
    "ScoredModel",
    "SelectionReport",
    "StudyReport",
    "enumerate_models",
    "fit_and_score",
    "select",
    "replicate_study",
    "compare_resolutions",
    "default_grid",
]

log = logging.getLogger(__name__)

MAX_COVARIATES = 20


@dataclass(frozen=True)
class CandidateSet:
    models: tuple[ModelSpec, ...]

    def __post_init__(self):
        models = tuple(self.models)
        if not models:
            raise ConfigurationError("candidate set is empty")
        seen = set()
        for m in models:
            if m.indices in seen:
                raise ConfigurationError(f"duplicate candidate {m.indices}")
            seen.add(m.indices)
        if len({m.p for m in models}) != 1:
            raise ConfigurationError("candidates refer to covariate lists of different lengths")
        object.__setattr__(self, "models", models)

    def __iter__(self):
        return iter(self.models)

    def __len__(self) -> int:
        return len(self.models)

    def __getitem__(self, i) -> ModelSpec:
        return self.models[i]

    @property
    def labels(self) -> list[str]:
        return [m.label for m in self.models]


def enumerate_models(p: int, include_homogeneous: bool = False) -> CandidateSet:
    """All covariate subsets, smallest first (the empty one only on request)."""
    if not 0 <= p <= MAX_COVARIATES:
        raise ConfigurationError(f"p must be in 0..{MAX_COVARIATES}, got {p}")
    models = []
    start = 0 if include_homogeneous else 1
    for size in range(start, p + 1):
        for idx in itertools.combinations(range(1, p + 1), size):
            models.append(ModelSpec(idx, p))
    if not models:
        raise ConfigurationError("p=0 without the homogeneous model leaves no candidates")
    return CandidateSet(tuple(models))


def default_grid(fields: Sequence[CovariateField], region: Region, fallback: int = 100) -> QuadratureGrid:
    """Quadrature grid matching the finest raster, or ``fallback`` squared cells."""
    rasters = [f for f in fields if isinstance(f, RasterField)]
    if not rasters:
        return QuadratureGrid(fallback, fallback, region)
    return QuadratureGrid(max(r.nx for r in rasters), max(r.ny for r in rasters), region)


@dataclass(frozen=True, eq=False)
class ScoredModel:
    model: ModelSpec
    dic: DicResult | None = None
    lpml: LpmlResult | None = None
    summary: PosteriorSummary | None = None
    acceptance: tuple[float, ...] = ()
    warnings: tuple[str, ...] = ()
    error: str | None = None
    chain: Chain | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    @property
    def label(self) -> str:
        return self.model.label

    def as_dict(self) -> dict:
        out = {"model": self.label, "indices": list(self.model.indices)}
        if self.failed:
            out["error"] = self.error
            return out
        out.update(self.dic.as_dict())
        out["lpml"] = self.lpml.lpml
        out["lpml_integral_term"] = self.lpml.integral_term
        out["acceptance"] = [None if math.isnan(a) else a for a in self.acceptance]
        if self.summary is not None:
            out["summary"] = self.summary.as_dict()
        if self.warnings:
            out["warnings"] = list(self.warnings)
        return out


def fit_and_score(
    pattern: PointPattern,
    fields: Sequence[CovariateField],
    model: ModelSpec,
    prior: PriorSpec,
    config: McmcConfig,
    grid: QuadratureGrid,
    keep_chain: bool = False,
) -> ScoredModel:
    """Sample the posterior of one model and compute DIC, LPML and a summary.

    Failures are re-raised as :class:`FitError` carrying the model label.
    """
    try:
        chain = sample_posterior(pattern, model, fields, prior, config, grid)
        d, lp = score(chain, model, fields, pattern, grid)
        summary = posterior_summary(chain) if chain.n_kept >= 10 else None
    except SppselError as exc:
        raise FitError(model.label, exc) from exc
    return ScoredModel(
        model=model,
        dic=d,
        lpml=lp,
        summary=summary,
        acceptance=tuple(float(a) for a in chain.acceptance_rate_beta),
        warnings=chain.warnings,
        chain=chain if keep_chain else None,
    )


def _tie_key(model: ModelSpec):
    return (model.dim, model.indices)


def _winner(models: Sequence[ModelSpec], values: Sequence[float], larger_is_better: bool) -> int:
    sign = -1.0 if larger_is_better else 1.0
    order = sorted(
        (i for i, v in enumerate(values) if v is not None and math.isfinite(v)),
        key=lambda i: (sign * values[i], _tie_key(models[i])),
    )
    if not order:
        raise ConfigurationError("no candidate could be scored")
    return order[0]


@dataclass(frozen=True, eq=False)
class SelectionReport:
    rows: tuple[ScoredModel, ...]
    winner_dic: ModelSpec
    winner_lpml: ModelSpec

    @property
    def n_failed(self) -> int:
        return sum(r.failed for r in self.rows)

    def dic_values(self) -> list[float | None]:
        return [None if r.failed else r.dic.dic for r in self.rows]

    def lpml_values(self) -> list[float | None]:
        return [None if r.failed else r.lpml.lpml for r in self.rows]

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["model", "dic", "p_d", "lpml", "status"])
            for r in self.rows:
                if r.failed:
                    w.writerow([r.label, "", "", "", "failed"])
                else:
                    w.writerow([r.label, repr(r.dic.dic), repr(r.dic.p_d), repr(r.lpml.lpml), "ok"])

    def as_dict(self) -> dict:
        return {
            "winner_dic": self.winner_dic.label,
            "winner_lpml": self.winner_lpml.label,
            "rows": [r.as_dict() for r in self.rows],
        }

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n")


def _map(func: Callable, items: Iterable, jobs: int) -> list:
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [func(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, items))


def _fit_task(args) -> ScoredModel:
    pattern, fields, model, prior, config, grid, keep_chain = args
    try:
        return fit_and_score(pattern, fields, model, prior, config, grid, keep_chain)
    except FitError as exc:
        log.warning("%s", exc)
        return ScoredModel(model=model, error=str(exc.cause))


def select(
    pattern: PointPattern,
    fields: Sequence[CovariateField],
    candidates: CandidateSet | Sequence[ModelSpec],
    prior: PriorSpec,
    config: McmcConfig,
    grid: QuadratureGrid,
    jobs: int = 1,
    keep_chains: bool = False,
) -> SelectionReport:
    """Fit every candidate and pick the DIC and LPML winners.

    Candidate ``m`` is sampled with seed ``derive_seed(config.seed, m)``.
    A failed fit marks its row and does not stop the others.
    """
    candidates = candidates if isinstance(candidates, CandidateSet) else CandidateSet(tuple(candidates))
    tasks = [
        (pattern, fields, m, prior, config.with_seed(derive_seed(config.seed, i)), grid, keep_chains)
        for i, m in enumerate(candidates)
    ]
    rows = tuple(_map(_fit_task, tasks, jobs))
    report_models = [r.model for r in rows]
    dics = [None if r.failed else r.dic.dic for r in rows]
    lpmls = [None if r.failed else r.lpml.lpml for r in rows]
    return SelectionReport(
        rows=rows,
        winner_dic=report_models[_winner(report_models, dics, False)],
        winner_lpml=report_models[_winner(report_models, lpmls, True)],
    )


def compare_resolutions(
    pattern: PointPattern,
    fields_by_resolution: dict[str, Sequence[CovariateField]],
    candidates: CandidateSet,
    prior: PriorSpec,
    config: McmcConfig,
    jobs: int = 1,
) -> dict:
    """Run :func:`select` per covariate resolution and compare the winners.

    Each resolution is fitted on a quadrature grid matching its rasters.
    Returns per-resolution best models and the overall DIC/LPML winners.
    """
    table = []
    for res, fields in fields_by_resolution.items():
        grid = default_grid(fields, pattern.region)
        rep = select(pattern, fields, candidates, prior, config, grid, jobs)
        best_d = next(r for r in rep.rows if r.model is rep.winner_dic)
        best_l = next(r for r in rep.rows if r.model is rep.winner_lpml)
        table.append({
            "resolution": res,
            "best_model_dic": best_d.label,
            "dic": best_d.dic.dic,
            "best_model_lpml": best_l.label,
            "lpml": best_l.lpml.lpml,
            "report": rep,
        })
    best_dic = min(table, key=lambda t: t["dic"])
    best_lpml = max(table, key=lambda t: t["lpml"])
    return {
        "rows": table,
        "winner_dic": (best_dic["resolution"], best_dic["best_model_dic"]),
        "winner_lpml": (best_lpml["resolution"], best_lpml["best_model_lpml"]),
    }


# -------------------------------------------------------------- replicate studies


@dataclass(frozen=True)
class _ReplicateOutcome:
    index: int
    n_points: int
    dic: tuple[float, ...] = ()
    p_d: tuple[float, ...] = ()
    lpml: tuple[float, ...] = ()
    error: str | None = None


def _replicate_task(args) -> _ReplicateOutcome:
    scenario_arg, candidates, config, prior, master_seed, r = args
    rseed = derive_seed(master_seed, r)
    try:
        if isinstance(scenario_arg, Scenario):
            scen = scenario_arg
        else:
            scen = scenario_preset(int(scenario_arg), covariate_seed=derive_seed(rseed, 0))
        pattern = simulate_nhpp(scen.intensity, scen.region, scen.method, seed=derive_seed(rseed, 1))
        dics, pds, lpmls = [], [], []
        for m, model in enumerate(candidates):
            cfg = config.with_seed(derive_seed(rseed, 2, m))
            scored = fit_and_score(pattern, scen.fields, model, prior or scen.prior, cfg, scen.grid)
            dics.append(scored.dic.dic)
            pds.append(scored.dic.p_d)
            lpmls.append(scored.lpml.lpml)
    except SppselError as exc:
        log.warning("replicate %d excluded: %s", r, exc)
        return _ReplicateOutcome(r, -1, error=str(exc))
    return _ReplicateOutcome(r, pattern.k, tuple(dics), tuple(pds), tuple(lpmls))


def _quartiles(x: np.ndarray) -> tuple[float, float, float]:
    q1, med, q3 = np.percentile(x, [25, 50, 75])
    return float(med), float(q1), float(q3)


@dataclass(frozen=True, eq=False)
class StudyReport:
    """Aggregated replicate study in the shape of the selection tables.

    Differences are ``criterion(model) - criterion(reference)`` per replicate.
    """

    models: tuple[ModelSpec, ...]
    reference: int
    replicate_index: np.ndarray
    n_points: np.ndarray
    dic: np.ndarray
    p_d: np.ndarray
    lpml: np.ndarray
    excluded: tuple[tuple[int, str], ...] = field(default=())

    @property
    def labels(self) -> list[str]:
        return [m.label for m in self.models]

    @property
    def n_valid(self) -> int:
        return len(self.replicate_index)

    @property
    def n_excluded(self) -> int:
        return len(self.excluded)

    def winners(self, criterion: str) -> np.ndarray:
        vals = self.dic if criterion == "dic" else self.lpml
        larger = criterion == "lpml"
        return np.array([_winner(self.models, list(row), larger) for row in vals], dtype=int)

    def selection_pct(self, criterion: str) -> np.ndarray:
        if self.n_valid == 0:
            return np.zeros(len(self.models))
        counts = np.bincount(self.winners(criterion), minlength=len(self.models))
        return 100.0 * counts / self.n_valid

    @property
    def avg_dic(self) -> np.ndarray:
        return self.dic.mean(axis=0)

    @property
    def avg_lpml(self) -> np.ndarray:
        return self.lpml.mean(axis=0)

    def differences(self, criterion: str) -> np.ndarray:
        vals = self.dic if criterion == "dic" else self.lpml
        return vals - vals[:, [self.reference]]

    def difference_summary(self, criterion: str) -> list[tuple[float, float, float]]:
        """(median, first quartile, third quartile) of the differences per model."""
        d = self.differences(criterion)
        return [_quartiles(d[:, m]) for m in range(len(self.models))]

    def selection_table(self) -> list[dict]:
        dsel, lsel = self.selection_pct("dic"), self.selection_pct("lpml")
        return [
            {
                "model": m.label,
                "avg_dic": float(self.avg_dic[i]),
                "avg_lpml": float(self.avg_lpml[i]),
                "dic_sel_pct": float(dsel[i]),
                "lpml_sel_pct": float(lsel[i]),
            }
            for i, m in enumerate(self.models)
        ]

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["model", "avg_dic", "avg_lpml", "dic_sel_pct", "lpml_sel_pct"])
            for row in self.selection_table():
                w.writerow([row["model"]] + [f"{row[k]:.3f}" for k in ("avg_dic", "avg_lpml", "dic_sel_pct", "lpml_sel_pct")])

    def write_differences_csv(self, path) -> None:
        dd, ld = self.difference_summary("dic"), self.difference_summary("lpml")
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["model", "dic_diff_median", "dic_diff_q1", "dic_diff_q3",
                        "lpml_diff_median", "lpml_diff_q1", "lpml_diff_q3"])
            for i, m in enumerate(self.models):
                if i == self.reference:
                    continue
                w.writerow([m.label] + [f"{v:.4f}" for v in dd[i] + ld[i]])

    def as_dict(self) -> dict:
        return {
            "models": self.labels,
            "reference": self.labels[self.reference],
            "n_valid": self.n_valid,
            "excluded": [{"replicate": int(i), "reason": r} for i, r in self.excluded],
            "table": self.selection_table(),
            "replicates": [
                {
                    "replicate": int(self.replicate_index[i]),
                    "n_points": int(self.n_points[i]),
                    "dic": [float(v) for v in self.dic[i]],
                    "p_d": [float(v) for v in self.p_d[i]],
                    "lpml": [float(v) for v in self.lpml[i]],
                }
                for i in range(self.n_valid)
            ],
        }

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n")


def replicate_study(
    scenario: int | Scenario,
    n_replicates: int,
    master_seed: int,
    config: McmcConfig,
    candidates: Sequence[ModelSpec] | None = None,
    reference: ModelSpec | None = None,
    jobs: int = 1,
    prior: PriorSpec | None = None,
) -> StudyReport:
    """Simulate ``n_replicates`` data sets and score every candidate on each.

    ``scenario`` is a preset id (random covariates of scenarios 3 and 4 are
    redrawn per replicate) or a fixed :class:`Scenario`.  Replicate ``r``
    uses seeds derived from ``(master_seed, r)`` only, so results do not
    depend on ``jobs``.  ``prior`` overrides the scenario's own prior.
    """
    if n_replicates < 1:
        raise ConfigurationError("a study needs at least one replicate")
    template = scenario if isinstance(scenario, Scenario) else scenario_preset(int(scenario))
    models = tuple(candidates) if candidates is not None else template.candidates
    CandidateSet(models)
    ref = reference if reference is not None else template.true_model
    try:
        ref_idx = next(i for i, m in enumerate(models) if m.indices == ref.indices)
    except StopIteration:
        raise ConfigurationError(f"reference model {ref.label} is not among the candidates") from None

    tasks = [(scenario, models, config, prior, master_seed, r) for r in range(n_replicates)]
    outcomes = _map(_replicate_task, tasks, jobs)
    ok = [o for o in outcomes if o.error is None]
    m = len(models)
    return StudyReport(
        models=models,
        reference=ref_idx,
        replicate_index=np.array([o.index for o in ok], dtype=int),
        n_points=np.array([o.n_points for o in ok], dtype=int),
        dic=np.array([o.dic for o in ok], dtype=float).reshape(len(ok), m),
        p_d=np.array([o.p_d for o in ok], dtype=float).reshape(len(ok), m),
        lpml=np.array([o.lpml for o in ok], dtype=float).reshape(len(ok), m),
        excluded=tuple((o.index, o.error) for o in outcomes if o.error is not None),
    )
