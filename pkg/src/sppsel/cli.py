"""Command-line entry point: ``sppsel {simulate,fit,select,study,oracle}``.

Every command accepts ``--config FILE`` (JSON, keys named like the long
options with underscores); explicit flags override the file.  Each run writes
``manifest.json`` holding the fully resolved settings, so
``sppsel <command> --config <out>/manifest.json`` replays it exactly.

Exit codes: 0 success, 2 configuration error, 3 numeric/fit error, 4 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import (
    AnalyticField,
    PointPattern,
    QuadratureGrid,
    RasterField,
    Region,
    read_points_csv,
    read_raster,
    write_points_csv,
    write_raster,
)
from .criteria import lpml, lpml_partition_oracle, posterior_mean_surface, score
from .errors import ConfigurationError, DomainError, NumericError
from .likelihood import ModelSpec, Theta
from .mcmc import (
    PROFILES,
    Chain,
    McmcConfig,
    PriorSpec,
    posterior_summary,
    sample_posterior,
    write_chain_csv,
    write_summary_json,
)
from .selection import CandidateSet, enumerate_models, replicate_study, select
from .simulate import PerCell, Thinning, scenario_preset, simulate_nhpp

log = logging.getLogger("sppsel")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

COMMON_DEFAULTS = {
    "seed": None,
    "jobs": 1,
    "out_dir": "out",
    "grid": None,
    "region": "0,1,0,1",
    "profile": "sim2018",
    "n_iter": None,
    "burn_in": None,
    "thin": None,
    "scheme": "componentwise",
    "proposal_sd": 0.1,
    "collapsed": True,
    "rotate": True,
    "init_beta": None,
    "sigma0_sq": 100.0,
    "a1": 0.01,
    "b1": 0.01,
}

COMMAND_DEFAULTS = {
    "simulate": {"preset": None, "method": "percell"},
    "fit": {"points": None, "covariates": [], "model": None},
    "select": {"points": None, "covariates": [], "candidates": "all", "include_homogeneous": False},
    "study": {"preset": None, "replicates": 10},
    "oracle": {
        "points": None,
        "covariates": [],
        "model": None,
        "fixture": None,
        "schedule": "25,50,100,200",
    },
}

# settings that never change outputs and are left out of manifests
_NOT_REPLAYED = {"config", "verbose", "jobs"}


class IoFailure(Exception):
    pass


# --------------------------------------------------------------------- parsing


def _add_common(p: argparse.ArgumentParser) -> None:
    S = argparse.SUPPRESS
    p.add_argument("--config", help="JSON settings file (flags win)")
    p.add_argument("--seed", type=int, default=S, help="master seed (required)")
    p.add_argument("--jobs", type=int, default=S, help="worker processes")
    p.add_argument("--out-dir", default=S, help="output directory")
    p.add_argument("--grid", default=S, help="quadrature grid as NX,NY")
    p.add_argument("--region", default=S, help="window as XMIN,XMAX,YMIN,YMAX")
    p.add_argument("--profile", choices=sorted(PROFILES), default=S, help="chain-length preset")
    p.add_argument("--n-iter", type=int, default=S)
    p.add_argument("--burn-in", type=int, default=S)
    p.add_argument("--thin", type=int, default=S)
    p.add_argument("--scheme", choices=["componentwise", "joint"], default=S)
    p.add_argument("--proposal-sd", type=float, default=S)
    p.add_argument("--init-beta", default=S, help="comma-separated starting coefficients")
    p.add_argument(
        "--conditional-beta",
        dest="collapsed",
        action="store_false",
        default=S,
        help="update beta given lambda0 instead of with lambda0 integrated out",
    )
    p.add_argument(
        "--axis-aligned",
        dest="rotate",
        action="store_false",
        default=S,
        help="keep beta steps on the coordinate axes instead of burn-in principal axes",
    )
    p.add_argument("--sigma0-sq", type=float, default=S, help="normal prior variance for beta")
    p.add_argument("--a1", type=float, default=S, help="gamma prior shape for lambda0")
    p.add_argument("--b1", type=float, default=S, help="gamma prior rate for lambda0")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_data(p: argparse.ArgumentParser) -> None:
    S = argparse.SUPPRESS
    p.add_argument("--points", default=S, help="CSV with header x,y")
    p.add_argument(
        "--covariates",
        nargs="*",
        default=S,
        help="covariate specs: x, y, xy, x2, dist:CX,CY, raster:PATH",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sppsel",
        description="Bayesian variable selection for spatial Poisson process regressions.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    S = argparse.SUPPRESS

    p = sub.add_parser("simulate", help="generate a scenario data set")
    _add_common(p)
    p.add_argument("--preset", type=int, choices=[1, 2, 3, 4], default=S)
    p.add_argument("--method", choices=["percell", "thinning"], default=S)

    p = sub.add_parser("fit", help="fit one model and write chain, summary, criteria")
    _add_common(p)
    _add_data(p)
    p.add_argument("--model", default=S, help="comma-separated 1-based covariate indices; empty = homogeneous")

    p = sub.add_parser("select", help="score a set of candidate models")
    _add_common(p)
    _add_data(p)
    p.add_argument("--candidates", default=S, help="'all' or models separated by ';', e.g. '1;1,2'")
    p.add_argument("--include-homogeneous", action="store_true", default=S)

    p = sub.add_parser("study", help="replicate selection study on a scenario")
    _add_common(p)
    p.add_argument("--preset", type=int, choices=[1, 2, 3, 4], default=S)
    p.add_argument("--replicates", type=int, default=S)

    p = sub.add_parser("oracle", help="partition-count LPML convergence table")
    _add_common(p)
    _add_data(p)
    p.add_argument("--model", default=S)
    p.add_argument("--fixture", choices=["two-sample"], default=S)
    p.add_argument("--schedule", default=S, help="partition sizes, e.g. 25,50,100,200")
    return parser


def resolve_settings(args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags."""
    settings = dict(COMMON_DEFAULTS)
    settings.update(COMMAND_DEFAULTS[args.command])
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise IoFailure(f"config file not found: {path}")
        try:
            loaded = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None
        unknown = set(loaded) - set(settings) - {"command", "version", "outputs"}
        if unknown:
            raise ConfigurationError(f"{path}: unknown settings {sorted(unknown)}")
        if loaded.get("command", args.command) != args.command:
            raise ConfigurationError(f"{path} was written by '{loaded['command']}', not '{args.command}'")
        settings.update({k: v for k, v in loaded.items() if k in settings})
    for key, value in vars(args).items():
        if key in settings:
            settings[key] = value
    if settings["seed"] is None:
        raise ConfigurationError("a seed is required (--seed or config)")
    return settings


def _parse_pair(text, what: str) -> tuple[int, int]:
    if isinstance(text, (list, tuple)):
        parts = list(text)
    else:
        parts = str(text).split(",")
    try:
        nx, ny = (int(v) for v in parts)
    except ValueError:
        raise ConfigurationError(f"{what} must look like NX,NY, got {text!r}") from None
    return nx, ny


def _parse_floats(text, what: str) -> tuple[float, ...] | None:
    if text is None:
        return None
    try:
        return tuple(float(v) for v in str(text).split(","))
    except ValueError:
        raise ConfigurationError(f"{what} must be comma-separated numbers, got {text!r}") from None


def _region(settings) -> Region:
    try:
        vals = [float(v) for v in str(settings["region"]).split(",")]
    except ValueError:
        raise ConfigurationError(f"bad region {settings['region']!r}") from None
    if len(vals) != 4:
        raise ConfigurationError("region needs XMIN,XMAX,YMIN,YMAX")
    return Region(*vals)


def _mcmc(settings, seed: int) -> McmcConfig:
    base = PROFILES[settings["profile"]]
    return McmcConfig(
        n_iter=settings["n_iter"] if settings["n_iter"] is not None else base.n_iter,
        burn_in=settings["burn_in"] if settings["burn_in"] is not None else base.burn_in,
        thin=settings["thin"] if settings["thin"] is not None else base.thin,
        proposal_sd=settings["proposal_sd"],
        scheme=settings["scheme"],
        collapsed=bool(settings["collapsed"]),
        rotate=bool(settings["rotate"]),
        init_beta=_parse_floats(settings["init_beta"], "--init-beta"),
        seed=seed,
    )


def _prior(settings) -> PriorSpec:
    return PriorSpec(settings["sigma0_sq"], settings["a1"], settings["b1"])


def _parse_covariate(spec: str, region: Region):
    if spec in ("x", "y", "xy", "x2"):
        return AnalyticField(spec)
    if spec.startswith("dist:"):
        try:
            cx, cy = (float(v) for v in spec[5:].split(","))
        except ValueError:
            raise ConfigurationError(f"bad distance covariate {spec!r}; use dist:CX,CY") from None
        return AnalyticField("dist", center=(cx, cy))
    if spec.startswith("raster:"):
        path = Path(spec[7:])
        if not path.is_file():
            raise IoFailure(f"raster file not found: {path}")
        raster = read_raster(path)
        if not raster.region.matches(region):
            raise ConfigurationError(f"raster {path} region differs from the analysis window")
        return raster
    raise ConfigurationError(f"unknown covariate spec {spec!r}")


def _load_data(settings):
    region = _region(settings)
    if not settings["points"]:
        raise ConfigurationError("--points is required")
    path = Path(settings["points"])
    if not path.is_file():
        raise IoFailure(f"points file not found: {path}")
    pattern = read_points_csv(path, region)
    fields = [_parse_covariate(c, region) for c in settings["covariates"]]
    return pattern, fields


def _grid(settings, fields, region: Region) -> QuadratureGrid:
    if settings["grid"] is not None:
        nx, ny = _parse_pair(settings["grid"], "--grid")
        return QuadratureGrid(nx, ny, region)
    rasters = [f for f in fields if isinstance(f, RasterField)]
    if rasters:
        return QuadratureGrid(max(r.nx for r in rasters), max(r.ny for r in rasters), region)
    return QuadratureGrid(100, 100, region)


def _parse_model(text, p: int) -> ModelSpec:
    if text is None:
        return ModelSpec(tuple(range(1, p + 1)), p)
    text = str(text).strip()
    if text in ("", "none", "homogeneous"):
        return ModelSpec.homogeneous(p)
    try:
        idx = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise ConfigurationError(f"bad model {text!r}; use comma-separated indices") from None
    return ModelSpec(idx, p)


def _out_dir(settings) -> Path:
    out = Path(settings["out_dir"])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create output directory {out}: {exc}") from None
    return out


def _write_manifest(out: Path, command: str, settings: dict, extra: dict | None = None) -> None:
    payload = {k: v for k, v in settings.items() if k not in _NOT_REPLAYED}
    payload["command"] = command
    if extra:
        payload["outputs"] = extra
    (out / "manifest.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


# -------------------------------------------------------------------- commands


def cmd_simulate(settings: dict) -> dict:
    if settings["preset"] is None:
        raise ConfigurationError("--preset is required")
    out = _out_dir(settings)
    seed = int(settings["seed"])
    scen = scenario_preset(int(settings["preset"]), covariate_seed=seed)
    method = PerCell() if settings["method"] == "percell" else Thinning()
    pattern = simulate_nhpp(scen.intensity, scen.region, method, seed=seed)
    write_points_csv(pattern, out / "points.csv")
    covariates = []
    for f in scen.fields:
        if isinstance(f, RasterField):
            path = out / f"{f.name}.txt"
            write_raster(f, path)
            covariates.append(f"raster:{path}")
        elif f.kind == "dist":
            covariates.append(f"dist:{f.center[0]!r},{f.center[1]!r}")
        else:
            covariates.append(f.kind)
    info = {
        "points": str(out / "points.csv"),
        "n_points": pattern.k,
        "covariates": covariates,
        "candidates": [{"label": m.label, "indices": list(m.indices)} for m in scen.candidates],
        "true_model": list(scen.true_model.indices),
    }
    _write_manifest(out, "simulate", settings, info)
    log.info("wrote %d points to %s", pattern.k, out / "points.csv")
    return info


def cmd_fit(settings: dict) -> dict:
    pattern, fields = _load_data(settings)
    out = _out_dir(settings)
    grid = _grid(settings, fields, pattern.region)
    model = _parse_model(settings["model"], len(fields))
    chain = sample_posterior(pattern, model, fields, _prior(settings), _mcmc(settings, int(settings["seed"])), grid)
    d, lp = score(chain, model, fields, pattern, grid)
    write_chain_csv(chain, out / "chain.csv")
    summary = posterior_summary(chain) if chain.n_kept >= 10 else None
    if summary is not None:
        write_summary_json(
            summary,
            out / "summary.json",
            {"acceptance": [None if np.isnan(a) else float(a) for a in chain.acceptance_rate_beta]},
        )
    criteria = {"model": model.label, **d.as_dict(), "lpml": lp.lpml, "lpml_integral_term": lp.integral_term,
                "event_terms_file": "event_terms.csv"}
    if chain.warnings:
        criteria["warnings"] = list(chain.warnings)
    _write_json(out / "criteria.json", criteria)
    with (out / "event_terms.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "log_harmonic_mean_intensity"])
        for (x, y), t in zip(pattern.points, lp.event_terms):
            w.writerow([repr(float(x)), repr(float(y)), repr(float(t))])
    surface = posterior_mean_surface(chain, model, fields, grid)
    with (out / "surface.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "posterior_mean_intensity"])
        for (x, y), v in zip(grid.centers, surface):
            w.writerow([repr(float(x)), repr(float(y)), repr(float(v))])
    _write_manifest(out, "fit", settings)
    return criteria


def _parse_candidates(text, p: int, include_homogeneous: bool) -> CandidateSet:
    if str(text).strip() == "all":
        return enumerate_models(p, include_homogeneous)
    models = [_parse_model(part, p) for part in str(text).split(";")]
    if include_homogeneous and all(m.indices for m in models):
        models.insert(0, ModelSpec.homogeneous(p))
    return CandidateSet(tuple(models))


def cmd_select(settings: dict) -> dict:
    pattern, fields = _load_data(settings)
    out = _out_dir(settings)
    grid = _grid(settings, fields, pattern.region)
    cands = _parse_candidates(settings["candidates"], len(fields), bool(settings["include_homogeneous"]))
    report = select(
        pattern, fields, cands, _prior(settings), _mcmc(settings, int(settings["seed"])), grid,
        jobs=int(settings["jobs"]),
    )
    report.write_csv(out / "selection.csv")
    report.write_json(out / "selection.json")
    _write_manifest(out, "select", settings)
    return report.as_dict()


def cmd_study(settings: dict) -> dict:
    if settings["preset"] is None:
        raise ConfigurationError("--preset is required")
    out = _out_dir(settings)
    report = replicate_study(
        int(settings["preset"]),
        int(settings["replicates"]),
        int(settings["seed"]),
        _mcmc(settings, int(settings["seed"])),
        jobs=int(settings["jobs"]),
        prior=_prior(settings),
    )
    report.write_csv(out / "study.csv")
    report.write_differences_csv(out / "study_differences.csv")
    report.write_json(out / "study.json")
    _write_manifest(out, "study", settings)
    return report.as_dict()


def _two_sample_fixture():
    region = Region()
    pattern = PointPattern(np.array([[0.3, 0.6]]), region)
    spec = ModelSpec.homogeneous(0)
    chain = Chain.from_samples(spec, [Theta(1.0), Theta(2.0)])
    return pattern, [], spec, chain


def cmd_oracle(settings: dict) -> list[dict]:
    out = _out_dir(settings)
    schedule = [int(v) for v in str(settings["schedule"]).split(",")]
    if settings["fixture"] == "two-sample":
        pattern, fields, spec, chain = _two_sample_fixture()
        grid = _grid(settings, fields, pattern.region) if settings["grid"] else QuadratureGrid(200, 200)
    else:
        pattern, fields = _load_data(settings)
        grid = _grid(settings, fields, pattern.region)
        spec = _parse_model(settings["model"], len(fields))
        chain = sample_posterior(pattern, spec, fields, _prior(settings), _mcmc(settings, int(settings["seed"])), grid)
    target = lpml(chain, spec, fields, pattern, grid).lpml
    rows = []
    for n in schedule:
        part = QuadratureGrid(n, n, pattern.region)
        value = lpml_partition_oracle(chain, spec, fields, pattern, part)
        rows.append({"n": n, "oracle": value, "lpml": target, "abs_diff": abs(value - target)})
    with (out / "oracle.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "oracle", "lpml", "abs_diff"])
        for r in rows:
            w.writerow([r["n"], repr(r["oracle"]), repr(r["lpml"]), repr(r["abs_diff"])])
    _write_manifest(out, "oracle", settings)
    return rows


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "select": cmd_select,
    "study": cmd_study,
    "oracle": cmd_oracle,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        settings = resolve_settings(args)
        COMMANDS[args.command](settings)
    except (ConfigurationError, DomainError) as exc:
        print(f"sppsel {args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"sppsel {args.command}: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (IoFailure, OSError) as exc:
        print(f"sppsel {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())


def main_entry() -> None:
    sys.exit(main())
