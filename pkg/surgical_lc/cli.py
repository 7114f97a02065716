"""Command-line interface: ``surgical-lc {fit,track,cusum,simulate,calibrate}``.

Settings are resolved from model defaults, then an optional JSON ``--config``
file, then command-line flags. The output directory falls back to the
``SURGICAL_LC_OUTPUT_DIR`` environment variable (``.env`` files are honoured).

Exit codes: 0 success, 1 numerical failure, 2 usage or validation error.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from dotenv import load_dotenv
from langchain_core.utils import get_from_dict_or_env
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from surgical_lc import __version__
from surgical_lc._utils import (
    cusum_frame,
    fit_document,
    parse_profile,
    series_frame,
)
from surgical_lc.cpm import CpmConfig, MetricKind, Standard, cpm_config
from surgical_lc.exceptions import CaseParseError, DomainError, NumericalError
from surgical_lc.lccusum import run_lc_cusum
from surgical_lc.model import (
    CaseRecord,
    WeibullRegParams,
    covariate_means,
    shift_covariates,
    shift_params,
)
from surgical_lc.plotting import plot_cusum, plot_series
from surgical_lc.sim import (
    DEFAULT_REPS,
    DEFAULT_WINDOWS,
    CovariateSampler,
    Detector,
    PsdDenominator,
    ScenarioSpec,
    calibrate_from_paths,
    oc_from_paths,
    replicate_paths,
    validate_cutoff,
)
from surgical_lc.slca import DEFAULT_WARMUP, run_slca_grid
from surgical_lc.wee import fit_mle, fit_wee

logger = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "SURGICAL_LC_OUTPUT_DIR"
COMMANDS = ("fit", "track", "cusum", "simulate", "calibrate")
DEFAULT_OUTPUTS = {
    "fit": "fit.json",
    "track": "track.csv",
    "cusum": "cusum.csv",
    "simulate": "simulate.json",
    "calibrate": "calibrate.json",
}


class RunConfig(BaseModel):
    """Every setting of a CLI run, validated before dispatch."""

    model_config = ConfigDict(frozen=True, populate_by_name=True, extra="forbid")

    command: Literal["fit", "track", "cusum", "simulate", "calibrate"]
    cases: Optional[Path] = Field(default=None, description="Trainee case CSV.")
    unweighted: bool = Field(default=False, description="Fit by unweighted maximum likelihood.")
    center_covariates: bool = Field(
        default=False,
        description="Subtract the training-window covariate means before fitting.",
    )
    lambda_: float = Field(default=0.05, gt=0, le=1, alias="lambda")
    epsilon: float = Field(default=0.2, gt=0)
    kind: MetricKind = "PN"
    cutoff: float = Field(default=0.95, gt=0, lt=1)
    alpha: float = Field(default=0.05, gt=0, lt=1)
    delta_l: Optional[float] = None
    delta_u: Optional[float] = None
    x_eval: List[Tuple[float, ...]] = Field(
        default_factory=list, description="Covariate profiles; defaults to the case medians."
    )
    n0: int = Field(default=DEFAULT_WARMUP, ge=1)
    persistence: int = Field(default=1, ge=1)
    standard_gamma: Optional[float] = Field(default=None, gt=0)
    standard_eta: Optional[float] = Field(default=None, gt=0)
    standard_beta: Tuple[float, ...] = ()
    standard_cases: Optional[Path] = Field(
        default=None, description="Standard-cohort CSV fitted by unweighted maximum likelihood."
    )
    h: Optional[float] = Field(default=None, gt=0)
    detector: Detector = "SLCA"
    seed: int = 0
    reps: int = Field(default=DEFAULT_REPS, ge=1)
    n_jobs: int = Field(default=1, ge=1)
    t: int = Field(default=100, ge=1)
    change_index: int = Field(default=30, ge=0)
    windows: Tuple[int, ...] = DEFAULT_WINDOWS
    covariates: Literal["uniform", "fixed", "empirical"] = "uniform"
    covariate_file: Optional[Path] = None
    target_low: float = Field(default=0.03, gt=0, lt=1)
    target_high: float = Field(default=0.07, gt=0, lt=1)
    psd_denominator: PsdDenominator = "qualifying"
    output_dir: Path
    output: Optional[str] = None
    precision: Optional[int] = Field(
        default=None, ge=0, le=15, description="Round written floats to this many decimals."
    )
    plot: bool = False
    progress: bool = False

    @model_validator(mode="before")
    @classmethod
    def validate_environment(cls, values: Dict) -> Dict:
        """Resolve the output directory from the environment when not given."""
        values = dict(values)
        values["output_dir"] = get_from_dict_or_env(values, "output_dir", OUTPUT_DIR_ENV, default=".")
        return values

    @field_validator("x_eval", mode="before")
    @classmethod
    def coerce_profiles(cls, value):
        profiles = []
        for item in value:
            if isinstance(item, str):
                item = parse_profile(item)
            elif isinstance(item, (int, float)):
                item = [item]
            profiles.append(tuple(float(v) for v in item))
        return profiles

    @field_validator("standard_beta", mode="before")
    @classmethod
    def coerce_beta(cls, value):
        if isinstance(value, str):
            return tuple(parse_profile(value))
        if isinstance(value, (int, float)):
            return (float(value),)
        return value

    @model_validator(mode="after")
    def check_ranges(self):
        if self.target_low > self.target_high:
            raise ValueError("target_low must not exceed target_high")
        if self.covariates == "empirical" and self.covariate_file is None:
            raise ValueError("the empirical covariate sampler needs --covariate-file")
        return self

    def output_path(self, suffix: Optional[str] = None) -> Path:
        name = Path(self.output or DEFAULT_OUTPUTS[self.command])
        if suffix:
            name = name.with_suffix(suffix)
        return self.output_dir / name

    def cpm(self) -> CpmConfig:
        return cpm_config(
            kind=self.kind,
            epsilon=self.epsilon,
            cutoff=self.cutoff,
            alpha=self.alpha,
            delta_l=self.delta_l,
            delta_u=self.delta_u,
        )

    def literal_standard(self) -> Optional[WeibullRegParams]:
        if self.standard_gamma is None and self.standard_eta is None:
            return None
        if self.standard_gamma is None or self.standard_eta is None:
            raise DomainError("a literal standard needs both --standard-gamma and --standard-eta")
        return WeibullRegParams(
            gamma=self.standard_gamma, eta=self.standard_eta, beta=self.standard_beta
        )


def ingest_cases(path: Union[str, Path]) -> List[CaseRecord]:
    """Read ``case,y,x1,...,xd`` rows from a UTF-8 CSV file, with or without a BOM.

    Rows are numbered from 1 after the header in error messages. The result is
    sorted by case index.

    Raises:
        CaseParseError: Missing columns, non-numeric cells, non-positive ``y`` or
            duplicate case indices.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"case file not found: {path}")
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8-sig")
    except pd.errors.EmptyDataError as exc:
        raise CaseParseError("file has no header row") from exc
    raw.columns = [str(c).strip() for c in raw.columns]
    for required in ("case", "y"):
        if required not in raw.columns:
            raise CaseParseError(f"missing column {required!r}", column=required)
    x_columns = sorted(
        (c for c in raw.columns if c.startswith("x") and c[1:].isdigit()), key=lambda c: int(c[1:])
    )
    expected = [f"x{k}" for k in range(1, len(x_columns) + 1)]
    if x_columns != expected:
        missing = next(e for e, c in zip(expected, x_columns) if e != c)
        raise CaseParseError(f"missing column {missing!r}", column=missing)
    extra = [c for c in raw.columns if c not in ("case", "y", *x_columns)]
    if extra:
        logger.warning("%s: ignoring columns %s", path, ", ".join(extra))
    if raw.empty:
        raise CaseParseError("file has no case rows")

    columns = ["case", "y", *x_columns]
    cells = raw[columns].apply(lambda col: col.str.strip())
    numeric = cells.apply(pd.to_numeric, errors="coerce")
    bad = np.argwhere(numeric.isna().to_numpy() | ~np.isfinite(numeric.to_numpy(dtype=float)))
    if len(bad):
        r, c = bad[0]
        column, cell = columns[c], cells.iat[r, c]
        reason = "is missing" if cell == "" else f"is not a finite number: {cell!r}"
        raise CaseParseError(f"{column} {reason}", row=int(r) + 1, column=column)

    records = []
    seen: Dict[int, int] = {}
    for r, row in enumerate(numeric.itertuples(index=False), start=1):
        index, y = row[0], row[1]
        if index != int(index) or index < 1:
            raise CaseParseError("case must be a positive integer", row=r, column="case")
        if y <= 0:
            raise CaseParseError("y must be positive", row=r, column="y")
        if int(index) in seen:
            raise CaseParseError(
                f"duplicate case index {int(index)} (first seen in row {seen[int(index)]})",
                row=r,
                column="case",
            )
        seen[int(index)] = r
        records.append(CaseRecord(index=int(index), y=float(y), x=tuple(float(v) for v in row[2:])))
    records.sort(key=lambda case: case.index)
    logger.info("read %d cases with %d covariates from %s", len(records), len(x_columns), path)
    return records


def emit_cases(cases: Sequence[CaseRecord], path: Union[str, Path]) -> Path:
    """Write cases in the :func:`ingest_cases` schema."""
    d = len(cases[0].x) if cases else 0
    frame = pd.DataFrame(
        [[case.index, case.y, *case.x] for case in cases],
        columns=["case", "y", *[f"x{k}" for k in range(1, d + 1)]],
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n")
    return path


def _rounded(value: Any, precision: int) -> Any:
    if isinstance(value, float):
        return round(value, precision)
    if isinstance(value, dict):
        return {key: _rounded(item, precision) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_rounded(item, precision) for item in value]
    return value


def _write_json(document: Dict[str, Any], path: Path, precision: Optional[int] = None) -> Path:
    if precision is not None:
        document = _rounded(document, precision)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(document, indent=2) + "\n", encoding="utf-8")
    logger.info("wrote %s", path)
    return path


def _write_csv(frame: pd.DataFrame, path: Path, precision: Optional[int] = None) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    float_format = None if precision is None else f"%.{precision}f"
    frame.to_csv(path, index=False, lineterminator="\n", na_rep="", float_format=float_format)
    logger.info("wrote %s", path)
    return path


def _require_cases(config: RunConfig) -> List[CaseRecord]:
    if config.cases is None:
        raise DomainError(f"{config.command} needs --cases")
    return ingest_cases(config.cases)


def _profiles(config: RunConfig, cases: Sequence[CaseRecord]) -> List[Tuple[float, ...]]:
    if config.x_eval:
        return list(config.x_eval)
    d = len(cases[0].x) if cases else 0
    if d == 0:
        return [()]
    median = tuple(float(v) for v in np.median(np.array([c.x for c in cases]).reshape(-1, d), axis=0))
    logger.info("no --x-eval given, evaluating at the case medians %s", median)
    return [median]


def resolve_standard(config: RunConfig, offset: Optional[Sequence[float]] = None) -> Standard:
    """Literal standard parameters, or an unweighted fit of a standard-cohort file.

    With ``offset`` the standard is expressed for covariates ``x - offset``.
    """
    literal = config.literal_standard()
    if literal is not None and config.standard_cases is not None:
        raise DomainError("give either literal standard parameters or --standard-cases, not both")
    if literal is not None:
        return literal if offset is None else shift_params(literal, offset)
    if config.standard_cases is None:
        raise DomainError(
            "a standard model is required: --standard-gamma/--standard-eta or --standard-cases"
        )
    cohort = ingest_cases(config.standard_cases)
    if offset is not None:
        cohort = shift_covariates(cohort, offset)
    fit = fit_mle(cohort)
    if not fit.converged:
        raise NumericalError(f"standard-cohort fit did not converge (|Q|={fit.score_norm:.3e})")
    return fit


def _centering(config: RunConfig, window: Sequence[CaseRecord]) -> Optional[Tuple[float, ...]]:
    if not config.center_covariates:
        return None
    means = covariate_means(window)
    logger.info("centering covariates at the means %s of cases 1..%d", means, len(window))
    return means


def cmd_fit(config: RunConfig) -> int:
    cases = _require_cases(config)
    offset = _centering(config, cases)
    if offset is not None:
        cases = shift_covariates(cases, offset)
    fit = fit_mle(cases) if config.unweighted else fit_wee(cases, config.lambda_)
    document = fit_document(fit, config.alpha)
    if offset is not None:
        document["covariate_means"] = list(offset)
    _write_json(document, config.output_path(), config.precision)
    for row in document["parameters"]:
        print(f"{row['name']:>8}  {row['display']}")
    if not fit.converged:
        logger.error("fit did not converge after %d iterations", fit.iterations)
        return 1
    return 0


def cmd_track(config: RunConfig) -> int:
    cases = _require_cases(config)
    # the warm-up cases are the training window
    offset = _centering(config, cases[: config.n0])
    standard = resolve_standard(config, offset)
    cfg = config.cpm()
    raw_profiles = _profiles(config, cases)
    profiles = raw_profiles
    if offset is not None:
        cases = shift_covariates(cases, offset)
        profiles = [tuple(float(v) for v in np.subtract(p, offset)) for p in raw_profiles]
    all_series = run_slca_grid(
        cases, standard, config.lambda_, cfg, profiles, config.n0, config.persistence
    )
    params_s = standard.params if not isinstance(standard, WeibullRegParams) else standard
    base = config.output_path()
    for k, series in enumerate(all_series):
        path = base if len(all_series) == 1 else base.with_name(f"{base.stem}_{k + 1}{base.suffix}")
        _write_csv(series_frame(series), path, config.precision)
        if config.plot:
            plot_series(series, params_s, path.with_suffix(".svg"))
        label = ", ".join(f"{v:g}" for v in raw_profiles[k])
        if series.expertise_time is None:
            print(f"x=({label}): no expertise time")
        else:
            print(f"x=({label}): expertise time at case {series.expertise_time}")
    return 1 if any(series.final_fit_failed for series in all_series) else 0


def cmd_cusum(config: RunConfig) -> int:
    standard = resolve_standard(config)
    params_s = standard.params if not isinstance(standard, WeibullRegParams) else standard
    if config.h is None:
        raise DomainError("cusum needs a cutoff --h")
    cases = _require_cases(config)
    x_eval = _profiles(config, cases)[0]
    trace = run_lc_cusum(cases, params_s, config.epsilon, config.h, x_eval)
    path = _write_csv(cusum_frame(trace), config.output_path(), config.precision)
    if config.plot:
        plot_cusum(trace, path.with_suffix(".svg"))
    print("no signal" if trace.signal_index is None else f"signal at case {trace.signal_index}")
    return 0


def scenario_from_config(config: RunConfig) -> ScenarioSpec:
    """Simulation design from the run settings, defaulting to the BMI reference design."""
    settings: Dict[str, Any] = {
        "t": config.t,
        "lambda_": config.lambda_,
        "epsilon": config.epsilon,
        "kind": config.kind,
        "change_index": config.change_index,
        "n0": config.n0,
    }
    literal = config.literal_standard()
    if literal is not None:
        settings.update(standard=literal, eta_n=literal.eta, beta_n=literal.beta)
        if literal.d == 0:
            settings["x_eval"] = ()
    if config.x_eval:
        settings["x_eval"] = config.x_eval[0]
    if config.covariates == "empirical":
        settings["covariate_sampler"] = CovariateSampler.from_file(config.covariate_file)
    else:
        settings["covariate_sampler"] = CovariateSampler(kind=config.covariates)
    return ScenarioSpec(**settings)


def _simulate(config: RunConfig, h: Optional[float]) -> Dict[str, Any]:
    spec = scenario_from_config(config)
    if spec.change_index + max(config.windows, default=0) > spec.t:
        raise DomainError("change_index plus the largest window exceeds t")
    inadequate = replicate_paths(
        config.detector, spec, "inadequate", config.reps, config.seed, config.n_jobs, config.progress
    )
    document: Dict[str, Any] = {"version": __version__, "scenario": spec.model_dump(mode="json")}
    if h is None:
        calibration = calibrate_from_paths(
            config.detector,
            inadequate,
            (config.target_low, config.target_high),
            seed=config.seed,
        )
        # the reported PFA comes from paths the search never saw
        calibration, inadequate = validate_cutoff(calibration, spec, config.n_jobs, config.progress)
        h = calibration.h
        document["calibration"] = calibration.model_dump(mode="json")
    learning = replicate_paths(
        config.detector, spec, "learning", config.reps, config.seed, config.n_jobs, config.progress
    )
    oc = oc_from_paths(
        config.detector,
        inadequate,
        learning,
        h,
        spec.change_index,
        config.windows,
        config.seed,
        config.psd_denominator,
    )
    document["result"] = oc.model_dump(mode="json")
    print(
        f"{oc.detector} h={oc.h:.4g}: PFA={oc.pfa.estimate:.3f}  "
        + "  ".join(f"PSD_{w}={p.estimate:.3f}" for w, p in oc.psd.items())
    )
    return document


def cmd_simulate(config: RunConfig) -> int:
    if config.h is None:
        raise DomainError("simulate needs a cutoff --h")
    _write_json(_simulate(config, config.h), config.output_path(), config.precision)
    return 0


def cmd_calibrate(config: RunConfig) -> int:
    _write_json(_simulate(config, None), config.output_path(), config.precision)
    return 0


HANDLERS = {
    "fit": cmd_fit,
    "track": cmd_track,
    "cusum": cmd_cusum,
    "simulate": cmd_simulate,
    "calibrate": cmd_calibrate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="surgical-lc",
        description="Risk-adjusted surgical learning-curve assessment.",
        argument_default=argparse.SUPPRESS,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", type=Path, help="JSON file of settings; flags override it.")
    common.add_argument("--output-dir", dest="output_dir", help=f"Defaults to ${OUTPUT_DIR_ENV} or '.'.")
    common.add_argument("--output", "-o", help="Output file name inside the output directory.")
    common.add_argument("--precision", type=int, help="Round written floats to this many decimals.")
    common.add_argument("-v", "--verbose", action="count", default=0)
    common.add_argument("-q", "--quiet", action="store_true", default=False)

    metric = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    metric.add_argument("--lambda", dest="lambda", type=float, help="WEE smoothing constant in (0, 1].")
    metric.add_argument("--epsilon", type=float, help="Clinical margin, e.g. 0.2.")
    metric.add_argument("--kind", choices=["PA", "PN", "custom"])
    metric.add_argument("--cutoff", type=float)
    metric.add_argument("--alpha", type=float)
    metric.add_argument("--delta-l", dest="delta_l", type=float)
    metric.add_argument("--delta-u", dest="delta_u", type=float)
    metric.add_argument("--x-eval", dest="x_eval", action="append", help="Profile such as 27 or 27,1.")
    metric.add_argument("--n0", type=int, help="Warm-up before the first evaluated case.")

    standard = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    standard.add_argument("--standard-gamma", dest="standard_gamma", type=float)
    standard.add_argument("--standard-eta", dest="standard_eta", type=float)
    standard.add_argument("--standard-beta", dest="standard_beta", help="Comma-separated coefficients.")
    standard.add_argument("--standard-cases", dest="standard_cases", type=Path)

    cases = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    cases.add_argument("--cases", type=Path, help="CSV with columns case,y,x1..xd.")

    fit = sub.add_parser("fit", parents=[common, cases, metric], help="Fit the Weibull model by WEE.")
    fit.add_argument("--unweighted", action="store_true")
    fit.add_argument(
        "--center-covariates",
        dest="center_covariates",
        action="store_true",
        help="Subtract the covariate means of the fitted cases first.",
    )

    track = sub.add_parser(
        "track", parents=[common, cases, metric, standard], help="Sequential learning-curve assessment."
    )
    track.add_argument("--persistence", type=int)
    track.add_argument(
        "--center-covariates",
        dest="center_covariates",
        action="store_true",
        help="Subtract the covariate means of the first n0 cases from cases, profiles and standard.",
    )
    track.add_argument("--plot", action="store_true", help="Also write an SVG next to the CSV.")

    cusum = sub.add_parser("cusum", parents=[common, cases, metric, standard], help="Run the LC-CUSUM.")
    cusum.add_argument("--h", type=float)
    cusum.add_argument("--plot", action="store_true")

    for name, helptext in (
        ("simulate", "Estimate PFA and PSD at a given cutoff."),
        ("calibrate", "Find a cutoff with PFA in the target range."),
    ):
        p = sub.add_parser(name, parents=[common, metric, standard], help=helptext)
        p.add_argument("--detector", choices=["SLCA", "LCCUSUM"])
        p.add_argument("--seed", type=int)
        p.add_argument("--reps", type=int)
        p.add_argument("--n-jobs", dest="n_jobs", type=int)
        p.add_argument("--t", type=int)
        p.add_argument("--change-index", dest="change_index", type=int)
        p.add_argument("--windows", type=lambda s: tuple(int(w) for w in s.split(",")))
        p.add_argument("--covariates", choices=["uniform", "fixed", "empirical"])
        p.add_argument("--covariate-file", dest="covariate_file", type=Path)
        p.add_argument("--progress", action="store_true")
        p.add_argument(
            "--psd-denominator",
            dest="psd_denominator",
            choices=["qualifying", "all"],
            help="Drop learning runs with early false alarms (qualifying) or count them as misses (all).",
        )
        if name == "simulate":
            p.add_argument("--h", type=float)
        else:
            p.add_argument("--target-low", dest="target_low", type=float)
            p.add_argument("--target-high", dest="target_high", type=float)
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    """Merge the JSON config file and the flags given on the command line."""
    flags = dict(vars(args))
    for key in ("verbose", "quiet"):
        flags.pop(key, None)
    config_path = flags.pop("config", None)
    settings: Dict[str, Any] = {}
    if config_path is not None:
        settings = json.loads(Path(config_path).read_text(encoding="utf-8"))
        if not isinstance(settings, dict):
            raise DomainError(f"{config_path}: the config file must hold a JSON object")
    settings.update(flags)
    return RunConfig(**settings)


def _configure_logging(verbose: int, quiet: bool) -> None:
    level = logging.ERROR if quiet else (logging.WARNING, logging.INFO, logging.DEBUG)[min(verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    _configure_logging(getattr(args, "verbose", 0), getattr(args, "quiet", False))
    try:
        config = load_config(args)
        return HANDLERS[config.command](config)
    except NumericalError as exc:
        logger.error("%s", exc)
        return 1
    except (ValueError, OSError) as exc:
        logger.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
