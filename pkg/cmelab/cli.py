"""
The `cmelab` command line: estimate, simulate, benchmark and diagnose.

Exit codes: 0 on success, 2 on invalid input or configuration, 3 when
estimation fails numerically.
"""
import argparse
import dataclasses
import json
import logging
import sys
import typing
from pathlib import Path

from .bench import run_mc
from .config import COMMANDS, RunConfig, load_config
from .data import ingest_csv
from .dgp import get_dgp, sample
from .diagnostics import overlap_diagnostic, recommend_estimator
from .estimate import estimate
from .exceptions import EstimationError, ValidationError
from .kernel import KernelSpec
from .linear import BinSpec, wald_constancy_test
from .utils import to_dasherized, to_jsonable

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_ESTIMATION = 3

RESOLVED_CONFIG = "config.resolved.yaml"


def _key_value(text: str) -> typing.Tuple[str, float]:
    key, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    try:
        return key.strip(), float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{key} must be a number, got {value!r}")


def _argument_options(hint: typing.Any) -> dict:
    args = typing.get_args(hint)
    if typing.get_origin(hint) is typing.Union and type(None) in args:
        inner = [a for a in args if a is not type(None)]
        if len(inner) == 1:
            hint = inner[0]
    origin = typing.get_origin(hint)
    if hint is bool:
        return {"action": argparse.BooleanOptionalAction}
    if origin is tuple:
        return {"nargs": "+", "type": typing.get_args(hint)[0]}
    if origin is dict:
        return {"nargs": "+", "type": _key_value, "metavar": "KEY=VALUE"}
    if hint in (int, float):
        return {"type": hint}
    return {"type": str}


def build_parser() -> argparse.ArgumentParser:
    """
    One subcommand per command; every RunConfig key is a flag on each of them.
    Flags left out do not override the config file.
    """
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="YAML file of run configuration keys")
    hints = typing.get_type_hints(RunConfig)
    for config_field in dataclasses.fields(RunConfig):
        if config_field.name == "command":
            continue
        common.add_argument(
            f"--{to_dasherized(config_field.name)}",
            dest=config_field.name,
            default=argparse.SUPPRESS,
            **_argument_options(hints[config_field.name]),
        )

    parser = argparse.ArgumentParser(
        prog="cmelab", description="Conditional marginal effect estimation and simulation."
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    descriptions = {
        "estimate": "Estimate the conditional marginal effect curve of a CSV dataset.",
        "simulate": "Write a sample from a data-generating process to CSV.",
        "benchmark": "Run a Monte Carlo study of an estimator on a process.",
        "diagnose": "Check overlap and recommend an estimator for a CSV dataset.",
    }
    for command in COMMANDS:
        subparsers.add_parser(command, parents=[common], help=descriptions[command])
    return parser


def _output_dir(config: RunConfig) -> Path:
    directory = Path(config.output)
    directory.mkdir(parents=True, exist_ok=True)
    config.dump(directory / RESOLVED_CONFIG)
    return directory


def _write_json(path: Path, payload: typing.Any) -> None:
    path.write_text(json.dumps(to_jsonable(payload), indent=2) + "\n", encoding="utf-8")


def _load_dataset(config: RunConfig):
    if config.input is None:
        raise ValidationError(f"{config.command} needs --input")
    return ingest_csv(
        config.input, config.roles(), config.missing_policy, config.treatment_binary
    )


def cmd_estimate(config: RunConfig) -> int:
    """
    Writes curve.json, curve.csv, overlap.json and overlap_histogram.csv.
    """
    dataset = _load_dataset(config)
    curve = estimate(dataset, config.request(), n_jobs=config.threads, params=config.learner_params())
    directory = _output_dir(config)
    curve.to_json(directory / "curve.json")
    curve.to_csv(directory / "curve.csv")

    bandwidth = curve.metadata.get("bandwidth")
    spec = KernelSpec(kernel=config.kernel, bandwidth=bandwidth if bandwidth else None)
    overlap = overlap_diagnostic(dataset, curve.grid, spec, config.trim_threshold)
    overlap.to_json(directory / "overlap.json")
    overlap.histogram_frame().to_csv(directory / "overlap_histogram.csv", index=False)
    logger.info("wrote %s results to %s", config.estimator.value, directory)
    return EXIT_OK


def cmd_simulate(config: RunConfig) -> int:
    """
    Writes <dgp>_n<n>_seed<seed>.csv and a .meta.json sidecar with the
    oracle formulas.
    """
    spec = get_dgp(config.dgp, **config.dgp_params)
    dataset = sample(spec, config.n, config.seed, n_jobs=config.threads)
    directory = _output_dir(config)
    stem = f"{spec.name.value}_n{config.n}_seed{config.seed}"
    dataset.write_csv(directory / f"{stem}.csv")
    _write_json(
        directory / f"{stem}.meta.json",
        {
            "dgp": spec.name.value,
            "parameters": spec.parameters,
            "n": config.n,
            "seed": config.seed,
            "columns": list(dataset.column_names),
            "binary_treatment": spec.binary,
            "formulas": spec.formulas,
        },
    )
    return EXIT_OK


def cmd_benchmark(config: RunConfig) -> int:
    """
    Writes report.json, report.csv and timing.json.
    """
    spec = get_dgp(config.dgp, **config.dgp_params)
    report = run_mc(
        spec,
        config.request(),
        config.n,
        config.replications,
        config.seed,
        n_jobs=config.threads,
        params=config.learner_params(),
    )
    directory = _output_dir(config)
    report.to_json(directory / "report.json")
    report.to_csv(directory / "report.csv")
    _write_json(directory / "timing.json", report.runtime.to_dict())
    return EXIT_OK


def cmd_diagnose(config: RunConfig) -> int:
    """
    Writes overlap.json, overlap_histogram.csv and diagnosis.json (constancy
    test and recommended estimator).
    """
    dataset = _load_dataset(config)
    grid = config.request().resolve_grid(dataset)
    spec = KernelSpec(kernel=config.kernel, bandwidth=config.bandwidth)
    overlap = overlap_diagnostic(dataset, grid, spec, config.trim_threshold)

    try:
        bins = BinSpec.quantiles(dataset.moderator, config.n_bins)
        test = wald_constancy_test(dataset, bins, config.bin_interacted_covariates)
        constancy = {"statistic": test.statistic, "p_value": test.p_value, "df": test.df}
    except (EstimationError, ValidationError) as error:
        logger.warning("constancy test skipped: %s", error)
        constancy = {"error": str(error)}
    recommendation = recommend_estimator(dataset, config.experimental)

    directory = _output_dir(config)
    overlap.to_json(directory / "overlap.json")
    overlap.histogram_frame().to_csv(directory / "overlap_histogram.csv", index=False)
    _write_json(
        directory / "diagnosis.json",
        {
            "n": dataset.n,
            "dropped_rows": dataset.dropped_rows,
            "flagged_grid_points": int(overlap.flagged.sum()),
            "constancy_test": constancy,
            "recommended_estimator": recommendation.estimator.value,
            "reason": recommendation.reason,
        },
    )
    return EXIT_OK


HANDLERS: typing.Dict[str, typing.Callable[[RunConfig], int]] = {
    "estimate": cmd_estimate,
    "simulate": cmd_simulate,
    "benchmark": cmd_benchmark,
    "diagnose": cmd_diagnose,
}


def main(argv: typing.Optional[typing.Sequence[str]] = None) -> int:
    """Parses arguments, merges them over the config file and runs the command.

    Returns:
        int: The exit code.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_:
        return exit_.code if isinstance(exit_.code, int) else EXIT_VALIDATION

    overrides = {k: v for k, v in vars(args).items() if k not in ("config", "command")}
    if "dgp_params" in overrides:
        overrides["dgp_params"] = dict(overrides["dgp_params"])

    try:
        values = load_config(args.config) if args.config else {}
        values.update(overrides)
        values["command"] = args.command
        config = RunConfig.from_mapping(values).resolved()
        logging.basicConfig(
            level=config.log_level,
            format="%(levelname)s %(name)s: %(message)s",
            force=True,
        )
        return HANDLERS[config.command](config)
    except ValidationError as error:
        logger.error("%s", error)
        print(f"error: {error}", file=sys.stderr)
        return EXIT_VALIDATION
    except EstimationError as error:
        logger.error("%s", error)
        print(f"error: {error}", file=sys.stderr)
        return EXIT_ESTIMATION
