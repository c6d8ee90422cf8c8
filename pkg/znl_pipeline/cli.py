"""
Command-line interface: znl {generate,fit,simulate,diagnose,pipeline,sweep}

Exit codes: 0 ok, 1 usage / configuration, 2 data error, 3 numeric error.
"""

import argparse
import sys
from typing import Any, Optional, Sequence

from znl_pipeline.config import PipelineConfig
from znl_pipeline.errors import ConfigError, ZnlError
from znl_pipeline.resources.duckdb_resource import DuckDBResource
from znl_pipeline.stages import (
    StageResult,
    cmd_diagnose,
    cmd_fit,
    cmd_generate,
    cmd_pipeline,
    cmd_simulate,
    cmd_sweep,
    store_for,
)


# which seed field --seed overrides for each subcommand
SEED_FIELDS = {
    "generate": ("generation_seed",),
    "fit": (),
    "simulate": ("simulation_seed",),
    "diagnose": ("diagnostics_seed",),
    "sweep": ("diagnostics_seed",),
    "pipeline": ("generation_seed", "simulation_seed", "diagnostics_seed"),
}


class ZnlArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that reports usage errors as ConfigError instead of exiting."""

    def error(self, message: str):
        raise ConfigError(f"{self.prog}: {message}")


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override its values")
    parser.add_argument("--out", help="Output directory (default: $ZNL_OUTPUT_DIR or data/output)")
    parser.add_argument("--seed", type=int, help="Seed for this stage's randomness")
    parser.add_argument("--delta", type=float, help="Cover radius")
    parser.add_argument("--gamma", type=float, help="Ridge regularization")
    parser.add_argument("--eta", type=float, help="Bandwidth quantile")
    parser.add_argument("--n", type=int, help="Number of trajectory samples to generate")
    parser.add_argument("--steps", type=int, help="Simulation length")
    parser.add_argument("--lags", type=int, help="Autocorrelation lag horizon")
    parser.add_argument(
        "--threads", type=int, help="Worker threads for edge fitting (capped by ZNL_THREADS)"
    )
    parser.add_argument(
        "--ledger",
        help="DuckDB ledger file (default: $ZNL_LEDGER_DATABASE or data/znl_ledger.duckdb)",
    )
    parser.add_argument(
        "--no-ledger", action="store_true", help="Always rerun; record nothing in the ledger"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = ZnlArgumentParser(
        prog="znl",
        description="Zero-noise-limit Markov reconstruction of a dynamical system",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=ZnlArgumentParser)

    generate = sub.add_parser("generate", help="Generate (or import) a trajectory")
    _common_flags(generate)
    generate.add_argument("--system", help="lorenz63, henon, lorenz96 or csv")
    generate.add_argument("--input", help="CSV series to import (implies --system csv)")
    generate.add_argument("--header", action="store_true", default=None, help="Write x0,x1,...")

    fit = sub.add_parser("fit", help="Fit the Markov model to a series")
    _common_flags(fit)
    fit.add_argument("--series", help="Series CSV (default: <out>/series.csv)")

    simulate = sub.add_parser("simulate", help="Simulate a fitted model")
    _common_flags(simulate)
    simulate.add_argument("--model", help="Model JSON (default: <out>/model.json)")

    diagnose = sub.add_parser("diagnose", help="Compare a simulation with the training series")
    _common_flags(diagnose)
    diagnose.add_argument("--model", help="Model JSON (default: <out>/model.json)")
    diagnose.add_argument("--run", help="Run CSV (default: <out>/run.csv)")
    diagnose.add_argument("--series", help="Reference series CSV (default: the model's own)")

    pipeline = sub.add_parser("pipeline", help="generate -> fit -> simulate -> diagnose")
    _common_flags(pipeline)
    pipeline.add_argument("--system", help="lorenz63, henon, lorenz96 or csv")
    pipeline.add_argument("--input", help="CSV series to import (implies --system csv)")
    pipeline.add_argument("--header", action="store_true", default=None, help="Write x0,x1,...")

    sweep = sub.add_parser("sweep", help="Spread statistics over a range of cover radii")
    _common_flags(sweep)
    sweep.add_argument("--series", help="Series CSV (default: <out>/series.csv)")
    return parser


def config_from_args(args: argparse.Namespace) -> PipelineConfig:
    overrides: dict[str, Any] = {
        "output_dir": args.out,
        "delta": args.delta,
        "gamma": args.gamma,
        "eta": args.eta,
        "n_samples": args.n,
        "simulation_steps": args.steps,
        "lags": args.lags,
        "threads": args.threads,
        "system": getattr(args, "system", None),
        "header": getattr(args, "header", None),
    }
    if args.seed is not None:
        for offset, name in enumerate(SEED_FIELDS[args.command]):
            overrides[name] = args.seed + offset
    csv_input = getattr(args, "input", None)
    if csv_input is not None:
        overrides["csv_path"] = csv_input
        overrides["system"] = overrides["system"] or "csv"
    return PipelineConfig.load_json(args.config, **overrides)


def ledger_from_args(args: argparse.Namespace) -> Optional[DuckDBResource]:
    if args.no_ledger:
        return None
    if args.ledger:
        return DuckDBResource(database_path=args.ledger)
    return DuckDBResource()


def _report(result: StageResult) -> None:
    status = "skipped (unchanged)" if result.skipped else ("partial" if result.partial else "ok")
    print(f"{result.stage}: {status}")
    for name, path in result.outputs.items():
        print(f"  {name}: {path}")
    if result.partial:
        print(f"  failure: {result.details.get('failure')}", file=sys.stderr)


def run_command(args: argparse.Namespace) -> int:
    config = config_from_args(args)
    ledger = ledger_from_args(args)
    store = store_for(config)

    if args.command == "pipeline":
        results = cmd_pipeline(config, store=store, ledger=ledger)
    elif args.command == "generate":
        results = [cmd_generate(config, store=store, ledger=ledger)]
    elif args.command == "fit":
        results = [cmd_fit(config, args.series, store=store, ledger=ledger)]
    elif args.command == "simulate":
        results = [cmd_simulate(config, args.model, store=store, ledger=ledger)]
    elif args.command == "diagnose":
        results = [
            cmd_diagnose(config, args.model, args.run, args.series, store=store, ledger=ledger)
        ]
    else:
        results = [cmd_sweep(config, args.series, store=store, ledger=ledger)]

    for result in results:
        _report(result)
    return max((result.exit_code for result in results), default=0)


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return run_command(args)
    except ZnlError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
