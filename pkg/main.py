#!/usr/bin/env python3
"""
Main entry point for kdvduo.

Runs one experiment on the coupled KdV system (simulation, adjoint solve,
critical-length atlas, spectral witness, Gramian margin, HUM control,
nonlinear control or the verification suite) or sweeps one over a parameter
axis. Every run writes a manifest, CSV tables and gnuplot scripts into its
own run directory, and can optionally be uploaded to S3 and MongoDB.

Usage:
    python main.py <command> --config run.json [options]

Exit status: 0 on success, 2 when an iterative solver did not converge,
1 on invalid input or any other failure.

Environment variables are loaded from .env file automatically.
See config.py for all available configuration options.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import Any, Dict, List, Optional, Tuple

from config import Config, ExperimentConfig, canonical_experiment
from experiments import RunResult, parse_values, run_experiment, sweep, SWEEP_AXES
from mongo_uploader import MongoUploader
from s3_uploader import S3Uploader
from stats_calculator import calculate_run_stats, log_run_stats

COMMANDS = ("simulate", "adjoint", "atlas", "witness", "margin", "control", "nlcontrol",
            "verify", "sweep")


def setup_logging(log_level: str) -> None:
    """Configure logging with the specified level."""
    level = getattr(logging, log_level, logging.INFO)
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Boundary control experiments for the Gear-Grimshaw coupled KdV system",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s simulate --config sim.json              # Forward solve, trajectory CSV
  %(prog)s atlas --config atlas.json               # Critical-length candidates up to L_max
  %(prog)s control --config hum.json --seed 7      # HUM control, seed overridden
  %(prog)s verify --config base.json --out runs    # Verification suite into ./runs
  %(prog)s sweep --config margin.json --axis L --values 3:4:20
  %(prog)s control --config hum.json --output s3,mongo

Defaults not given in the config file: control=FourControl, seed=0,
tolerances hum_tol=1e-3 hum_maxit=300 picard_tol=1e-10 picard_maxit=50
outer_tol=1e-3 outer_maxit=20 shift=0 lanczos_steps=60, init=target="zero",
amplitude=1, L_max=20, include_zero=true, p_grid 0..50 (201 points),
damping=1, self_terms=false, adjoint_mode=transpose, verify_level=quick.
KDVDUO_THREADS sets the number of sweep workers (default 1).
        """
    )

    parser.add_argument(
        "command",
        choices=COMMANDS,
        help="Experiment to run, or 'sweep' to repeat the config's experiment over --axis"
    )

    parser.add_argument(
        "--config", "-c",
        required=True,
        metavar="PATH",
        help="JSON experiment configuration"
    )

    parser.add_argument(
        "--out",
        metavar="DIR",
        help="Base directory for run directories (default: config output_dir, then KDVDUO_OUTPUT_DIR)"
    )

    parser.add_argument(
        "--seed",
        type=int,
        help="Override the config seed"
    )

    parser.add_argument(
        "--axis",
        choices=SWEEP_AXES,
        help="Sweep axis (sweep only)"
    )

    parser.add_argument(
        "--values",
        metavar="LIST",
        help="Sweep values: comma-separated, or start:stop:num (sweep only)"
    )

    parser.add_argument(
        "--output", "-o",
        type=str,
        default="json",
        help="Output options (comma-separated): json, s3, mongo. Default: json"
    )

    parser.add_argument(
        "--log-level",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Override log level from environment"
    )

    return parser


def parse_arguments(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """Parse command line arguments."""
    return build_parser().parse_args(argv)


def parse_output_options(output_arg: str) -> Tuple[bool, bool]:
    """
    Parse output argument to determine S3 and MongoDB upload flags.

    Returns:
        Tuple of (upload_to_s3, upload_to_mongo) booleans
    """
    upload_to_s3 = False
    upload_to_mongo = False

    for opt in (o.strip().lower() for o in output_arg.split(",")):
        if opt == "s3":
            upload_to_s3 = True
        elif opt == "mongo":
            upload_to_mongo = True
        elif opt in ("json", ""):
            continue
        else:
            logging.warning("⚠️ Unknown output option '%s', ignoring", opt)

    return upload_to_s3, upload_to_mongo


def load_experiment(args: argparse.Namespace) -> ExperimentConfig:
    """Experiment config with the subcommand and --seed applied on top of the file."""
    overrides: Dict[str, Any] = {}
    if args.command != "sweep":
        overrides["experiment"] = canonical_experiment(args.command)
    if args.seed is not None:
        overrides["seed"] = args.seed
    return ExperimentConfig.from_json(args.config, overrides)


def publish(results: List[RunResult], config: Config, upload_to_s3: bool, upload_to_mongo: bool,
            upload_root: str) -> None:
    if upload_to_s3:
        urls = S3Uploader(config).upload_run_dir(upload_root)
        if urls:
            logging.info("✅ Artifacts uploaded to S3.")
        else:
            logging.warning("⚠️ S3 upload failed or skipped, but local files saved.")

    if upload_to_mongo:
        with MongoUploader(config) as mongo_uploader:
            mongo_stats = mongo_uploader.upload_manifests([r.manifest for r in results])
            if mongo_stats["inserted"] + mongo_stats["updated"] > 0:
                logging.info("✅ Manifests uploaded to MongoDB successfully.")
            else:
                logging.warning("⚠️ MongoDB upload failed, but local files saved.")


def exit_code_for(results: List[RunResult]) -> int:
    codes = [r.exit_code for r in results]
    if 1 in codes:
        return 1
    return 2 if 2 in codes else 0


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point."""
    try:
        args = parse_arguments(argv)
    except SystemExit as e:
        # usage errors are invalid input; 2 is reserved for non-convergence
        return 0 if e.code in (0, None) else 1

    try:
        config = Config.from_env()

        setup_logging(args.log_level or config.log_level)
        upload_to_s3, upload_to_mongo = parse_output_options(args.output)

        cfg = load_experiment(args)
        base_dir = args.out or cfg.output_dir or config.output_dir

        logging.info("🚀 Starting kdvduo %s", args.command)
        logging.info("Experiment: %s, output: %s", cfg.experiment, base_dir)
        logging.info("S3 upload: %s", "enabled" if upload_to_s3 else "disabled")
        logging.info("MongoDB upload: %s", "enabled" if upload_to_mongo else "disabled")

        if args.command == "sweep":
            if not args.axis:
                raise ValueError("--axis is required for sweep")
            results = sweep(cfg, args.axis, parse_values(args.values), base_dir,
                            threads=config.threads)
            upload_root = os.path.dirname(results[0].run_dir)
        else:
            results = [run_experiment(cfg, base_dir)]
            upload_root = results[0].run_dir

        publish(results, config, upload_to_s3, upload_to_mongo, upload_root)
        log_run_stats(calculate_run_stats(r.manifest for r in results))

        code = exit_code_for(results)
        if code == 2:
            logging.error("❌ Run finished without convergence; see the manifest summary.")
        else:
            logging.info("✅ %s completed successfully.", args.command)
        return code

    except ValueError as e:
        logging.error("❌ Configuration error: %s", e)
        return 1
    except Exception as e:
        logging.error("💥 Unexpected error: %s", e)
        return 1


if __name__ == "__main__":
    sys.exit(main())
