import argparse
import json
import logging
import os
import sys
import time
from typing import Any, Dict, List, Optional, Tuple

from .errors import ConfigError, LabError, NumericalError
from .loaders import RunManifest, run_id_for, to_serializable, write_document, write_manifest, write_table
from .run_config import RunConfig, load_config, parse_config
from .transformers import COMMAND_HANDLERS
from .validators import validate_result_table

logger = logging.getLogger(__name__)

WORKERS_ENV = "CGS_LAB_WORKERS"
DEFAULT_OUT_DIR = "results"


def resolve_workers(flag: Optional[int], cfg: RunConfig, environ: Optional[Dict[str, str]] = None) -> int:
    """
    Worker count: --workers flag, then CGS_LAB_WORKERS, then the config, then 1.

    Raises:
        ConfigError: When the environment value is not a positive integer
    """
    if flag is not None:
        return flag
    environ = os.environ if environ is None else environ
    value = environ.get(WORKERS_ENV)
    if value:
        try:
            workers = int(value)
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be a positive integer, got {value!r}", module="cli_io")
        if workers < 1:
            raise ConfigError(f"{WORKERS_ENV} must be a positive integer, got {value!r}", module="cli_io")
        return workers
    return cfg.workers or 1


def run(cfg: RunConfig, out_dir: Optional[str] = None, workers: Optional[int] = None) -> Tuple[RunManifest, str]:
    """
    Run one laboratory command and write its result files and manifest.

    Result files depend only on (config, seed): the worker count and the wall
    clock never enter them.

    Args:
        cfg: Validated run configuration
        out_dir: Output directory (overrides output.path)
        workers: Worker count (overrides CGS_LAB_WORKERS and the config)

    Returns:
        Tuple of (manifest, manifest path)

    Raises:
        LabError: Module errors, re-raised with the owning module attached
        NumericalError: When an emitted table fails validation
    """
    out_dir = out_dir or cfg.output_path or DEFAULT_OUT_DIR
    n_workers = resolve_workers(workers, cfg)
    config_document = cfg.to_dict()
    # output location and worker count do not change the results
    identity = dict(config_document, output={"format": cfg.output_format}, workers=None)
    run_id = run_id_for(identity)
    manifest = RunManifest(run_id=run_id, config=config_document, seed=cfg.effective_seed)

    logger.info(f"Run {run_id}: command={cfg.command} geometry={cfg.geometry} workers={n_workers}")
    started = time.perf_counter()
    try:
        result = COMMAND_HANDLERS[cfg.command](cfg, n_workers)
    except LabError as e:
        if e.module is None:
            e.module = cfg.command
        logger.error(f"Run {run_id} failed: {e.qualified()}")
        raise
    manifest.task_seconds["compute"] = time.perf_counter() - started

    started = time.perf_counter()
    for table, df in result.tables.items():
        is_valid, report = validate_result_table(df, table)
        for warning in report['warnings']:
            logger.warning(f"{table}: {warning}")
        if not is_valid:
            logger.error(f"{table} failed validation: {report['errors']}")
            raise NumericalError(
                f"result table '{table}' failed validation: {'; '.join(report['errors'])}",
                module=cfg.command,
                details={"table": table, "metrics": report['metrics']},
            )
    manifest.task_seconds["validate"] = time.perf_counter() - started

    started = time.perf_counter()
    document = dict(result.document, command=cfg.command, seed=cfg.seed)
    if cfg.output_format == "csv":
        for table, df in result.tables.items():
            name = f"{table}.csv"
            manifest.files[name] = write_table(df, os.path.join(out_dir, name), run_id)
        name = f"{cfg.command}.json"
        manifest.files[name] = write_document(document, os.path.join(out_dir, name), run_id)
    else:
        document["tables"] = {table: to_serializable(df) for table, df in result.tables.items()}
        name = f"{cfg.command}.json"
        manifest.files[name] = write_document(document, os.path.join(out_dir, name), run_id)
    manifest.task_seconds["write"] = time.perf_counter() - started

    path = write_manifest(manifest, out_dir)
    logger.info(f"Run {run_id} complete in {sum(manifest.task_seconds.values()):.2f}s")
    return manifest, path


def run_from_dict(config: Dict[str, Any], out_dir: Optional[str] = None, workers: Optional[int] = None) -> Dict[str, Any]:
    """Parse a config document, run it and return the manifest as a dict (used by the Airflow operator)."""
    cfg = parse_config(json.dumps(config))
    manifest, path = run(cfg, out_dir=out_dir, workers=workers)
    return dict(manifest.to_dict(), manifest_path=path)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cgs-lab",
        description="Combinatorial gauge symmetry array laboratory",
    )
    parser.add_argument("--config", required=True, metavar="PATH", help="JSON run configuration")
    parser.add_argument("--out", metavar="DIR", help="output directory (overrides output.path)")
    parser.add_argument("--workers", type=int, metavar="N", help=f"worker count (overrides {WORKERS_ENV})")
    parser.add_argument("--seed", type=int, metavar="OVERRIDE", help="replace the configured seed")
    parser.add_argument(
        "--log-level",
        default="INFO",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="root logger level",
    )
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    Command-line entry point.

    Returns:
        Exit code: 0 success, 2 config error, 3 numeric failure, 4 size guard
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.workers is not None and args.workers < 1:
            raise ConfigError(f"--workers must be >= 1, got {args.workers}", module="cli_io")
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError(f"--seed must be a non-negative integer, got {args.seed}", module="cli_io")
            cfg = cfg.with_overrides(seed=args.seed)
        _, path = run(cfg, out_dir=args.out, workers=args.workers)
    except OSError as e:
        logger.error(f"cannot read configuration: {e}")
        return ConfigError.exit_code
    except LabError as e:
        logger.error(e.qualified())
        return e.exit_code
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
