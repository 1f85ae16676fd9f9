import argparse
import asyncio
import json
import logging
import time
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv
from pydantic import ValidationError

from quasi2d.artifacts import write_manifest, write_report
from quasi2d.checks import CheckResult
from quasi2d.config import COMMANDS, Config, RunConfig, load_run_config
from quasi2d.database import RunLedger
from quasi2d.errors import InputError, NumericalError
from quasi2d.handlers.base import CommandOutcome, RunContext
from quasi2d.handlers.counting import counting_command
from quasi2d.handlers.coupling import coupling_command
from quasi2d.handlers.evolve2d import evolve2d_command
from quasi2d.handlers.reduce3d import reduce3d_command
from quasi2d.handlers.regimes import regimes_command
from quasi2d.handlers.scatter import scatter_command
from quasi2d.handlers.transverse import transverse_command
from quasi2d.handlers.verify import verify_command

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INPUT = 2

HANDLERS = {
    "scatter": scatter_command,
    "transverse": transverse_command,
    "coupling": coupling_command,
    "regimes": regimes_command,
    "evolve2d": evolve2d_command,
    "reduce3d": reduce3d_command,
    "counting": counting_command,
    "verify": verify_command,
}


def configure_logging(level: str):
    logging.basicConfig(
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        level=level,
    )
    logging.getLogger().setLevel(level)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run document")
    common.add_argument("--output", metavar="DIR", help="output directory")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--jobs", type=int, help="worker processes for sweeps")
    common.add_argument("--verbose", action="store_true", help="debug logging")
    common.add_argument("--no-ledger", action="store_true", help="do not record the run")

    parser = argparse.ArgumentParser(prog="quasi2d", description="Quasi-2D condensate toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=f"run the {name} pipeline")
    history = sub.add_parser("history", help="list recent runs from the ledger")
    history.add_argument("--limit", type=int, default=20)
    history.add_argument("--filter", dest="only", choices=COMMANDS, help="only this command")
    history.add_argument("--verbose", action="store_true")
    return parser


def print_table(rows: list[CheckResult]):
    print(f"{'quantity':<56} {'value':>14} {'bound':>14}  result")
    for r in rows:
        bound = "" if r.bound is None else f"{r.bound:.4g}"
        print(f"{r.quantity:<56} {r.value:>14.6g} {bound:>14}  {'PASS' if r.passed else 'FAIL'}")
    failed = sum(not r.passed for r in rows)
    print(f"{len(rows) - failed}/{len(rows)} checks passed")


async def record_run(env: Config, cfg: RunConfig, rows: list[CheckResult], status: str,
                     exit_code: int, wall_time: float) -> Optional[int]:
    ledger = RunLedger(env.db_path)
    await ledger.init()
    try:
        run_id = await ledger.record_run(cfg.command, cfg.resolved(), cfg.seed, status,
                                         exit_code, wall_time)
        await ledger.add_results(run_id, [r.to_dict() for r in rows])
        return run_id
    finally:
        await ledger.close()


async def show_history(env: Config, limit: int, command: Optional[str]):
    ledger = RunLedger(env.db_path)
    await ledger.init()
    try:
        runs = await ledger.get_recent_runs(limit, command)
        total = await ledger.get_run_count()
        for run in runs:
            failed = await ledger.get_failed_results(run["id"])
            stamp = time.strftime("%Y-%m-%d %H:%M:%S", time.localtime(run["created_at"]))
            print(f"#{run['id']:<5} {stamp}  {run['command']:<11} seed={run['seed']:<6} "
                  f"{run['status']:<7} exit={run['exit_code']}  failed={len(failed)}")
        print(f"{len(runs)} of {total} runs shown")
    finally:
        await ledger.close()


def execute(cfg: RunConfig, jobs: int) -> tuple[CommandOutcome, RunContext]:
    ctx = RunContext(cfg, cfg.params(), Path(cfg.output_dir), jobs)
    logger.info(f"Running {cfg.command} (seed {cfg.seed}, {jobs} job(s)) into {cfg.output_dir}")
    return HANDLERS[cfg.command](ctx), ctx


def main(argv: Optional[list] = None) -> int:
    """Entry point."""
    load_dotenv()
    args = build_parser().parse_args(argv)
    try:
        env = Config.from_env()
    except ValueError as e:
        configure_logging("INFO")
        logger.error(f"Bad environment setting: {e}")
        return EXIT_INPUT
    configure_logging("DEBUG" if args.verbose else env.log_level)

    if args.command == "history":
        asyncio.run(show_history(env, args.limit, args.only))
        return EXIT_OK

    try:
        cfg = load_run_config(args.command, env, args.config, args.output, args.seed)
    except (InputError, ValidationError, json.JSONDecodeError, OSError) as e:
        logger.error(f"Invalid configuration for {args.command}: {e}")
        return EXIT_INPUT

    jobs = args.jobs or env.jobs
    if jobs < 1:
        logger.error(f"--jobs must be at least 1, got {jobs}")
        return EXIT_INPUT

    start = time.perf_counter()
    outcome, ctx, status = CommandOutcome(), None, "error"
    try:
        outcome, ctx = execute(cfg, jobs)
        status = "pass" if outcome.passed else "fail"
        exit_code = EXIT_OK if outcome.passed else EXIT_FAILED
    except InputError as e:
        logger.error(f"{cfg.command}: {e}")
        exit_code = EXIT_INPUT
    except NumericalError as e:
        logger.error(f"{cfg.command} failed: {e}")
        exit_code = EXIT_FAILED
    except Exception as e:
        logger.exception(f"Unexpected error in {cfg.command}: {e}")
        exit_code = EXIT_FAILED
    wall_time = time.perf_counter() - start

    if ctx is not None:
        output = Path(cfg.output_dir)
        write_report(output / "report.json", outcome.rows, command=cfg.command, seed=cfg.seed,
                     config=cfg.resolved(), summary=outcome.summary)
        summary = {"pass": outcome.passed, "checks": len(outcome.rows),
                   "failed": [r.quantity for r in outcome.rows if not r.passed]}
        write_manifest(output, cfg.resolved(), wall_time, summary, [*ctx.files, "report.json"])
        print_table(outcome.rows)

    if env.ledger and not args.no_ledger:
        try:
            run_id = asyncio.run(record_run(env, cfg, outcome.rows, status, exit_code, wall_time))
            logger.info(f"Recorded run #{run_id} in {env.db_path}")
        except Exception as e:
            logger.warning(f"Could not record run in ledger: {e}")

    logger.info(f"{cfg.command} finished in {wall_time:.2f}s with exit code {exit_code}")
    return exit_code
