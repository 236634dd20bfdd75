import argparse
import logging
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Optional, Sequence, Tuple

import pandas as pd

from app.config import settings
from app.config_file import parse_config
from app.env import load_dataset_csv
from app.errors import ConfigError, ContractViolation, NumericalError
from app.services.artifacts import ACTOR_FILE, evaluation_frame, load_run_config, write_run
from app.services.harness import build_agent, evaluate, make_grid, run_stage
from app.services.plotting import write_plots
from app.services.presets import StageConfig, stage_preset

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3

SUMMARY_COLUMNS = ["seed", "final_eval_mse", "wall_clock_s"]


def _resolve_config(args: argparse.Namespace) -> StageConfig:
    config = parse_config(args.config) if args.config else stage_preset(args.stage)
    if args.seed is not None:
        config = config.model_copy(update={"seed": args.seed})
    return config


def _default_out(config: StageConfig) -> Path:
    return settings.out / f"stage{config.stage_id}_seed{config.seed}"


def cmd_train(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    dataset = load_dataset_csv(Path(args.dataset)) if args.dataset else None
    out_dir = Path(args.out) if args.out else _default_out(config)

    artifacts = run_stage(config, dataset=dataset)
    write_run(artifacts, out_dir)
    print(f"final_eval_mse={artifacts.final_eval_mse:.6g}")
    print(f"wall_clock_s={artifacts.wall_clock_s:.2f}")
    print(f"run_dir={out_dir}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    run_dir = Path(args.run)
    config = load_run_config(run_dir)
    actor_path = run_dir / ACTOR_FILE
    if not actor_path.is_file():
        raise ContractViolation(f"Missing run artifact: {actor_path}")

    agent = build_agent(config, seed=config.seed)
    agent.load_actor(actor_path)
    lo = config.eval_lo if args.lo is None else args.lo
    hi = config.eval_hi if args.hi is None else args.hi
    points = config.eval_points if args.points is None else args.points
    table = evaluate(agent, config.feature_spec, make_grid(lo, hi, points), config.reward_kernel)

    out_path = Path(args.out) if args.out else run_dir / "eval_predictions.csv"
    evaluation_frame(table).to_csv(out_path, index=False)
    print(f"eval_mse={table.mse:.6g}")
    print(f"predictions={out_path}")
    return EXIT_OK


def _sweep_one(job: Tuple[StageConfig, str]) -> Tuple[int, float, float]:
    config, out_dir = job
    artifacts = run_stage(config)
    write_run(artifacts, Path(out_dir))
    return config.seed, artifacts.final_eval_mse, artifacts.wall_clock_s


def cmd_sweep(args: argparse.Namespace) -> int:
    if args.seeds < 1:
        raise ConfigError("--seeds must be >= 1")
    base = _resolve_config(args)
    first_seed = base.seed
    root = Path(args.out) if args.out else settings.out / f"stage{base.stage_id}_sweep"
    jobs = [
        (base.model_copy(update={"seed": first_seed + i}), str(root / f"seed_{first_seed + i}"))
        for i in range(args.seeds)
    ]
    workers = args.workers or settings.sweep_workers

    started = time.perf_counter()
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_one, jobs))
    else:
        results = [_sweep_one(job) for job in jobs]

    summary = pd.DataFrame(results, columns=SUMMARY_COLUMNS).sort_values("seed")
    root.mkdir(parents=True, exist_ok=True)
    summary.to_csv(root / "summary.csv", index=False)
    median = statistics.median(summary["final_eval_mse"])
    logger.info("Sweep of %d seeds finished in %.1fs", len(jobs), time.perf_counter() - started)
    print(f"median_final_eval_mse={median:.6g}")
    print(f"summary={root / 'summary.csv'}")
    return EXIT_OK


def cmd_plot(args: argparse.Namespace) -> int:
    paths = write_plots(Path(args.run), Path(args.out) if args.out else None)
    for path in paths:
        print(path)
    return EXIT_OK


def _add_config_source(parser: argparse.ArgumentParser) -> None:
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--stage", type=int, choices=(1, 2, 3, 4), help="Stage preset to run (1-4).")
    source.add_argument("--config", type=Path, help="Flat key=value config file (defaults: stage 4).")
    parser.add_argument("--seed", type=int, default=None, help="Override the config seed.")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bandit-regressor",
        description="Regression as a contextual bandit: actor-critic on a noisy sine.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="Run one stage or config and write its artifacts.")
    _add_config_source(train)
    train.add_argument("--out", type=Path, help="Run directory (default: $BANDIT_REGRESSOR_OUT/stage<K>_seed<S>).")
    train.add_argument("--dataset", type=Path, help="Train on an x,y CSV instead of sampling one.")
    train.set_defaults(handler=cmd_train)

    ev = sub.add_parser("eval", help="Re-evaluate a saved run on a (new) grid.")
    ev.add_argument("--run", type=Path, required=True, help="Run directory written by train.")
    ev.add_argument("--lo", type=float, default=None, help="Grid start (default: the run's eval_lo).")
    ev.add_argument("--hi", type=float, default=None, help="Grid end (default: the run's eval_hi).")
    ev.add_argument("--points", type=int, default=None, help="Grid size (default: the run's eval_points).")
    ev.add_argument("--out", type=Path, help="Output CSV (default: <run>/eval_predictions.csv).")
    ev.set_defaults(handler=cmd_eval)

    sweep = sub.add_parser("sweep", help="Run several seeds and summarise final eval MSE.")
    _add_config_source(sweep)
    sweep.add_argument("--seeds", type=int, required=True, help="Number of consecutive seeds to run.")
    sweep.add_argument("--workers", type=int, default=None, help="Parallel processes (default: settings).")
    sweep.add_argument("--out", type=Path, help="Sweep root directory.")
    sweep.set_defaults(handler=cmd_sweep)

    plot = sub.add_parser("plot", help="Write prediction/error/loss SVGs for a run directory.")
    plot.add_argument("--run", type=Path, required=True, help="Run directory written by train.")
    plot.add_argument("--out", type=Path, help="Output directory (default: the run directory).")
    plot.set_defaults(handler=cmd_plot)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse has already printed usage; keep its exit code (2 for errors, 0 for --help).
        return int(exc.code or 0)

    handler: Callable[[argparse.Namespace], int] = args.handler
    try:
        return handler(args)
    except NumericalError as exc:
        logger.error("Numerical failure: %s", exc)
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError) as exc:
        # ConfigError / ContractViolation and unreadable files are caller errors.
        logger.error("%s", exc)
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
