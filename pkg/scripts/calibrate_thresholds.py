"""
One-off calibration script.

Runs each stage preset for several seeds and prints the median numbers the
slow reproduction tests assert on (in-range / out-of-range MSE, extrema error,
per-cell error profile). Re-run after changing presets or the training loop,
then update the thresholds in tests/test_stage_reproduction.py.

  python -m scripts.calibrate_thresholds --seeds 5 --stages 1 2 3 4
"""

import argparse
import math
import statistics
from typing import Dict, List

from app.logging_config import configure_logging
from app.services.harness import error_at_extrema, run_stage, worst_cell_ratio
from app.services.presets import stage_preset

PI = math.pi


def summarize_stage(stage: int, seeds: int) -> Dict[str, float]:
    rows: List[Dict[str, float]] = []
    for seed in range(seeds):
        table = run_stage(stage_preset(stage, seed=seed)).evaluation
        rows.append(
            {
                "mse_eval": table.mse,
                "mse_pi": table.mse_between(-PI, PI),
                "mse_pi_2pi": table.mse_between(PI, 2 * PI),
                "mse_5pi": table.mse_between(-5 * PI, 5 * PI),
                "extrema_err_5pi": error_at_extrema(table, -5 * PI, 5 * PI),
                "worst_cell_ratio_5pi": worst_cell_ratio(table, -5 * PI, 5 * PI),
            }
        )
    return {key: statistics.median(r[key] for r in rows) for key in rows[0]}


def main() -> None:
    parser = argparse.ArgumentParser(description="Print median acceptance metrics per stage.")
    parser.add_argument("--seeds", type=int, default=5)
    parser.add_argument("--stages", type=int, nargs="+", default=[1, 2, 3, 4])
    args = parser.parse_args()
    configure_logging()

    for stage in args.stages:
        medians = summarize_stage(stage, args.seeds)
        print(f"stage {stage}: " + ", ".join(f"{k}={v:.5f}" for k, v in medians.items()))


if __name__ == "__main__":
    main()
