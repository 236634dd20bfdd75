#!/usr/bin/env python
"""
Render an interactive Plotly report for a finished run directory.

Usage:
  python render_report.py --run runs/stage4_seed0 --output report.html

The run directory must contain config.txt, metrics.csv and predictions.csv
as written by `python main.py train`.
"""

import argparse
from pathlib import Path

from app.logging_config import configure_logging
from app.services.plotting import write_html_report


def main() -> None:
    parser = argparse.ArgumentParser(description="Render a Plotly report from a run directory.")
    parser.add_argument(
        "--run",
        "-r",
        type=Path,
        required=True,
        help="Run directory written by the train command.",
    )
    parser.add_argument(
        "--output",
        "-o",
        type=Path,
        default=None,
        help="Path to write the rendered HTML file (default: <run>/report.html).",
    )
    parser.add_argument(
        "--open",
        action="store_true",
        help="Open the HTML file in a browser after rendering.",
    )
    args = parser.parse_args()
    configure_logging()

    if not args.run.is_dir():
        raise FileNotFoundError(f"Run directory not found: {args.run}")

    output = args.output or args.run / "report.html"
    write_html_report(args.run, output, auto_open=args.open)
    print(f"Wrote report to {output}")


if __name__ == "__main__":
    main()
