"""
Figures for a finished run directory: static SVG panels written directly as
XML, and an interactive Plotly report with the same three panels.
"""

import logging
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import plotly.graph_objects as go
import plotly.io as pio
from plotly.subplots import make_subplots

from app.services.artifacts import load_metrics, load_predictions, load_run_config

logger = logging.getLogger(__name__)

# Simple, vivid palette to keep charts readable.
PALETTE = ["#2563eb", "#10b981", "#f59e0b", "#ef4444", "#8b5cf6", "#0ea5e9"]
INK = "#0f172a"
FONT = "Inter, Arial, sans-serif"

WIDTH, HEIGHT = 720, 360
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 20, 40, 45


@dataclass
class _Frame:
    """Maps data coordinates onto the plot area of the canvas."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def _span(self, lo: float, hi: float) -> Tuple[float, float]:
        return (lo, hi) if hi > lo else (lo - 0.5, hi + 0.5)

    def px(self, x: np.ndarray) -> np.ndarray:
        lo, hi = self._span(self.x_min, self.x_max)
        return MARGIN_L + (np.asarray(x) - lo) / (hi - lo) * (WIDTH - MARGIN_L - MARGIN_R)

    def py(self, y: np.ndarray) -> np.ndarray:
        lo, hi = self._span(self.y_min, self.y_max)
        return HEIGHT - MARGIN_B - (np.asarray(y) - lo) / (hi - lo) * (HEIGHT - MARGIN_T - MARGIN_B)


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _canvas(title: str, frame: _Frame) -> Tuple[ET.Element, ET.Element]:
    svg = ET.Element(
        "svg",
        xmlns="http://www.w3.org/2000/svg",
        width=str(WIDTH),
        height=str(HEIGHT),
        viewBox=f"0 0 {WIDTH} {HEIGHT}",
    )
    ET.SubElement(svg, "rect", x="0", y="0", width=str(WIDTH), height=str(HEIGHT), fill="white")
    heading = ET.SubElement(svg, "text", x=str(MARGIN_L), y="24", fill=INK, style=f"font: 16px {FONT}")
    heading.text = title
    plot = ET.SubElement(
        svg,
        "g",
        {
            "class": "plot",
            "data-x-min": repr(float(frame.x_min)),
            "data-x-max": repr(float(frame.x_max)),
            "data-y-min": repr(float(frame.y_min)),
            "data-y-max": repr(float(frame.y_max)),
        },
    )
    return svg, plot


def _axes(plot: ET.Element, frame: _Frame, x_label: str, y_label: str) -> None:
    left, right = MARGIN_L, WIDTH - MARGIN_R
    top, bottom = MARGIN_T, HEIGHT - MARGIN_B
    axes = ET.SubElement(plot, "g", {"class": "axes", "stroke": INK, "stroke-width": "1"})
    ET.SubElement(axes, "line", x1=str(left), y1=str(bottom), x2=str(right), y2=str(bottom))
    ET.SubElement(axes, "line", x1=str(left), y1=str(top), x2=str(left), y2=str(bottom))

    labels = ET.SubElement(plot, "g", {"class": "labels", "fill": INK, "style": f"font: 11px {FONT}"})
    for text, x, y, anchor in (
        (_fmt(frame.x_min), left, bottom + 16, "start"),
        (_fmt(frame.x_max), right, bottom + 16, "end"),
        (_fmt(frame.y_min), left - 6, bottom, "end"),
        (_fmt(frame.y_max), left - 6, top + 4, "end"),
        (x_label, (left + right) / 2, bottom + 34, "middle"),
        (y_label, left - 6, top - 8, "end"),
    ):
        node = ET.SubElement(labels, "text", {"x": f"{x:.2f}", "y": f"{y:.2f}", "text-anchor": anchor})
        node.text = text


def _polyline(plot: ET.Element, frame: _Frame, xs, ys, color: str, name: str) -> None:
    points = " ".join(f"{px:.2f},{py:.2f}" for px, py in zip(frame.px(xs), frame.py(ys)))
    ET.SubElement(
        plot,
        "polyline",
        {"points": points, "fill": "none", "stroke": color, "stroke-width": "2", "data-series": name},
    )


def _legend(plot: ET.Element, entries: Sequence[Tuple[str, str]]) -> None:
    legend = ET.SubElement(plot, "g", {"class": "legend", "style": f"font: 11px {FONT}"})
    x = WIDTH - MARGIN_R - 150
    for i, (name, color) in enumerate(entries):
        y = MARGIN_T + 6 + 16 * i
        ET.SubElement(legend, "rect", x=str(x), y=str(y - 8), width="14", height="4", fill=color)
        label = ET.SubElement(legend, "text", x=str(x + 20), y=str(y), fill=INK)
        label.text = name


def _write(svg: ET.Element, path: Path) -> Path:
    ET.ElementTree(svg).write(path, encoding="utf-8", xml_declaration=True)
    return path


def _extent(*columns: np.ndarray) -> Tuple[float, float]:
    values = np.concatenate([np.asarray(c, dtype=np.float64) for c in columns])
    values = values[np.isfinite(values)]
    if values.size == 0:
        return 0.0, 1.0
    return float(values.min()), float(values.max())


def write_prediction_svg(predictions: pd.DataFrame, train_range: Tuple[float, float], path: Path) -> Path:
    x = predictions["x"].to_numpy()
    frame = _Frame(*_extent(x), *_extent(predictions["y_true"], predictions["y_pred"]))
    svg, plot = _canvas("Prediction vs sin(x)", frame)

    lo, hi = max(train_range[0], frame.x_min), min(train_range[1], frame.x_max)
    if hi > lo:
        left, right = frame.px(np.array([lo, hi]))
        ET.SubElement(
            plot,
            "rect",
            {
                "class": "train-range",
                "x": f"{left:.2f}",
                "y": str(MARGIN_T),
                "width": f"{right - left:.2f}",
                "height": str(HEIGHT - MARGIN_T - MARGIN_B),
                "fill": PALETTE[1],
                "fill-opacity": "0.12",
            },
        )
    _axes(plot, frame, "x", "y")
    _polyline(plot, frame, x, predictions["y_true"], PALETTE[0], "y_true")
    _polyline(plot, frame, x, predictions["y_pred"], PALETTE[3], "y_pred")
    _legend(plot, [("sin(x)", PALETTE[0]), ("prediction", PALETTE[3])])
    return _write(svg, path)


def write_error_svg(predictions: pd.DataFrame, path: Path) -> Path:
    x = predictions["x"].to_numpy()
    err = predictions["abs_err"].to_numpy()
    _, err_max = _extent(err)
    frame = _Frame(*_extent(x), 0.0, err_max)
    svg, plot = _canvas("Absolute error vs x", frame)
    _axes(plot, frame, "x", "|error|")
    _polyline(plot, frame, x, err, PALETTE[3], "abs_err")
    return _write(svg, path)


def write_losses_svg(metrics: pd.DataFrame, path: Path) -> Path:
    epochs = metrics["epoch"].to_numpy()
    critic = metrics["critic_loss"].to_numpy()
    actor = metrics["actor_loss"].to_numpy()
    x_min, x_max = _extent(epochs) if len(epochs) else (0.0, 1.0)
    frame = _Frame(x_min, x_max, *_extent(critic, actor))
    svg, plot = _canvas("Training losses", frame)
    _axes(plot, frame, "epoch", "loss")
    _polyline(plot, frame, epochs, critic, PALETTE[0], "critic_loss")
    _polyline(plot, frame, epochs, actor, PALETTE[2], "actor_loss")
    _legend(plot, [("critic loss", PALETTE[0]), ("actor loss", PALETTE[2])])
    return _write(svg, path)


def write_plots(run_dir: Path, out_dir: Optional[Path] = None) -> List[Path]:
    """Render prediction.svg, error.svg and losses.svg for a run directory."""
    run_dir = Path(run_dir)
    out_dir = Path(out_dir) if out_dir else run_dir
    config = load_run_config(run_dir)
    predictions = load_predictions(run_dir)
    metrics = load_metrics(run_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    paths = [
        write_prediction_svg(predictions, (config.train_lo, config.train_hi), out_dir / "prediction.svg"),
        write_error_svg(predictions, out_dir / "error.svg"),
        write_losses_svg(metrics, out_dir / "losses.svg"),
    ]
    logger.info("Wrote %d plots to %s", len(paths), out_dir)
    return paths


def build_report_figure(run_dir: Path) -> go.Figure:
    run_dir = Path(run_dir)
    config = load_run_config(run_dir)
    predictions = load_predictions(run_dir)
    metrics = load_metrics(run_dir)

    fig = make_subplots(
        rows=3,
        cols=1,
        subplot_titles=("Prediction vs sin(x)", "Absolute error vs x", "Training losses"),
        vertical_spacing=0.09,
    )
    fig.add_trace(
        go.Scatter(x=predictions["x"], y=predictions["y_true"], mode="lines", name="sin(x)",
                   line={"width": 2.4, "color": PALETTE[0]}),
        row=1, col=1,
    )
    fig.add_trace(
        go.Scatter(x=predictions["x"], y=predictions["y_pred"], mode="lines", name="prediction",
                   line={"width": 2.4, "color": PALETTE[3]}),
        row=1, col=1,
    )
    fig.add_vrect(
        x0=config.train_lo, x1=config.train_hi, fillcolor=PALETTE[1], opacity=0.12, line_width=0, row=1, col=1
    )
    fig.add_trace(
        go.Scatter(x=predictions["x"], y=predictions["abs_err"], mode="lines", name="|error|",
                   line={"width": 1.8, "color": PALETTE[3]}),
        row=2, col=1,
    )
    fig.add_trace(
        go.Scatter(x=metrics["epoch"], y=metrics["critic_loss"], mode="lines", name="critic loss",
                   line={"width": 2.0, "color": PALETTE[0]}),
        row=3, col=1,
    )
    fig.add_trace(
        go.Scatter(x=metrics["epoch"], y=metrics["actor_loss"], mode="lines", name="actor loss",
                   line={"width": 2.0, "color": PALETTE[2]}),
        row=3, col=1,
    )

    # Styling for a clean white background and consistent aesthetic.
    fig.update_layout(
        title={"text": f"Stage {config.stage_id} (seed {config.seed})", "x": 0.05, "xanchor": "left", "font": {"size": 18}},
        template="plotly_white",
        plot_bgcolor="white",
        paper_bgcolor="white",
        font={"family": FONT, "size": 14, "color": INK},
        margin={"l": 60, "r": 30, "t": 80, "b": 50},
        height=1000,
        hovermode="x unified",
    )
    return fig


def write_html_report(run_dir: Path, output: Path, auto_open: bool = False) -> Path:
    fig = build_report_figure(run_dir)
    pio.write_html(fig, file=str(output), auto_open=auto_open)
    logger.info("Wrote report to %s", output)
    return Path(output)
