"""Report writers: CSV tables, event logs, SVG figures and Excel workbooks."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Mapping

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402
from openpyxl import Workbook  # noqa: E402
from openpyxl.styles import Alignment, Border, Font, PatternFill, Side  # noqa: E402
from openpyxl.utils import get_column_letter  # noqa: E402

from .battery import UnitScaling  # noqa: E402
from .sim import Trajectory  # noqa: E402

FLOAT_FORMAT = "%.9g"

# Fixed salt and no date keep SVG output byte-stable.
matplotlib.rcParams["svg.hashsalt"] = "evplatoon"
SVG_METADATA = {"Date": None, "Creator": None}

COLORS = {
    "title_bg": "366092",
    "header_bg": "444444",
    "header_text": "FFFFFF",
    "negative": "C6EFCE",
    "positive": "FFC7CE",
    "border": "BFBFBF",
}


# =============================================================================
# CSV
# =============================================================================


def write_frame_csv(frame: pd.DataFrame, path: str | Path) -> Path:
    """CSV with 9 significant digits, identical bytes for identical frames."""
    output = Path(path)
    output.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(output, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return output


def write_trajectory_csv(trajectory: Trajectory, path: str | Path) -> Path:
    return write_frame_csv(trajectory.to_frame(), path)


def write_events(trajectory: Trajectory, path: str | Path) -> Path:
    """Line-delimited event log, one event per line in time order."""
    output = Path(path)
    output.parent.mkdir(parents=True, exist_ok=True)
    output.write_text("".join(event.to_line() + "\n" for event in trajectory.events), encoding="utf-8")
    return output


def battery_summary(trajectory: Trajectory, scaling: UnitScaling) -> pd.DataFrame:
    """Per vehicle: heat (J), SOC drop, peak |I| (A) and minimum terminal voltage (V)."""
    if trajectory.battery is None:
        raise ValueError("trajectory has no battery channels")
    channels = trajectory.battery
    seconds = (trajectory.times - trajectory.times[0]) * scaling.time_scale
    heat = np.trapezoid(channels["Q"], seconds, axis=0) if len(seconds) > 1 else np.zeros(trajectory.n_vehicles)
    return pd.DataFrame(
        {
            "vehicle": np.arange(trajectory.n_vehicles),
            "heat_J": heat,
            "soc_drop": channels["S"][0] - channels["S"][-1],
            "peak_current_A": np.abs(channels["I"]).max(axis=0),
            "min_terminal_voltage_V": channels["V_T"].min(axis=0),
        }
    )


def write_metadata(path: str | Path, metadata: Mapping[str, Any]) -> Path:
    output = Path(path)
    output.parent.mkdir(parents=True, exist_ok=True)
    output.write_text(json.dumps(metadata, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return output


# =============================================================================
# Figures
# =============================================================================


def _save(fig, path: str | Path) -> Path:
    output = Path(path)
    output.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(output, format="svg", metadata=SVG_METADATA)
    plt.close(fig)
    return output


def _mark_equilibrium(ax, z_eq: float | None) -> None:
    if z_eq is None:
        return
    ax.plot([z_eq], [0.0], "x", color="magenta", markersize=10, markeredgewidth=2, label="equilibrium")
    ax.axvline(0.0, color="gray", linestyle="--", linewidth=0.8)


def plot_phase_portrait(trajectory: Trajectory, z_eq: float | None, path: str | Path) -> Path:
    """Spacing against relative velocity for every follower."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    spacing, relative = trajectory.spacing(), trajectory.relative_velocity()
    for m in range(spacing.shape[1]):
        ax.plot(spacing[:, m], relative[:, m], linewidth=1.0, label=f"vehicle {m + 1}")
    _mark_equilibrium(ax, z_eq)
    ax.set_xlabel("spacing $x_l - x$")
    ax.set_ylabel("relative velocity $v_l - v$")
    ax.set_title(f"Phase portrait ({trajectory.label})")
    ax.legend(fontsize="small")
    fig.tight_layout()
    return _save(fig, path)


def plot_time_series(trajectory: Trajectory, z_eq: float | None, path: str | Path) -> Path:
    """Spacing and relative velocity over time, equilibrium levels dashed gray."""
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    spacing, relative = trajectory.spacing(), trajectory.relative_velocity()
    for m in range(spacing.shape[1]):
        top.plot(trajectory.times, spacing[:, m], linewidth=1.0, label=f"vehicle {m + 1}")
        bottom.plot(trajectory.times, relative[:, m], linewidth=1.0)
    if z_eq is not None:
        top.axhline(z_eq, color="gray", linestyle="--", linewidth=1.0)
    bottom.axhline(0.0, color="gray", linestyle="--", linewidth=1.0)
    top.set_ylabel("spacing")
    bottom.set_ylabel("relative velocity")
    bottom.set_xlabel("time")
    top.legend(fontsize="small", ncol=2)
    fig.tight_layout()
    return _save(fig, path)


def plot_lead_kinematics(trajectory: Trajectory, path: str | Path) -> Path:
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
    top.plot(trajectory.times, trajectory.accelerations[:, 0], color="tab:red", linewidth=1.0)
    bottom.plot(trajectory.times, trajectory.velocities[:, 0], color="tab:blue", linewidth=1.0)
    top.set_ylabel("lead acceleration")
    bottom.set_ylabel("lead velocity")
    bottom.set_xlabel("time")
    fig.tight_layout()
    return _save(fig, path)


def plot_model_overlay(
    trajectories: Mapping[str, Trajectory], z_eq: float | None, path: str | Path, vehicle: int = 1
) -> Path:
    """Phase portraits of several models for one follower on shared axes."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for label, trajectory in trajectories.items():
        ax.plot(
            trajectory.spacing()[:, vehicle - 1],
            trajectory.relative_velocity()[:, vehicle - 1],
            linewidth=1.0,
            label=label,
        )
    _mark_equilibrium(ax, z_eq)
    ax.set_xlabel("spacing $x_l - x$")
    ax.set_ylabel("relative velocity $v_l - v$")
    ax.set_title(f"Vehicle {vehicle}")
    ax.legend(fontsize="small")
    fig.tight_layout()
    return _save(fig, path)


# =============================================================================
# Excel
# =============================================================================


def _border() -> Border:
    side = Side(style="thin", color=COLORS["border"])
    return Border(left=side, right=side, top=side, bottom=side)


def write_table_to_excel(
    frame: pd.DataFrame,
    output_path: str | Path,
    title: str,
    info: Mapping[str, Any] | None = None,
    highlight: str | None = None,
) -> Path:
    """Write one table to a styled workbook.

    Args:
        frame: Table to write, one worksheet row per frame row
        output_path: Path for the .xlsx file
        title: Banner text on the first row
        info: Optional key/value lines written under the banner
        highlight: Optional numeric column whose negative cells are filled green
            and positive cells red

    Returns:
        Path to saved file
    """
    output = Path(output_path)
    wb = Workbook()
    ws = wb.active
    ws.title = "Results"
    border = _border()

    width = max(len(frame.columns), 2)
    title_fill = PatternFill(start_color=COLORS["title_bg"], end_color=COLORS["title_bg"], fill_type="solid")
    banner = ws.cell(row=1, column=1, value=title)
    banner.font = Font(bold=True, size=14, color=COLORS["header_text"])
    banner.fill = title_fill
    ws.merge_cells(start_row=1, start_column=1, end_row=1, end_column=width)

    row = 3
    for label, value in (info or {}).items():
        ws.cell(row=row, column=1, value=f"{label}:").font = Font(bold=True)
        ws.cell(row=row, column=2, value=str(value))
        row += 1
    if info:
        row += 1

    header_fill = PatternFill(start_color=COLORS["header_bg"], end_color=COLORS["header_bg"], fill_type="solid")
    for col, name in enumerate(frame.columns, start=1):
        cell = ws.cell(row=row, column=col, value=str(name))
        cell.font = Font(bold=True, color=COLORS["header_text"])
        cell.fill = header_fill
        cell.alignment = Alignment(horizontal="center")
        cell.border = border
        ws.column_dimensions[get_column_letter(col)].width = max(14, len(str(name)) + 4)
    ws.freeze_panes = ws.cell(row=row + 1, column=1)
    row += 1

    fills = {
        key: PatternFill(start_color=COLORS[key], end_color=COLORS[key], fill_type="solid")
        for key in ("negative", "positive")
    }
    for record in frame.itertuples(index=False):
        for col, (name, value) in enumerate(zip(frame.columns, record), start=1):
            if isinstance(value, (np.floating, float)):
                value = float(value) if np.isfinite(value) else None
            elif isinstance(value, np.integer):
                value = int(value)
            elif isinstance(value, np.bool_):
                value = bool(value)
            cell = ws.cell(row=row, column=col, value=value)
            cell.border = border
            if isinstance(value, float):
                cell.number_format = "0.000000"
            if name == highlight and isinstance(value, float) and value != 0.0:
                cell.fill = fills["negative" if value < 0 else "positive"]
        row += 1

    output.parent.mkdir(parents=True, exist_ok=True)
    wb.save(output)
    return output


def format_table(frame: pd.DataFrame) -> str:
    """Plain-text rendering of a result table."""
    return frame.to_string(index=False, float_format=lambda x: f"{x:.6g}")
