"""
Reservoir Mask Workbench - Plotting Module
Reads per-run curve CSVs and renders smoothed score-vs-episode SVG charts
"""

import csv
import logging
from collections import Counter
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .base import UsageError
from .masks import kind_label
from .trainer import CURVE_COLUMNS, SNAPSHOT_COLUMNS, CurveRow, LearningCurve, parse_run_stem


logger = logging.getLogger(__name__)

COLORS = ['#e74c3c', '#2ecc71', '#3498db', '#9b59b6', '#f39c12', '#1abc9c', '#34495e', '#e67e22']


def read_mask_snapshot(path: Union[str, Path]) -> Tuple[np.ndarray, List[str]]:
    """
    Last snapshot of a <run>.masks.csv file

    Returns:
        (mask value per input, block name per input) of the highest episode

    Raises:
        UsageError: on a wrong header or malformed row, naming the line
    """
    path = Path(path)
    latest, rows = None, []
    with open(path, "r", newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        if next(reader, None) != SNAPSHOT_COLUMNS:
            raise UsageError(f"{path}: expected header {','.join(SNAPSHOT_COLUMNS)}", line_number=1)
        for row in reader:
            line = reader.line_num
            if len(row) != len(SNAPSHOT_COLUMNS):
                raise UsageError(f"{path}:{line}: expected {len(SNAPSHOT_COLUMNS)} fields, got {len(row)}",
                                 line_number=line)
            try:
                episode, value = int(row[0]), float(row[3])
            except ValueError as e:
                raise UsageError(f"{path}:{line}: {e}", line_number=line) from e
            if latest is None or episode > latest:
                latest, rows = episode, []
            if episode == latest:
                rows.append((int(row[1]), row[2], value))
    if not rows:
        raise UsageError(f"{path}: no snapshot rows", line_number=1)
    rows.sort()
    return np.array([value for _, _, value in rows]), [block for _, block, _ in rows]


def read_curve_csv(path: Union[str, Path]) -> LearningCurve:
    """
    Load a curve CSV written by the trainer

    The label and seed come from the file name (<name>_<mask>_seed<k>.csv);
    files named otherwise are labelled by their stem with seed 0. A sibling
    <name>_<mask>_seed<k>.masks.csv supplies the final mask snapshot.

    Raises:
        UsageError: on a wrong header or malformed row, naming the line
    """
    path = Path(path)
    parsed = parse_run_stem(path.stem)
    if parsed:
        kind, u_length, seed = parsed
        curve = LearningCurve(label=kind_label(kind, u_length), seed=seed, kind=kind.value)
    else:
        curve = LearningCurve(label=path.stem, seed=0)

    with open(path, "r", newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != CURVE_COLUMNS:
            raise UsageError(f"{path}: expected header {','.join(CURVE_COLUMNS)}", line_number=1)
        for row in reader:
            line = reader.line_num
            if len(row) != len(CURVE_COLUMNS):
                raise UsageError(f"{path}:{line}: expected {len(CURVE_COLUMNS)} fields, got {len(row)}",
                                 line_number=line)
            try:
                values = [int(row[0])] + [float(v) for v in row[1:]]
            except ValueError as e:
                raise UsageError(f"{path}:{line}: {e}", line_number=line) from e
            curve.rows.append(CurveRow(*values))

    if not curve.rows:
        raise UsageError(f"{path}: no curve rows", line_number=1)
    curve.num_episodes = len(curve.rows)
    snapshot = path.with_name(f"{path.stem}.masks.csv")
    if snapshot.is_file():
        curve.final_mask, curve.mask_blocks = read_mask_snapshot(snapshot)
    return curve


def smooth(scores: Sequence[float], window: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Trailing mean over full windows

    Returns:
        (episode indices, smoothed scores), starting at episode window - 1
    """
    scores = np.asarray(scores, dtype=np.float64)
    if window < 1 or window > scores.size:
        raise UsageError(f"Smoothing window {window} must lie in [1, {scores.size}]")
    means = sliding_window_view(scores, window).mean(axis=1)
    return np.arange(window - 1, scores.size), means


def legend_labels(curves: Sequence[LearningCurve]) -> List[str]:
    """Mask labels, with the seed appended only when labels repeat"""
    counts = Counter(c.label for c in curves)
    return [f"{c.label} seed {c.seed}" if counts[c.label] > 1 else c.label for c in curves]


def plot_curves(curves: Sequence[LearningCurve], output_svg: Union[str, Path], window: int = 100,
                title: str = None) -> Path:
    """
    Render one smoothed line per curve into a single SVG

    Args:
        curves: Loaded learning curves
        output_svg: Destination file
        window: Trailing smoothing window in episodes
        title: Optional chart title

    Returns:
        Path of the written SVG
    """
    if not curves:
        raise UsageError("plot_curves needs at least one curve")
    lines = [smooth(curve.scores, window) for curve in curves]
    output_svg = Path(output_svg)
    output_svg.parent.mkdir(parents=True, exist_ok=True)

    with matplotlib.rc_context({"svg.hashsalt": "reservoir-mask-workbench", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(10, 6))
        for i, ((x, y), label) in enumerate(zip(lines, legend_labels(curves))):
            ax.plot(x, y, label=label, color=COLORS[i % len(COLORS)], linewidth=1.5)

        if title:
            ax.set_title(title, pad=20, fontsize=14)
        ax.set_xlabel("Episodes", labelpad=10)
        ax.set_ylabel("Score", labelpad=10)
        ax.grid(True, linestyle='--', alpha=0.7)
        ax.legend(loc='lower right')
        fig.tight_layout()
        fig.savefig(output_svg, format='svg', metadata={"Date": None})
        plt.close(fig)

    logger.info(f"Wrote {len(curves)} curves to {output_svg}")
    return output_svg
