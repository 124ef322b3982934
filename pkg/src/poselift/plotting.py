"""Deterministic SVG trajectory plots, no plotting library involved.

One figure per person: two stacked panels sharing the time axis, the upper
one tracking the vertical root coordinate and the lower one depth. Ground
truth and prediction are drawn as polylines; frames without a detection are
shaded so occlusions are visible at a glance. All coordinates are written
with a fixed format, so the same inputs always produce the same bytes.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError

PANEL_WIDTH = 860
PANEL_HEIGHT = 220
MARGIN_LEFT = 70
MARGIN_RIGHT = 20
MARGIN_TOP = 34
PANEL_GAP = 44
MARGIN_BOTTOM = 40

GT_COLOR = "#444444"
PRED_COLOR = "#c0392b"
GAP_COLOR = "#d7e3f4"
AXIS_COLOR = "#888888"


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _runs(mask: np.ndarray):
    """Contiguous True runs as (start, stop) half-open index pairs."""
    runs = []
    start = None
    for i, flag in enumerate(mask):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            runs.append((start, i))
            start = None
    if start is not None:
        runs.append((start, len(mask)))
    return runs


def _panel(lines: list, top: float, times: np.ndarray, gt: np.ndarray,
           pred: np.ndarray, gaps: np.ndarray, label: str):
    x0, x1 = MARGIN_LEFT, MARGIN_LEFT + PANEL_WIDTH
    y0, y1 = top, top + PANEL_HEIGHT
    lo = float(min(gt.min(), pred.min()))
    hi = float(max(gt.max(), pred.max()))
    if hi - lo < 1e-9:
        lo -= 1.0
        hi += 1.0
    pad = 0.06 * (hi - lo)
    lo -= pad
    hi += pad

    def sx(t):
        span = max(float(times[-1] - times[0]), 1e-9)
        return x0 + (t - times[0]) / span * PANEL_WIDTH

    def sy(v):
        return y1 - (v - lo) / (hi - lo) * PANEL_HEIGHT

    for start, stop in _runs(gaps):
        rx = sx(times[start])
        rw = sx(times[min(stop, len(times) - 1)]) - rx
        if stop == len(times):
            rw = x1 - rx
        lines.append(f'<rect x="{_fmt(rx)}" y="{_fmt(y0)}" width="{_fmt(max(rw, 1.0))}" '
                     f'height="{_fmt(PANEL_HEIGHT)}" fill="{GAP_COLOR}"/>')
    lines.append(f'<rect x="{_fmt(x0)}" y="{_fmt(y0)}" width="{PANEL_WIDTH}" '
                 f'height="{PANEL_HEIGHT}" fill="none" stroke="{AXIS_COLOR}"/>')
    for series, color in ((gt, GT_COLOR), (pred, PRED_COLOR)):
        pts = " ".join(f"{_fmt(sx(t))},{_fmt(sy(v))}" for t, v in zip(times, series))
        lines.append(f'<path d="M {pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
    lines.append(f'<text x="{_fmt(x0)}" y="{_fmt(y0 - 8)}" font-size="13" '
                 f'fill="#222222">{label}</text>')
    lines.append(f'<text x="{_fmt(x0 - 6)}" y="{_fmt(y1)}" font-size="11" '
                 f'fill="{AXIS_COLOR}" text-anchor="end">{_fmt(lo)}</text>')
    lines.append(f'<text x="{_fmt(x0 - 6)}" y="{_fmt(y0 + 10)}" font-size="11" '
                 f'fill="{AXIS_COLOR}" text-anchor="end">{_fmt(hi)}</text>')


def render_track_svg(times: np.ndarray, gt_loc: np.ndarray, pred_loc: np.ndarray,
                     had_detection: np.ndarray, title: str) -> str:
    """Two-panel SVG (vertical coordinate and depth against time) as a string."""
    times = np.asarray(times, dtype=np.float64)
    gt_loc = np.asarray(gt_loc, dtype=np.float64)
    pred_loc = np.asarray(pred_loc, dtype=np.float64)
    gaps = ~np.asarray(had_detection, dtype=bool)
    if times.ndim != 1 or len(times) < 1:
        raise ValidationError("need at least one frame to plot")
    if gt_loc.shape != (len(times), 3) or pred_loc.shape != (len(times), 3):
        raise ValidationError("locations must be (T, 3)")
    if gaps.shape != times.shape:
        raise ValidationError("had_detection must match the frame count")

    width = MARGIN_LEFT + PANEL_WIDTH + MARGIN_RIGHT
    height = MARGIN_TOP + 2 * PANEL_HEIGHT + PANEL_GAP + MARGIN_BOTTOM
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="#ffffff"/>',
        f'<text x="{MARGIN_LEFT}" y="20" font-size="15" fill="#000000">{title}</text>',
        f'<text x="{MARGIN_LEFT + 120}" y="20" font-size="12" fill="{GT_COLOR}">'
        f'ground truth</text>',
        f'<text x="{MARGIN_LEFT + 220}" y="20" font-size="12" fill="{PRED_COLOR}">'
        f'prediction</text>',
    ]
    _panel(lines, MARGIN_TOP, times, gt_loc[:, 1], pred_loc[:, 1], gaps,
           "vertical (mm)")
    _panel(lines, MARGIN_TOP + PANEL_HEIGHT + PANEL_GAP, times, gt_loc[:, 2],
           pred_loc[:, 2], gaps, "depth (mm)")
    axis_y = MARGIN_TOP + 2 * PANEL_HEIGHT + PANEL_GAP + 24
    lines.append(f'<text x="{MARGIN_LEFT + PANEL_WIDTH // 2}" y="{axis_y}" '
                 f'font-size="12" fill="{AXIS_COLOR}" text-anchor="middle">time (s)</text>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
