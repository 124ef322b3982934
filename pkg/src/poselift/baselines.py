"""Reference trajectory fillers: linear interpolation and the 1-Euro filter.

Interpolation bridges undetected gaps and holds the nearest detected value
at the edges; the 1-Euro filter smooths a gap-free signal with a
speed-adaptive exponential filter (cutoff = min_cutoff + beta * |dx|). The
1-Euro baseline composes the two: filter the interpolation-filled track.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ValidationError

ONE_EURO_MIN_CUTOFF = 1.0  # Hz
ONE_EURO_BETA = 0.007
ONE_EURO_DERIV_CUTOFF = 1.0  # Hz


def linear_interpolate(values: np.ndarray, detected: np.ndarray) -> np.ndarray:
    """Fill undetected frames by per-coordinate linear interpolation.

    Detected frames pass through untouched, so the operation is idempotent.
    Leading and trailing gaps hold the nearest detected value.
    """
    values = np.asarray(values, dtype=np.float64)
    detected = np.asarray(detected, dtype=bool)
    if detected.shape != (values.shape[0],):
        raise ValidationError("detected flags must match the trajectory length")
    if not detected.any():
        raise ValidationError("cannot interpolate a track with no detected frames")
    if detected.all():
        return values.copy()
    flat = values.reshape(values.shape[0], -1)
    out = flat.copy()
    ts = np.arange(values.shape[0], dtype=np.float64)
    for d in range(flat.shape[1]):
        out[~detected, d] = np.interp(ts[~detected], ts[detected], flat[detected, d])
    return out.reshape(values.shape)


def _smoothing_factor(cutoff: float, fps: float) -> float:
    tau = 1.0 / (2.0 * math.pi * cutoff)
    return 1.0 / (1.0 + tau * fps)


def one_euro_filter(values: np.ndarray, fps: float,
                    min_cutoff: float = ONE_EURO_MIN_CUTOFF,
                    beta: float = ONE_EURO_BETA,
                    deriv_cutoff: float = ONE_EURO_DERIV_CUTOFF) -> np.ndarray:
    """Speed-adaptive causal exponential smoothing, per coordinate.

    Expects a gap-free signal; run linear_interpolate first when the track
    has undetected frames. The first frame passes through unchanged.
    """
    if fps <= 0:
        raise ValidationError("fps must be positive")
    filled = np.asarray(values, dtype=np.float64)
    if filled.shape[0] == 0:
        raise ValidationError("cannot filter an empty signal")
    flat = filled.reshape(filled.shape[0], -1)
    out = np.empty_like(flat)
    out[0] = flat[0]
    dx_prev = np.zeros(flat.shape[1])
    a_d = _smoothing_factor(deriv_cutoff, fps)
    for t in range(1, flat.shape[0]):
        dx = (flat[t] - out[t - 1]) * fps
        dx_hat = a_d * dx + (1.0 - a_d) * dx_prev
        cutoff = min_cutoff + beta * np.abs(dx_hat)
        a = 1.0 / (1.0 + fps / (2.0 * math.pi * cutoff))
        out[t] = a * flat[t] + (1.0 - a) * out[t - 1]
        dx_prev = dx_hat
    return out.reshape(filled.shape)
