"""Visibility-weighted trajectory refinement.

The refiner smooths the per-frame network outputs P-hat into trajectories
P-tilde by minimizing, separately over location and relative pose but as one
objective,

    E_ref(P) = sum_t v_t * min(||P_t - Phat_t||^2, m)
             + lam1 * sum_t (1 - v_t) * ||P_t - P_{t-tau1}||^2
             + lam2 * sum_t ||P_t - P_{t-tau2}||^2

with E_total = E_ref(location) + lam_rel * E_ref(relative). v is the per-frame
visibility score (median-filtered mean joint confidence, zero on undetected
frames), so the prediction anchor vanishes and the long-range zero-velocity
prior takes over exactly where the person is occluded. The clip m bounds the
influence of outlier predictions. Trajectories are standardized by the model's
output statistics so m = 1 is meaningful across location and pose.

All terms are differences of trajectory samples or offsets from the anchor,
so the whole objective is translation-invariant in (P, Phat) jointly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .geometry import PersonTrack
from .lifter.model import NormStats
from .lifter.train import Adam


@dataclass(frozen=True)
class RefineConfig:
    tau1: int = 20  # long-range smoothing step, frames
    tau2: int = 1  # short-range smoothing step, frames
    clip_m: float = 1.0  # squared-distance clip, standardized units
    lam1: float = 0.1
    lam2: float = 1.0
    lam_rel: float = 0.1
    learning_rate: float = 1e-2
    iterations: int = 500
    median_window: int = 5
    visibility_threshold: float = 0.1  # "visible" cutoff for evaluation subsets

    def __post_init__(self):
        if not self.tau1 > self.tau2 >= 1:
            raise ValidationError("smoothing steps must satisfy tau1 > tau2 >= 1")
        if self.clip_m <= 0:
            raise ValidationError("clip m must be positive")
        if self.median_window < 1 or self.median_window % 2 == 0:
            raise ValidationError("median_window must be odd and positive")
        if self.iterations < 0 or self.learning_rate <= 0:
            raise ValidationError("invalid optimizer settings")


@dataclass
class RefineResult:
    loc: np.ndarray  # (T, 3) refined location, mm
    rel: np.ndarray  # (T, J, 3) refined relative pose, mm
    energy: float
    breakdown: dict  # per-term contributions summing to energy
    iterations: int
    energy_history: np.ndarray  # (iterations + 1,) objective per iterate


def visibility_scores(track: PersonTrack, median_window: int = 5) -> np.ndarray:
    """Median-filtered mean joint confidence per frame; 0 where undetected.

    Edges shrink the median window. Undetected frames contribute raw value 0
    and are forced back to exactly 0 after filtering.
    """
    if median_window < 1 or median_window % 2 == 0:
        raise ValidationError("median_window must be odd and positive")
    T = len(track)
    raw = np.zeros(T)
    detected = np.zeros(T, dtype=bool)
    for t, det in enumerate(track.detections):
        if det is not None and det.detected:
            raw[t] = float(det.confidence.mean())
            detected[t] = True
    half = median_window // 2
    v = np.empty(T)
    for t in range(T):
        lo = max(0, t - half)
        hi = min(T, t + half + 1)
        v[t] = np.median(raw[lo:hi])
    v[~detected] = 0.0
    return v


def _as_traj(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim == 1:
        p = p[:, None]
    return p


def e_pred(p, phat, v, m: float) -> float:
    """Clipped squared-distance anchor, weighted by per-frame visibility."""
    p = _as_traj(p)
    phat = _as_traj(phat)
    if p.shape != phat.shape:
        raise ValidationError("trajectory lengths do not match")
    d2 = ((p - phat) ** 2).sum(axis=1)
    return float((np.asarray(v, dtype=np.float64) * np.minimum(d2, m)).sum())


def e_smooth(p, tau: int) -> float:
    """Zero-velocity loss at step tau; 0 when the trajectory is shorter."""
    p = _as_traj(p)
    if p.shape[0] <= tau:
        return 0.0
    d = p[tau:] - p[:-tau]
    return float((d * d).sum())


def _weighted_smooth(p: np.ndarray, tau: int, weights) -> float:
    if p.shape[0] <= tau:
        return 0.0
    d2 = ((p[tau:] - p[:-tau]) ** 2).sum(axis=1)
    return float((weights * d2).sum())


def e_ref(p, phat, v, cfg: RefineConfig) -> float:
    """Single-trajectory refinement energy; tau1 pairs are weighted by the
    later frame's occlusion (1 - v_t), tau2 pairs apply everywhere."""
    p = _as_traj(p)
    phat = _as_traj(phat)
    v = np.asarray(v, dtype=np.float64)
    return (e_pred(p, phat, v, cfg.clip_m)
            + cfg.lam1 * _weighted_smooth(p, cfg.tau1, 1.0 - v[cfg.tau1:])
            + cfg.lam2 * _weighted_smooth(p, cfg.tau2, 1.0))


def e_total(p_loc, p_rel, phat_loc, phat_rel, v, cfg: RefineConfig) -> float:
    """E_ref on the location plus lam_rel times E_ref on the relative pose."""
    return e_ref(p_loc, phat_loc, v, cfg) + cfg.lam_rel * e_ref(p_rel, phat_rel, v, cfg)


def _grad_e_ref(p: np.ndarray, phat: np.ndarray, v: np.ndarray,
                cfg: RefineConfig) -> np.ndarray:
    g = np.zeros_like(p)
    diff = p - phat
    d2 = (diff * diff).sum(axis=1)
    # Subgradient of the clip: zero at and beyond the kink.
    active = (d2 < cfg.clip_m).astype(np.float64)
    g += 2.0 * (v * active)[:, None] * diff
    if p.shape[0] > cfg.tau1:
        w = (1.0 - v[cfg.tau1:])[:, None]
        d = p[cfg.tau1:] - p[:-cfg.tau1]
        g[cfg.tau1:] += 2.0 * cfg.lam1 * w * d
        g[:-cfg.tau1] -= 2.0 * cfg.lam1 * w * d
    if p.shape[0] > cfg.tau2:
        d = p[cfg.tau2:] - p[:-cfg.tau2]
        g[cfg.tau2:] += 2.0 * cfg.lam2 * d
        g[:-cfg.tau2] -= 2.0 * cfg.lam2 * d
    return g


def grad_e_total(p_loc, p_rel, phat_loc, phat_rel, v, cfg: RefineConfig):
    """Exact (sub)gradients of e_total w.r.t. the two trajectories."""
    p_loc = _as_traj(p_loc)
    p_rel = _as_traj(p_rel)
    v = np.asarray(v, dtype=np.float64)
    g_loc = _grad_e_ref(p_loc, _as_traj(phat_loc), v, cfg)
    g_rel = cfg.lam_rel * _grad_e_ref(p_rel, _as_traj(phat_rel), v, cfg)
    return g_loc, g_rel


def _fill_gaps(z: np.ndarray, visible: np.ndarray) -> np.ndarray:
    """Linear interpolation over invisible frames, edge-hold at the ends."""
    if visible.all():
        return z.copy()
    out = z.copy()
    ts = np.arange(len(z), dtype=np.float64)
    for d in range(z.shape[1]):
        out[~visible, d] = np.interp(ts[~visible], ts[visible], z[visible, d])
    return out


def refine_track(pred_loc: np.ndarray, pred_rel: np.ndarray, v: np.ndarray,
                 cfg: RefineConfig, norm: NormStats, root_index: int) -> RefineResult:
    """Minimize e_total over the standardized trajectories with Adam.

    P-tilde starts at P-hat except across fully invisible stretches (v == 0),
    which are bridged by linear interpolation between the nearest visible
    frames before optimization. Deterministic: the objective has no noise.
    """
    pred_loc = np.asarray(pred_loc, dtype=np.float64)
    pred_rel = np.asarray(pred_rel, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    T = pred_loc.shape[0]
    if pred_rel.shape[0] != T or v.shape != (T,):
        raise ValidationError("trajectory and visibility lengths do not match")

    nonroot = np.delete(pred_rel, root_index, axis=1).reshape(T, -1)
    vec = np.concatenate([pred_loc, nonroot], axis=1)
    z_hat = norm.standardize_output(vec)
    zl_hat = z_hat[:, :3]
    zr_hat = z_hat[:, 3:]

    visible = v > 0.0
    if visible.any():
        zl = _fill_gaps(zl_hat, visible)
        zr = _fill_gaps(zr_hat, visible)
    else:
        zl = zl_hat.copy()
        zr = zr_hat.copy()

    adam = Adam([zl, zr], cfg.learning_rate)
    history = np.empty(cfg.iterations + 1)
    for it in range(cfg.iterations):
        energy = e_total(zl, zr, zl_hat, zr_hat, v, cfg)
        if not np.isfinite(energy):
            raise RuntimeError(f"refinement diverged: non-finite energy at iteration {it}")
        history[it] = energy
        g_loc, g_rel = grad_e_total(zl, zr, zl_hat, zr_hat, v, cfg)
        adam.step([zl, zr], [g_loc, g_rel])
    final = e_total(zl, zr, zl_hat, zr_hat, v, cfg)
    if not np.isfinite(final):
        raise RuntimeError("refinement diverged: non-finite final energy")
    history[cfg.iterations] = final

    breakdown = {
        "pred_loc": e_pred(zl, zl_hat, v, cfg.clip_m),
        "smooth_tau1_loc": cfg.lam1 * _weighted_smooth(zl, cfg.tau1, 1.0 - v[cfg.tau1:] if T > cfg.tau1 else 1.0),
        "smooth_tau2_loc": cfg.lam2 * _weighted_smooth(zl, cfg.tau2, 1.0),
        "pred_rel": cfg.lam_rel * e_pred(zr, zr_hat, v, cfg.clip_m),
        "smooth_tau1_rel": cfg.lam_rel * cfg.lam1 * _weighted_smooth(zr, cfg.tau1, 1.0 - v[cfg.tau1:] if T > cfg.tau1 else 1.0),
        "smooth_tau2_rel": cfg.lam_rel * cfg.lam2 * _weighted_smooth(zr, cfg.tau2, 1.0),
    }

    out = norm.destandardize_output(np.concatenate([zl, zr], axis=1))
    loc = out[:, :3]
    rel = np.insert(out[:, 3:].reshape(T, -1, 3), root_index, 0.0, axis=1)
    return RefineResult(loc=loc, rel=rel, energy=final, breakdown=breakdown,
                        iterations=cfg.iterations, energy_history=history)
