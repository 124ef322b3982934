"""Absolute-pose evaluation metrics.

All distance metrics are in millimeters. Per-sequence values pool every
person's evaluated frames within the sequence; corpus-level numbers are
unweighted means over sequences. The normalized variants (n_mrpe, n_mpjpe)
fit a single least-squares scale per sequence on all predicted/ground-truth
pairs, then score only the frames selected by the evaluation mask, so a
subset score is still measured in the globally aligned frame.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError

PCK_THRESHOLD_MM = 150.0
VISIBLE_THRESHOLD = 0.1  # frames with v >= this count as visible

METRIC_NAMES = ("mrpe", "mpjpe", "pck3d", "n_mrpe", "n_mpjpe")


def _paired(pred, gt, point_dims: int):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValidationError("prediction and ground truth shapes differ")
    if pred.ndim < 1 or pred.shape[-1] != point_dims:
        raise ValidationError(f"expected points with {point_dims} coordinates")
    return pred, gt


def mrpe(pred_loc, gt_loc) -> float:
    """Mean Euclidean distance between predicted and true root locations."""
    pred, gt = _paired(pred_loc, gt_loc, 3)
    if pred.size == 0:
        raise ValidationError("mrpe needs at least one frame")
    return float(np.linalg.norm(pred - gt, axis=-1).mean())


def mpjpe(pred_rel, gt_rel) -> float:
    """Mean per-joint distance on root-relative poses, root row included."""
    pred, gt = _paired(pred_rel, gt_rel, 3)
    if pred.ndim < 2 or pred.size == 0:
        raise ValidationError("mpjpe needs (..., J, 3) poses")
    return float(np.linalg.norm(pred - gt, axis=-1).mean())


def pck3d(pred_rel, gt_rel, threshold: float = PCK_THRESHOLD_MM) -> float:
    """Percentage of joints whose relative-pose error is strictly below the
    threshold, pooled over every joint of every evaluated pose. The root row
    (zero on both sides) counts and is always correct."""
    pred, gt = _paired(pred_rel, gt_rel, 3)
    if pred.size == 0:
        raise ValidationError("pck3d needs at least one joint")
    dist = np.linalg.norm(pred - gt, axis=-1)
    return float((dist < threshold).mean() * 100.0)


def optimal_scale(pred, gt) -> float:
    """Least-squares scale s minimizing sum ||s * pred - gt||^2.

    Closed form s = <pred, gt> / <pred, pred> over all coordinates.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValidationError("prediction and ground truth shapes differ")
    denom = float((pred * pred).sum())
    if denom == 0.0:
        raise ValidationError("cannot fit a scale to an all-zero prediction")
    return float((pred * gt).sum() / denom)


def n_mrpe(pred_loc, gt_loc, mask=None) -> float:
    """MRPE after the per-sequence optimal scale on the root trajectories.

    The scale is always fit on all pairs; mask selects which frames are
    scored. Invariant to a common scaling of both inputs and to scaling
    the prediction alone.
    """
    pred, gt = _paired(pred_loc, gt_loc, 3)
    pred = pred.reshape(-1, 3)
    gt = gt.reshape(-1, 3)
    s = optimal_scale(pred, gt)
    err = np.linalg.norm(s * pred - gt, axis=-1)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool).reshape(-1)
        if mask.shape != err.shape:
            raise ValidationError("mask length does not match the frame count")
        err = err[mask]
    if err.size == 0:
        raise ValidationError("n_mrpe scored zero frames")
    return float(err.mean())


def n_mrpe_squared(pred_loc, gt_loc, mask=None) -> float:
    """The raw least-squares objective: mean SQUARED norm of s*pred - gt.

    n_mrpe reports mean Euclidean distance for comparability with mrpe; this
    exposes the quantity the fitted scale actually minimizes.
    """
    pred, gt = _paired(pred_loc, gt_loc, 3)
    pred = pred.reshape(-1, 3)
    gt = gt.reshape(-1, 3)
    s = optimal_scale(pred, gt)
    err2 = ((s * pred - gt) ** 2).sum(axis=-1)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool).reshape(-1)
        if mask.shape != err2.shape:
            raise ValidationError("mask length does not match the frame count")
        err2 = err2[mask]
    if err2.size == 0:
        raise ValidationError("n_mrpe_squared scored zero frames")
    return float(err2.mean())


def n_mpjpe(pred_abs, gt_abs, root_index: int, mask=None) -> float:
    """Scale-aligned MPJPE on absolute joint clouds.

    Fits the scale on the full absolute clouds, rescales, re-decomposes at
    the root, and averages the per-joint relative error over masked frames.
    """
    pred, gt = _paired(pred_abs, gt_abs, 3)
    pred = pred.reshape(-1, pred.shape[-2], 3)
    gt = gt.reshape(-1, gt.shape[-2], 3)
    s = optimal_scale(pred, gt)
    sp = s * pred
    sp_rel = sp - sp[:, root_index:root_index + 1, :]
    gt_rel = gt - gt[:, root_index:root_index + 1, :]
    err = np.linalg.norm(sp_rel - gt_rel, axis=-1)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool).reshape(-1)
        if mask.shape != (err.shape[0],):
            raise ValidationError("mask length does not match the frame count")
        err = err[mask]
    if err.size == 0:
        raise ValidationError("n_mpjpe scored zero frames")
    return float(err.mean())


def subset_filter(v, mode: str, threshold: float = VISIBLE_THRESHOLD) -> np.ndarray:
    """Frame mask for an evaluation subset.

    visible keeps frames with v >= threshold, occluded keeps the complement,
    all keeps everything. The two non-trivial modes partition the frames.
    """
    v = np.asarray(v, dtype=np.float64)
    if mode == "all":
        return np.ones(v.shape, dtype=bool)
    if mode == "visible":
        return v >= threshold
    if mode == "occluded":
        return v < threshold
    raise ValidationError(f"unknown subset mode: {mode!r}")


def evaluate_sequence(preds: dict, tracks: dict, root_index: int,
                      subset_masks: dict,
                      pck_threshold: float = PCK_THRESHOLD_MM) -> dict:
    """Score one sequence. preds and tracks map person_id to a prediction
    (loc (T,3), rel (T,J,3)) and a ground-truth track of Pose3D; subset_masks
    maps subset name to {person_id: (T,) bool} of frames to score.

    Returns {subset: {metric: value, "count": frames}}. A subset with no
    scored frames is dropped. The n_* scales are fit per sequence on the
    pooled pairs of all people and frames with ground truth.
    """
    all_pred_loc, all_gt_loc = [], []
    all_pred_rel, all_gt_rel = [], []
    per_person = {}
    for pid, (loc, rel) in preds.items():
        track = tracks[pid]
        has_gt = np.array([g is not None for g in track], dtype=bool)
        if not has_gt.any():
            continue
        all_gt_loc.append(np.stack([g.location for g, keep in zip(track, has_gt) if keep]))
        all_gt_rel.append(np.stack([g.relative for g, keep in zip(track, has_gt) if keep]))
        all_pred_loc.append(np.asarray(loc, dtype=np.float64)[has_gt])
        all_pred_rel.append(np.asarray(rel, dtype=np.float64)[has_gt])
        per_person[pid] = has_gt
    if not per_person:
        raise ValidationError("sequence has no ground-truth frames to score")

    pred_loc = np.concatenate(all_pred_loc)
    gt_loc = np.concatenate(all_gt_loc)
    pred_rel = np.concatenate(all_pred_rel)
    gt_rel = np.concatenate(all_gt_rel)
    pred_abs = pred_loc[:, None, :] + pred_rel
    gt_abs = gt_loc[:, None, :] + gt_rel
    s_loc = optimal_scale(pred_loc, gt_loc)
    s_abs = optimal_scale(pred_abs, gt_abs)

    out = {}
    for name, masks in subset_masks.items():
        keep = np.concatenate([np.asarray(masks[pid], dtype=bool)[has_gt]
                               for pid, has_gt in per_person.items()])
        if not keep.any():
            continue
        pl, gl = pred_loc[keep], gt_loc[keep]
        pa, ga = pred_abs[keep], gt_abs[keep]
        nr = np.linalg.norm(s_loc * pl - gl, axis=-1).mean()
        sp = s_abs * pa
        nm = np.linalg.norm((sp - sp[:, root_index:root_index + 1, :])
                            - (ga - ga[:, root_index:root_index + 1, :]), axis=-1).mean()
        out[name] = {
            "mrpe": mrpe(pl, gl),
            "mpjpe": mpjpe(pred_rel[keep], gt_rel[keep]),
            "pck3d": pck3d(pred_rel[keep], gt_rel[keep], pck_threshold),
            "n_mrpe": float(nr),
            "n_mpjpe": float(nm),
            "count": int(keep.sum()),
        }
    return out


def aggregate(per_sequence: dict) -> dict:
    """Unweighted mean of each metric over sequences; counts are summed."""
    if not per_sequence:
        raise ValidationError("nothing to aggregate")
    names = sorted(next(iter(per_sequence.values())).keys())
    out = {}
    for name in names:
        vals = [seq[name] for seq in per_sequence.values()]
        if name == "count":
            out[name] = int(np.sum(vals))
        else:
            out[name] = float(np.mean(vals))
    return out
