"""Training and inference for the temporal lifting network.

Training samples fixed-length windows centered on every frame (edges padded
by replication), scales the 2D skeleton per sample as augmentation, and
minimizes the summed L1 error of location plus relative pose with Adam under
a per-epoch learning-rate decay. Everything is deterministic given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from ..geometry import CameraIntrinsics, PersonTrack, Sequence, normalize_keypoints
from ..seqio import TrackPrediction
from .model import LifterConfig, NormStats, PoseLifter

VAL_WINDOW_CAP = 2048  # fixed subsample of validation windows per run


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    lr_decay: float = 0.95  # multiplier applied on each epoch
    epochs: int = 80
    batch_size: int = 64
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    augment_range: tuple = (0.7, 1.3)
    seed: int = 0
    samples_per_epoch: int | None = None  # cap on sampled windows; None takes all

    def __post_init__(self):
        if not 0.0 < self.lr_decay <= 1.0:
            raise ValidationError("lr_decay must lie in (0, 1]")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValidationError("epochs and batch_size must be >= 1")
        lo, hi = self.augment_range
        if not 0.0 < lo <= hi:
            raise ValidationError("augment_range must be positive and ordered")


class Adam:
    """Standard Adam with bias-corrected first and second moments."""

    def __init__(self, params, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def adam_step(params, grads, state: Adam, lr: float) -> None:
    """Single update through a shared Adam state at the given learning rate."""
    state.lr = lr
    state.step(params, grads)


def l1_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Sum of absolute errors per sample, averaged over the batch."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValidationError("l1_loss shapes do not match")
    if pred.ndim == 1:
        return float(np.abs(pred - target).sum())
    return float(np.abs(pred - target).sum(axis=tuple(range(1, pred.ndim))).mean())


def augment_scale(window: np.ndarray, loc: np.ndarray, rel: np.ndarray, alpha: float):
    """Scale 2D inputs by alpha; the target depth scales by 1/alpha.

    Zooming the image by alpha multiplies normalized coordinates by alpha and
    moves the subject to depth Z/alpha; X, Y and the relative pose stay put.
    """
    if alpha <= 0:
        raise ValidationError("augmentation scale must be positive")
    new_loc = np.array(loc, dtype=np.float64, copy=True)
    new_loc[..., 2] = new_loc[..., 2] / alpha
    return window * alpha, new_loc, rel


@dataclass
class TrackInputs:
    """Canonical per-track network inputs shared by training and inference."""

    x: np.ndarray  # (2J, T) normalized coords, missing frames interpolated
    conf: np.ndarray  # (J, T), zero where undetected
    had_detection: np.ndarray  # (T,) bool
    loc: np.ndarray | None = None  # (T, 3) ground truth
    rel: np.ndarray | None = None  # (T, J, 3) ground truth


def prepare_track_inputs(track: PersonTrack, cam: CameraIntrinsics,
                         num_joints: int) -> TrackInputs:
    """Normalize detections and fill invisible frames by linear interpolation.

    Missing frames get confidence 0; leading/trailing gaps hold the nearest
    detected value. A track with no detections at all yields all-zero inputs.
    """
    T = len(track)
    x = np.zeros((2 * num_joints, T))
    conf = np.zeros((num_joints, T))
    had = np.zeros(T, dtype=bool)
    for t, det in enumerate(track.detections):
        if det is None or not det.detected:
            continue
        norm = normalize_keypoints(det, cam)
        x[0::2, t] = norm.coords[:, 0]
        x[1::2, t] = norm.coords[:, 1]
        conf[:, t] = norm.confidence
        had[t] = True
    if had.any() and not had.all():
        ts = np.arange(T, dtype=np.float64)
        det_ts = ts[had]
        gap_ts = ts[~had]
        for d in range(x.shape[0]):
            x[d, ~had] = np.interp(gap_ts, det_ts, x[d, had])

    loc = rel = None
    if all(g is not None for g in track.gt):
        loc = np.stack([g.location for g in track.gt])
        rel = np.stack([g.relative for g in track.gt])
    return TrackInputs(x=x, conf=conf, had_detection=had, loc=loc, rel=rel)


def _target_matrix(inputs: TrackInputs, root_index: int) -> np.ndarray:
    """(T, D) regression targets: location then non-root relative rows."""
    nonroot = np.delete(inputs.rel, root_index, axis=1)
    return np.concatenate([inputs.loc, nonroot.reshape(len(inputs.loc), -1)], axis=1)


def _gather_windows(padded: np.ndarray, centers: np.ndarray, window_len: int) -> np.ndarray:
    """padded (2J, T + 2w); centers (B,) frame indices -> (B, 2J, window_len)."""
    idx = centers[:, None] + np.arange(window_len)[None, :]
    return np.transpose(padded[:, idx], (1, 0, 2))


def train_lifter(corpus, lifter_cfg: LifterConfig, train_cfg: TrainConfig,
                 val_corpus=None):
    """Train a PoseLifter on fully ground-truthed sequences.

    Returns (model, history) where history holds one row per epoch with the
    learning rate and mean train/validation loss. Deterministic per seed.
    """
    if not corpus:
        raise ValidationError("training corpus is empty")
    w = lifter_cfg.half_window
    window_len = lifter_cfg.window_len

    def collect(sequences):
        padded, targets = [], []
        for seq in sequences:
            if seq.skeleton.num_joints != lifter_cfg.num_joints:
                raise ValidationError("sequence joint count does not match the model")
            for track in seq.tracks:
                inputs = prepare_track_inputs(track, seq.camera, lifter_cfg.num_joints)
                if inputs.loc is None:
                    raise ValidationError(
                        f"track {track.person_id} of {seq.seq_id} lacks ground truth")
                padded.append(np.pad(inputs.x, ((0, 0), (w, w)), mode="edge"))
                targets.append(_target_matrix(inputs, lifter_cfg.root_index))
        return padded, targets

    padded, targets = collect(corpus)
    all_inputs = np.concatenate([p[:, w:p.shape[1] - w] for p in padded], axis=1).T
    all_targets = np.concatenate(targets, axis=0)
    norm = NormStats.from_data(all_inputs, all_targets)

    seed_root = np.random.SeedSequence(train_cfg.seed)
    init_seed, order_seed, aug_seed, drop_seed, val_seed = seed_root.spawn(5)
    model = PoseLifter(lifter_cfg, norm, seed=init_seed)
    order_rng = np.random.Generator(np.random.PCG64(order_seed))
    aug_rng = np.random.Generator(np.random.PCG64(aug_seed))
    drop_rng = np.random.Generator(np.random.PCG64(drop_seed))

    index = np.array([(i, t) for i, tgt in enumerate(targets) for t in range(len(tgt))])

    val_windows = val_targets = None
    if val_corpus:
        vpad, vtgt = collect(val_corpus)
        vindex = np.array([(i, t) for i, tgt in enumerate(vtgt) for t in range(len(tgt))])
        val_rng = np.random.Generator(np.random.PCG64(val_seed))
        take = min(VAL_WINDOW_CAP, len(vindex))
        pick = vindex[val_rng.choice(len(vindex), size=take, replace=False)]
        val_windows = np.concatenate([
            _gather_windows(vpad[i], np.array([t]), window_len) for i, t in pick])
        val_targets = np.stack([vtgt[i][t] for i, t in pick])

    params = model.params()
    adam = Adam(params, train_cfg.learning_rate, train_cfg.beta1, train_cfg.beta2,
                train_cfg.eps)
    root = lifter_cfg.root_index
    history = []
    for epoch in range(train_cfg.epochs):
        lr = train_cfg.learning_rate * train_cfg.lr_decay ** epoch
        adam.lr = lr
        perm = order_rng.permutation(len(index))
        if train_cfg.samples_per_epoch is not None:
            perm = perm[:train_cfg.samples_per_epoch]
        losses = []
        for start in range(0, len(perm), train_cfg.batch_size):
            batch = index[perm[start:start + train_cfg.batch_size]]
            if len(batch) < 2:
                continue  # batchnorm needs at least two samples
            windows = np.concatenate([
                _gather_windows(padded[i], np.array([t]), window_len) for i, t in batch])
            tgt = np.stack([targets[i][t] for i, t in batch])
            alphas = aug_rng.uniform(*train_cfg.augment_range, size=len(batch))
            windows *= alphas[:, None, None]
            tgt = tgt.copy()
            tgt[:, 2] /= alphas  # depth of the location target

            pred_loc, pred_rel = model.forward(windows, train=True, rng=drop_rng)
            pred_vec = np.concatenate(
                [pred_loc, np.delete(pred_rel, root, axis=1).reshape(len(batch), -1)],
                axis=1)
            loss = l1_loss(pred_vec, tgt)
            if not np.isfinite(loss):
                raise RuntimeError(
                    f"training diverged: non-finite loss at epoch {epoch}, step {len(losses)}")
            losses.append(loss)

            grad_vec = np.sign(pred_vec - tgt) / len(batch)
            grad_loc = grad_vec[:, :3]
            grad_rel = np.insert(grad_vec[:, 3:].reshape(len(batch), -1, 3),
                                 root, 0.0, axis=1)
            model.backward(grad_loc, grad_rel)
            adam.step(params, model.grads())

        row = {"epoch": epoch, "lr": lr,
               "train_loss": float(np.mean(losses)) if losses else float("nan"),
               "val_loss": None}
        if val_windows is not None:
            row["val_loss"] = _eval_loss(model, val_windows, val_targets, root)
        history.append(row)
    return model, history


def _eval_loss(model: PoseLifter, windows: np.ndarray, targets: np.ndarray,
               root: int, chunk: int = 256) -> float:
    """Mean L1 loss in eval mode, evaluated in chunks to bound memory."""
    total = 0.0
    for start in range(0, len(windows), chunk):
        loc, rel = model.forward(windows[start:start + chunk])
        vec = np.concatenate(
            [loc, np.delete(rel, root, axis=1).reshape(len(loc), -1)], axis=1)
        total += float(np.abs(vec - targets[start:start + chunk]).sum())
    return total / len(windows)


def predict_track(track: PersonTrack, cam: CameraIntrinsics,
                  model: PoseLifter) -> TrackPrediction:
    """Per-frame 3D estimates for every frame of the track.

    The padded track runs through the valid convolution stack in one pass,
    which is exactly the sliding 81-frame window evaluated at every center;
    the prediction at frame t depends only on frames [t-w, t+w]. Visibility
    is left at zero here; the caller fills it from the confidence trace.
    """
    w = model.cfg.half_window
    inputs = prepare_track_inputs(track, cam, model.cfg.num_joints)
    padded = np.pad(inputs.x, ((0, 0), (w, w)), mode="edge")
    loc, rel = model.forward_sequence(padded)
    return TrackPrediction(
        person_id=track.person_id,
        loc=loc,
        rel=rel,
        visibility=np.zeros(len(track)),
        had_detection=inputs.had_detection,
    )
