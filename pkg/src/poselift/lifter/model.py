"""Temporal convolutional 2D-to-3D lifting network.

The network consumes a window of 2w+1 frames of normalized 2D joints and
regresses the absolute root location plus the root-relative pose of the
center frame. Architecture: an initial k=3 convolution followed by three
residual blocks (dilated k=3 conv, then k=1 conv, each followed by
BatchNorm, ReLU and Dropout; the identity path is center-cropped in time),
then a k=1 linear head. With block dilations (3, 9, 27) the receptive field
is 3 + 2 * (3 + 9 + 27) = 81 frames = 2w+1 for w=40.

Run on a longer padded sequence, the same valid convolutions produce the
per-frame predictions of every sliding window in one pass; outputs at frame t
structurally depend only on frames [t-w, t+w].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from .layers import BatchNorm1d, Conv1d, Dropout, ReLU

MODEL_FORMAT = "tpn-v1"

STD_FLOOR = 1e-6


@dataclass(frozen=True)
class LifterConfig:
    num_joints: int = 17
    root_index: int = 14
    half_window: int = 40
    channels: int = 256  # desk-scale runs use 64
    num_blocks: int = 3
    dropout_rate: float = 0.25
    dilations: tuple = (3, 9, 27)

    def __post_init__(self):
        object.__setattr__(self, "dilations", tuple(int(d) for d in self.dilations))
        if self.num_blocks != 3 or len(self.dilations) != 3:
            raise ValidationError("the lifter uses exactly three residual blocks")
        if self.num_joints < 2 or not 0 <= self.root_index < self.num_joints:
            raise ValidationError("invalid joint count or root index")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValidationError("dropout_rate must lie in [0, 1)")
        rf = 3 + 2 * sum(self.dilations)
        if rf != self.window_len:
            raise ValidationError(
                f"receptive field {rf} does not cover the window of {self.window_len} frames")

    @property
    def window_len(self) -> int:
        return 2 * self.half_window + 1

    @property
    def input_dim(self) -> int:
        return 2 * self.num_joints

    @property
    def output_dim(self) -> int:
        return 3 + 3 * (self.num_joints - 1)


@dataclass
class NormStats:
    """Per-dimension standardization of network inputs and outputs."""

    in_mean: np.ndarray
    in_std: np.ndarray
    out_mean: np.ndarray
    out_std: np.ndarray

    def __post_init__(self):
        self.in_mean = np.asarray(self.in_mean, dtype=np.float64)
        self.in_std = np.maximum(np.asarray(self.in_std, dtype=np.float64), STD_FLOOR)
        self.out_mean = np.asarray(self.out_mean, dtype=np.float64)
        self.out_std = np.maximum(np.asarray(self.out_std, dtype=np.float64), STD_FLOOR)

    @classmethod
    def from_data(cls, inputs: np.ndarray, outputs: np.ndarray) -> "NormStats":
        """inputs (M, 2J) and outputs (M, D) pooled over the training set."""
        return cls(inputs.mean(axis=0), inputs.std(axis=0),
                   outputs.mean(axis=0), outputs.std(axis=0))

    def standardize_output(self, y: np.ndarray) -> np.ndarray:
        return (y - self.out_mean) / self.out_std

    def destandardize_output(self, y: np.ndarray) -> np.ndarray:
        return y * self.out_std + self.out_mean

    def to_dict(self) -> dict:
        return {
            "in_mean": self.in_mean.tolist(),
            "in_std": self.in_std.tolist(),
            "out_mean": self.out_mean.tolist(),
            "out_std": self.out_std.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "NormStats":
        return cls(np.array(doc["in_mean"]), np.array(doc["in_std"]),
                   np.array(doc["out_mean"]), np.array(doc["out_std"]))


class _Block:
    """Residual block: dilated k=3 conv then k=1 conv, BN/ReLU/Dropout after each."""

    def __init__(self, channels: int, dilation: int, dropout_rate: float, rng,
                 project_skip: bool):
        self.dilation = dilation
        self.conv1 = Conv1d(channels, channels, 3, dilation, rng)
        self.bn1 = BatchNorm1d(channels)
        self.relu1 = ReLU()
        self.drop1 = Dropout(dropout_rate)
        self.conv2 = Conv1d(channels, channels, 1, 1, rng)
        self.bn2 = BatchNorm1d(channels)
        self.relu2 = ReLU()
        self.drop2 = Dropout(dropout_rate)
        # The first block carries a learnable 1x1 projection on its skip path;
        # later blocks use a plain center-cropped identity.
        self.skip = Conv1d(channels, channels, 1, 1, init="identity") if project_skip else None

    def forward(self, x: np.ndarray, train: bool, rng, reuse_masks: bool) -> np.ndarray:
        d = self.dilation
        cropped = x[:, :, d:x.shape[2] - d]
        skip = self.skip.forward(cropped) if self.skip is not None else cropped
        z = self.conv1.forward(x)
        z = self.bn1.forward(z, train)
        z = self.relu1.forward(z)
        z = self.drop1.forward(z, train, rng, reuse_masks)
        z = self.conv2.forward(z)
        z = self.bn2.forward(z, train)
        z = self.relu2.forward(z)
        z = self.drop2.forward(z, train, rng, reuse_masks)
        return skip + z

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        g = self.drop2.backward(grad_out)
        g = self.relu2.backward(g)
        g = self.bn2.backward(g)
        g = self.conv2.backward(g)
        g = self.drop1.backward(g)
        g = self.relu1.backward(g)
        g = self.bn1.backward(g)
        grad_x = self.conv1.backward(g)
        grad_skip = self.skip.backward(grad_out) if self.skip is not None else grad_out
        d = self.dilation
        grad_x[:, :, d:grad_x.shape[2] - d] += grad_skip
        return grad_x


class PoseLifter:
    """The windowed temporal regressor with manual backprop."""

    def __init__(self, cfg: LifterConfig, norm: NormStats, seed=0):
        if norm.in_mean.shape != (cfg.input_dim,) or norm.out_mean.shape != (cfg.output_dim,):
            raise ValidationError("normalization stats do not match the model dimensions")
        self.cfg = cfg
        self.norm = norm
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        rng = np.random.Generator(np.random.PCG64(ss))
        self.conv_in = Conv1d(cfg.input_dim, cfg.channels, 3, 1, rng)
        self.bn_in = BatchNorm1d(cfg.channels)
        self.relu_in = ReLU()
        self.drop_in = Dropout(cfg.dropout_rate)
        self.blocks = [
            _Block(cfg.channels, d, cfg.dropout_rate, rng, project_skip=(i == 0))
            for i, d in enumerate(cfg.dilations)
        ]
        self.head = Conv1d(cfg.channels, cfg.output_dim, 1, 1, rng)

    # ---- parameter access -------------------------------------------------

    def named_params(self):
        items = [
            ("conv_in.weight", self.conv_in.weight), ("conv_in.bias", self.conv_in.bias),
            ("bn_in.gamma", self.bn_in.gamma), ("bn_in.beta", self.bn_in.beta),
        ]
        for i, blk in enumerate(self.blocks):
            items += [
                (f"block{i}.conv1.weight", blk.conv1.weight), (f"block{i}.conv1.bias", blk.conv1.bias),
                (f"block{i}.bn1.gamma", blk.bn1.gamma), (f"block{i}.bn1.beta", blk.bn1.beta),
                (f"block{i}.conv2.weight", blk.conv2.weight), (f"block{i}.conv2.bias", blk.conv2.bias),
                (f"block{i}.bn2.gamma", blk.bn2.gamma), (f"block{i}.bn2.beta", blk.bn2.beta),
            ]
            if blk.skip is not None:
                items += [(f"block{i}.skip.weight", blk.skip.weight),
                          (f"block{i}.skip.bias", blk.skip.bias)]
        items += [("head.weight", self.head.weight), ("head.bias", self.head.bias)]
        return items

    def params(self):
        return [p for _, p in self.named_params()]

    def named_grads(self):
        items = [
            ("conv_in.weight", self.conv_in.grad_weight), ("conv_in.bias", self.conv_in.grad_bias),
            ("bn_in.gamma", self.bn_in.grad_gamma), ("bn_in.beta", self.bn_in.grad_beta),
        ]
        for i, blk in enumerate(self.blocks):
            items += [
                (f"block{i}.conv1.weight", blk.conv1.grad_weight), (f"block{i}.conv1.bias", blk.conv1.grad_bias),
                (f"block{i}.bn1.gamma", blk.bn1.grad_gamma), (f"block{i}.bn1.beta", blk.bn1.grad_beta),
                (f"block{i}.conv2.weight", blk.conv2.grad_weight), (f"block{i}.conv2.bias", blk.conv2.grad_bias),
                (f"block{i}.bn2.gamma", blk.bn2.grad_gamma), (f"block{i}.bn2.beta", blk.bn2.grad_beta),
            ]
            if blk.skip is not None:
                items += [(f"block{i}.skip.weight", blk.skip.grad_weight),
                          (f"block{i}.skip.bias", blk.skip.grad_bias)]
        items += [("head.weight", self.head.grad_weight), ("head.bias", self.head.grad_bias)]
        return items

    def grads(self):
        return [g for _, g in self.named_grads()]

    def running_stats(self):
        items = [("bn_in", self.bn_in)]
        items += [(f"block{i}.bn1", b.bn1) for i, b in enumerate(self.blocks)]
        items += [(f"block{i}.bn2", b.bn2) for i, b in enumerate(self.blocks)]
        return items

    # ---- forward / backward -----------------------------------------------

    def _run(self, x: np.ndarray, train: bool, rng, reuse_masks: bool) -> np.ndarray:
        """Core network on standardized input (N, 2J, T) -> (N, D, T_out)."""
        z = self.conv_in.forward(x)
        z = self.bn_in.forward(z, train)
        z = self.relu_in.forward(z)
        z = self.drop_in.forward(z, train, rng, reuse_masks)
        for blk in self.blocks:
            z = blk.forward(z, train, rng, reuse_masks)
        return self.head.forward(z)

    def _standardize_in(self, x: np.ndarray) -> np.ndarray:
        return (x - self.norm.in_mean[None, :, None]) / self.norm.in_std[None, :, None]

    def _expand_rel(self, flat: np.ndarray) -> np.ndarray:
        """(..., 3(J-1)) -> (..., J, 3) with a zero root row."""
        lead = flat.shape[:-1]
        nonroot = flat.reshape(lead + (self.cfg.num_joints - 1, 3))
        return np.insert(nonroot, self.cfg.root_index, 0.0, axis=-2)

    def forward(self, windows: np.ndarray, train: bool = False, rng=None,
                reuse_dropout_masks: bool = False):
        """Windows (N, 2J, 2w+1) of normalized 2D coords -> (loc (N,3), rel (N,J,3)) in mm."""
        windows = np.asarray(windows, dtype=np.float64)
        if windows.ndim != 3 or windows.shape[1] != self.cfg.input_dim \
                or windows.shape[2] != self.cfg.window_len:
            raise ValidationError(
                f"expected windows shaped (N, {self.cfg.input_dim}, {self.cfg.window_len})")
        if not np.all(np.isfinite(windows)):
            raise ValidationError("non-finite values in the input window")
        y = self._run(self._standardize_in(windows), train, rng, reuse_dropout_masks)
        y_mm = y[:, :, 0] * self.norm.out_std[None, :] + self.norm.out_mean[None, :]
        return y_mm[:, :3], self._expand_rel(y_mm[:, 3:])

    def backward(self, grad_loc: np.ndarray, grad_rel: np.ndarray) -> np.ndarray:
        """Backprop grads on the mm outputs of forward(); returns input grad.

        Parameter gradients land on the layers (see named_grads). grad_rel is
        (N, J, 3); its root row is ignored, matching the structural zero.
        """
        nonroot = np.delete(grad_rel, self.cfg.root_index, axis=1)
        grad_y = np.concatenate([grad_loc, nonroot.reshape(grad_loc.shape[0], -1)], axis=1)
        g = (grad_y * self.norm.out_std[None, :])[:, :, None]
        g = self.head.backward(g)
        for blk in reversed(self.blocks):
            g = blk.backward(g)
        g = self.drop_in.backward(g)
        g = self.relu_in.backward(g)
        g = self.bn_in.backward(g)
        g = self.conv_in.backward(g)
        return g / self.norm.in_std[None, :, None]

    def predict_window(self, window: np.ndarray):
        """Single window (2w+1, 2J) -> (loc (3,), rel (J,3)), eval mode."""
        window = np.asarray(window, dtype=np.float64)
        if window.ndim != 2 or window.shape[0] != self.cfg.window_len \
                or window.shape[1] != self.cfg.input_dim:
            raise ValidationError(
                f"expected a ({self.cfg.window_len}, {self.cfg.input_dim}) window")
        loc, rel = self.forward(window.T[None])
        return loc[0], rel[0]

    def forward_sequence(self, x: np.ndarray):
        """Padded sequence (2J, T + 2w) -> per-frame (loc (T,3), rel (T,J,3)).

        Eval mode only; the valid convolutions make the output at frame t a
        function of exactly the frames [t-w, t+w] of the padded input.
        """
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] != self.cfg.input_dim:
            raise ValidationError(f"expected (2J, T) input with 2J={self.cfg.input_dim}")
        if x.shape[1] < self.cfg.window_len:
            raise ValidationError("sequence shorter than the receptive field")
        if not np.all(np.isfinite(x)):
            raise ValidationError("non-finite values in the input sequence")
        y = self._run(self._standardize_in(x[None]), False, None, False)[0]  # (D, T)
        y_mm = y.T * self.norm.out_std[None, :] + self.norm.out_mean[None, :]
        return y_mm[:, :3], self._expand_rel(y_mm[:, 3:])

    # ---- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        params = {}
        for name, arr in self.named_params():
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"non-finite parameter {name}")
            params[name] = {"shape": list(arr.shape), "data": arr.ravel().tolist()}
        running = {}
        for name, bn in self.running_stats():
            running[name] = {"mean": bn.running_mean.tolist(), "var": bn.running_var.tolist()}
        return {
            "format": MODEL_FORMAT,
            "config": {
                "num_joints": self.cfg.num_joints,
                "root_index": self.cfg.root_index,
                "half_window": self.cfg.half_window,
                "channels": self.cfg.channels,
                "num_blocks": self.cfg.num_blocks,
                "dropout_rate": self.cfg.dropout_rate,
                "dilations": list(self.cfg.dilations),
            },
            "params": params,
            "running_stats": running,
            "norm_stats": self.norm.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PoseLifter":
        if doc.get("format") != MODEL_FORMAT:
            raise ValidationError(f"unsupported model format {doc.get('format')!r}")
        c = doc["config"]
        cfg = LifterConfig(num_joints=c["num_joints"], root_index=c["root_index"],
                           half_window=c["half_window"], channels=c["channels"],
                           num_blocks=c["num_blocks"], dropout_rate=c["dropout_rate"],
                           dilations=tuple(c["dilations"]))
        model = cls(cfg, NormStats.from_dict(doc["norm_stats"]), seed=0)
        by_name = dict(model.named_params())
        if set(by_name) != set(doc["params"]):
            raise ValidationError("model parameter names do not match the format")
        for name, entry in doc["params"].items():
            arr = np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
            if arr.shape != by_name[name].shape:
                raise ValidationError(f"parameter {name} has shape {arr.shape}, "
                                      f"expected {by_name[name].shape}")
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"non-finite parameter {name}")
            by_name[name][...] = arr
        stats = dict(model.running_stats())
        for name, entry in doc["running_stats"].items():
            if name not in stats:
                raise ValidationError(f"unknown batchnorm {name}")
            stats[name].running_mean[...] = np.array(entry["mean"], dtype=np.float64)
            var = np.array(entry["var"], dtype=np.float64)
            if np.any(var < 0):
                raise ValidationError("running variance must be non-negative")
            stats[name].running_var[...] = var
        return model
