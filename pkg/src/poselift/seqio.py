"""File formats: sequence JSONL, prediction JSONL, reports, loss logs.

All writers emit canonical bytes: compact separators, full-precision floats
(repr round-trip), fixed key order. Write -> read -> write reproduces files
byte-identically, which the determinism checks rely on.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .geometry import (
    CameraIntrinsics,
    PersonTrack,
    Pose2D,
    Pose3D,
    Sequence,
    Skeleton,
)

METRIC_ORDER = ("mrpe", "mpjpe", "pck3d", "n_mrpe", "n_mpjpe", "count")


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


# ---- sequences -------------------------------------------------------------


def write_sequence(seq: Sequence, path) -> None:
    path = Path(path)
    lines = [_dumps({
        "type": "sequence_meta",
        "seq_id": seq.seq_id,
        "fps": seq.fps,
        "num_frames": seq.num_frames,
        "camera": {"fx": seq.camera.fx, "fy": seq.camera.fy,
                   "cx": seq.camera.cx, "cy": seq.camera.cy},
        "joints": list(seq.skeleton.joint_names),
        "root_index": seq.skeleton.root_index,
        "edges": [list(e) for e in seq.skeleton.edges],
    })]
    for t in range(seq.num_frames):
        persons = []
        for track in seq.tracks:
            det = track.detections[t]
            gt = track.gt[t]
            if det is not None:
                kp2d = [[float(u), float(v), float(c)]
                        for (u, v), c in zip(det.coords, det.confidence)]
            else:
                kp2d = None
            persons.append({
                "id": track.person_id,
                "detected": det is not None,
                "kp2d": kp2d,
                "gt_loc": gt.location.tolist() if gt is not None else None,
                "gt_rel": gt.relative.tolist() if gt is not None else None,
            })
        lines.append(_dumps({"t": t, "persons": persons}))
    path.write_text("\n".join(lines) + "\n")


def read_sequence(path) -> Sequence:
    path = Path(path)
    with path.open() as fh:
        try:
            meta = json.loads(fh.readline())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: not a sequence file ({exc})") from exc
        if meta.get("type") != "sequence_meta":
            raise ValidationError(f"{path}: missing sequence_meta header")
        skeleton = Skeleton(tuple(meta["joints"]), meta["root_index"],
                            tuple(tuple(e) for e in meta["edges"]))
        cam = CameraIntrinsics(**meta["camera"])
        num_frames = meta["num_frames"]

        person_ids: list = []
        detections: dict = {}
        gts: dict = {}
        frames_seen = 0
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            if rec["t"] != frames_seen:
                raise ValidationError(f"{path}: frame records out of order at t={rec['t']}")
            for person in rec["persons"]:
                pid = person["id"]
                if pid not in detections:
                    person_ids.append(pid)
                    detections[pid] = []
                    gts[pid] = []
                if person["detected"]:
                    kp = np.array(person["kp2d"], dtype=np.float64)
                    det = Pose2D(kp[:, :2], kp[:, 2], detected=True)
                else:
                    det = None
                detections[pid].append(det)
                if person["gt_loc"] is not None:
                    gts[pid].append(Pose3D(np.array(person["gt_loc"]),
                                           np.array(person["gt_rel"])))
                else:
                    gts[pid].append(None)
            frames_seen += 1
    if frames_seen != num_frames:
        raise ValidationError(f"{path}: expected {num_frames} frames, found {frames_seen}")
    tracks = [PersonTrack(pid, detections[pid], gts[pid]) for pid in person_ids]
    return Sequence(meta["seq_id"], num_frames, meta["fps"], cam, skeleton, tracks)


def read_corpus(directory) -> list:
    """All sequences in a directory, ordered by file name."""
    directory = Path(directory)
    if not directory.is_dir():
        raise ValidationError(f"corpus directory {directory} does not exist")
    files = sorted(directory.glob("*.jsonl"))
    if not files:
        raise ValidationError(f"no sequence files in {directory}")
    return [read_sequence(f) for f in files]


# ---- predictions -----------------------------------------------------------


@dataclass
class TrackPrediction:
    """Per-frame 3D output for one person, with the inputs' visibility trace."""

    person_id: str
    loc: np.ndarray  # (T, 3) mm
    rel: np.ndarray  # (T, J, 3) mm, zero root row
    visibility: np.ndarray  # (T,) in [0, 1]
    had_detection: np.ndarray  # (T,) bool
    energy: float | None = None
    breakdown: dict | None = None
    iterations: int | None = None

    def __post_init__(self):
        self.loc = np.asarray(self.loc, dtype=np.float64)
        self.rel = np.asarray(self.rel, dtype=np.float64)
        self.visibility = np.asarray(self.visibility, dtype=np.float64)
        self.had_detection = np.asarray(self.had_detection, dtype=bool)

    @property
    def num_frames(self) -> int:
        return self.loc.shape[0]


def write_predictions(path, method: str, preds: dict, fps: float,
                      root_index: int) -> None:
    """preds maps (seq_id, person_id) -> TrackPrediction; order is preserved."""
    path = Path(path)
    first = next(iter(preds.values()))
    lines = [_dumps({
        "type": "predictions_meta",
        "method": method,
        "num_joints": int(first.rel.shape[1]),
        "root_index": int(root_index),
        "fps": float(fps),
    })]
    for (seq_id, person_id), tp in preds.items():
        for t in range(tp.num_frames):
            lines.append(_dumps({
                "seq_id": seq_id,
                "person_id": person_id,
                "t": t,
                "loc": tp.loc[t].tolist(),
                "rel": tp.rel[t].tolist(),
                "visibility": float(tp.visibility[t]),
                "had_detection": bool(tp.had_detection[t]),
            }))
        if tp.energy is not None:
            lines.append(_dumps({
                "type": "track_energy",
                "seq_id": seq_id,
                "person_id": person_id,
                "energy": tp.energy,
                "breakdown": tp.breakdown,
                "iterations": tp.iterations,
            }))
    path.write_text("\n".join(lines) + "\n")


def read_predictions(path):
    """Returns (meta dict, dict[(seq_id, person_id) -> TrackPrediction])."""
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"predictions file {path} does not exist")
    rows: dict = {}
    energies: dict = {}
    with path.open() as fh:
        try:
            meta = json.loads(fh.readline())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: not a predictions file ({exc})") from exc
        if meta.get("type") != "predictions_meta":
            raise ValidationError(f"{path}: missing predictions_meta header")
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            if rec.get("type") == "track_energy":
                energies[(rec["seq_id"], rec["person_id"])] = rec
                continue
            rows.setdefault((rec["seq_id"], rec["person_id"]), []).append(rec)
    preds = {}
    for key, recs in rows.items():
        if [r["t"] for r in recs] != list(range(len(recs))):
            raise ValidationError(f"{path}: frames of {key} are not contiguous")
        energy = energies.get(key)
        preds[key] = TrackPrediction(
            person_id=key[1],
            loc=np.array([r["loc"] for r in recs]),
            rel=np.array([r["rel"] for r in recs]),
            visibility=np.array([r["visibility"] for r in recs]),
            had_detection=np.array([r["had_detection"] for r in recs]),
            energy=None if energy is None else energy["energy"],
            breakdown=None if energy is None else energy["breakdown"],
            iterations=None if energy is None else energy["iterations"],
        )
    return meta, preds


# ---- reports ---------------------------------------------------------------


def write_report(report: dict, csv_path, json_path) -> None:
    """report: {"subsets": {name: {"per_sequence": {seq: {metric: v}},
    "mean": {metric: v}}}}; CSV rows (sequence, subset, metric, value)."""
    lines = ["sequence,subset,metric,value"]
    for subset, block in report["subsets"].items():
        for seq_id, metrics in block["per_sequence"].items():
            for metric in METRIC_ORDER:
                if metric in metrics:
                    lines.append(f"{seq_id},{subset},{metric},{metrics[metric]!r}")
        for metric in METRIC_ORDER:
            if metric in block["mean"]:
                lines.append(f"mean,{subset},{metric},{block['mean'][metric]!r}")
    Path(csv_path).write_text("\n".join(lines) + "\n")
    Path(json_path).write_text(_dumps(report) + "\n")


def write_comparison(table: dict, csv_path, json_path) -> None:
    """table: {method: {metric: value}}; exactly one CSV row per method per metric."""
    lines = ["method,metric,value"]
    for method, metrics in table.items():
        for metric in METRIC_ORDER:
            if metric in metrics:
                lines.append(f"{method},{metric},{metrics[metric]!r}")
    Path(csv_path).write_text("\n".join(lines) + "\n")
    Path(json_path).write_text(_dumps(table) + "\n")


def write_loss_log(history: list, path) -> None:
    lines = ["epoch,lr,train_loss,val_loss"]
    for row in history:
        val = "" if row.get("val_loss") is None else repr(row["val_loss"])
        lines.append(f"{row['epoch']},{row['lr']!r},{row['train_loss']!r},{val}")
    Path(path).write_text("\n".join(lines) + "\n")
