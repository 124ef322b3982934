"""Command-line front end: corpus generation, training, prediction,
refinement, evaluation, comparison, and trajectory plots.

Configuration is a single JSON document merged over DEFAULT_CONFIG; flags
override config fields and --seed overrides the config seed. Every command
is deterministic given (config, seed): re-running overwrites its outputs
byte-identically. Exit codes: 0 success, 2 validation error, 1 runtime
failure.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import baselines, metrics, seqio, synth
from .errors import ValidationError
from .geometry import CameraIntrinsics
from .lifter.model import LifterConfig, PoseLifter
from .lifter.train import TrainConfig, predict_track, train_lifter
from .plotting import render_track_svg
from .refinement import RefineConfig, refine_track, visibility_scores

SUBSETS = ("all", "visible", "occluded")
REFINE_METHODS = {"energy": "refined", "interp": "interp", "one-euro": "one-euro"}

# Desk-scale defaults: small enough to train on a laptop CPU in minutes.
# The dataclass defaults in lifter.model / lifter.train keep the full-scale
# values (channels 256, 80 epochs, 2000-frame sequences).
DEFAULT_CONFIG = {
    "seed": 0,
    "corpus": {
        "train_sequences": 20,
        "val_sequences": 5,
        "test_sequences": 10,
        "num_persons": 4,
        "num_frames": 300,
        "fps": 30.0,
        "camera": {"fx": 1200.0, "fy": 1200.0, "cx": 960.0, "cy": 540.0},
        "noise_px": 2.0,
        "occlusion_miss_threshold": 0.60,
        "depth_range": [2500.0, 7000.0],
        "capsule_radius_scale": 0.05,
        "joint_radius_scale": 0.03,
        "max_step_mm": 60.0,
    },
    "lifter": {
        "num_joints": 17,
        "root_index": 14,
        "half_window": 40,
        "channels": 64,
        "num_blocks": 3,
        "dropout_rate": 0.25,
        "dilations": [3, 9, 27],
    },
    "train": {
        "learning_rate": 1e-3,
        "lr_decay": 0.95,
        "epochs": 8,
        "batch_size": 64,
        "beta1": 0.9,
        "beta2": 0.999,
        "eps": 1e-8,
        "augment_range": [0.7, 1.3],
        "samples_per_epoch": 4000,
    },
    "refine": {
        "tau1": 20,
        "tau2": 1,
        "clip_m": 1.0,
        "lam1": 0.1,
        "lam2": 1.0,
        "lam_rel": 0.1,
        "learning_rate": 1e-2,
        "iterations": 500,
        "median_window": 5,
        "visibility_threshold": 0.1,
    },
    "metrics": {
        "pck_threshold_mm": 150.0,
    },
}


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in base:
            raise ValidationError(f"unknown config key {path + key!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ValidationError(f"config key {path + key!r} must be an object")
            out[key] = _merge(base[key], value, path + key + ".")
        else:
            out[key] = value
    return out


def load_config(path, seed_override=None) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ValidationError(f"config file {p} does not exist")
        try:
            user = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config file {p} is not valid JSON: {exc}") from exc
        if not isinstance(user, dict):
            raise ValidationError("config root must be a JSON object")
        cfg = _merge(cfg, user)
    if seed_override is not None:
        cfg["seed"] = int(seed_override)
    return cfg


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _synth_config(cfg: dict) -> synth.SynthConfig:
    c = cfg["corpus"]
    return synth.SynthConfig(
        num_persons=c["num_persons"],
        num_frames=c["num_frames"],
        fps=c["fps"],
        camera=CameraIntrinsics(**c["camera"]),
        noise_px=c["noise_px"],
        occlusion_miss_threshold=c["occlusion_miss_threshold"],
        depth_range=tuple(c["depth_range"]),
        capsule_radius_scale=c["capsule_radius_scale"],
        joint_radius_scale=c["joint_radius_scale"],
        max_step_mm=c["max_step_mm"],
    )


def _lifter_config(cfg: dict) -> LifterConfig:
    c = dict(cfg["lifter"])
    c["dilations"] = tuple(c["dilations"])
    return LifterConfig(**c)


def _train_config(cfg: dict) -> TrainConfig:
    c = dict(cfg["train"])
    c["augment_range"] = tuple(c["augment_range"])
    return TrainConfig(seed=cfg["seed"], **c)


def _refine_config(cfg: dict) -> RefineConfig:
    return RefineConfig(**cfg["refine"])


def _load_model(path) -> PoseLifter:
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"model file {p} does not exist")
    try:
        payload = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"model file {p} is not valid JSON: {exc}") from exc
    return PoseLifter.from_dict(payload)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---- commands ---------------------------------------------------------------


def cmd_generate(args) -> None:
    cfg = load_config(args.config, args.seed)
    sc = _synth_config(cfg)
    out = _out_dir(args)
    counts = (
        ("train", cfg["corpus"]["train_sequences"]),
        ("val", cfg["corpus"]["val_sequences"]),
        ("test", cfg["corpus"]["test_sequences"]),
    )
    manifest = {"config_sha256": config_hash(cfg), "config": cfg, "splits": {}}
    total = 0
    for split, count in counts:
        if count < 0:
            raise ValidationError("sequence counts must be >= 0")
        split_dir = out / split
        split_dir.mkdir(parents=True, exist_ok=True)
        rows = []
        for i in range(count):
            seed = synth.sequence_seed(cfg["seed"], split, i)
            seq = synth.generate_sequence(sc, seed, seq_id=f"{split}-{i:03d}")
            fname = f"{seq.seq_id}.jsonl"
            seqio.write_sequence(seq, split_dir / fname)
            rows.append({"seq_id": seq.seq_id, "file": f"{split}/{fname}", "seed": seed})
            total += 1
        manifest["splits"][split] = rows
    (out / "manifest.json").write_text(
        json.dumps(manifest, separators=(",", ":"), allow_nan=False) + "\n")
    print(f"wrote {total} sequences and manifest.json to {out}")


def cmd_train(args) -> None:
    cfg = load_config(args.config, args.seed)
    corpus_dir = Path(args.corpus)
    train_dir = corpus_dir / "train"
    if not train_dir.is_dir():
        # Allow pointing straight at a directory of sequence files.
        train_dir = corpus_dir
    train_seqs = seqio.read_corpus(train_dir)
    val_dir = corpus_dir / "val"
    val_seqs = None
    if val_dir.is_dir() and any(val_dir.glob("*.jsonl")):
        val_seqs = seqio.read_corpus(val_dir)
    model, history = train_lifter(train_seqs, _lifter_config(cfg), _train_config(cfg),
                                  val_corpus=val_seqs)
    out = _out_dir(args)
    (out / "model.json").write_text(
        json.dumps(model.to_dict(), separators=(",", ":"), allow_nan=False) + "\n")
    seqio.write_loss_log(history, out / "loss_log.csv")
    last = history[-1]
    val_note = "" if last["val_loss"] is None else f", val loss {last['val_loss']:.4f}"
    print(f"trained {len(history)} epochs, final train loss "
          f"{last['train_loss']:.4f}{val_note}; wrote model.json and loss_log.csv")


def _corpus_fps(sequences) -> float:
    fps = {seq.fps for seq in sequences}
    if len(fps) != 1:
        raise ValidationError("sequences in a corpus must share one fps")
    return float(fps.pop())


def cmd_predict(args) -> None:
    cfg = load_config(args.config, args.seed)
    model = _load_model(args.model)
    sequences = seqio.read_corpus(args.corpus)
    rc = _refine_config(cfg)
    fps = _corpus_fps(sequences)
    preds = {}
    for seq in sequences:
        if seq.skeleton.num_joints != model.cfg.num_joints:
            raise ValidationError(
                f"sequence {seq.seq_id} has {seq.skeleton.num_joints} joints, "
                f"model expects {model.cfg.num_joints}")
        if seq.skeleton.root_index != model.cfg.root_index:
            raise ValidationError(f"root joint mismatch in {seq.seq_id}")
        for track in seq.tracks:
            tp = predict_track(track, seq.camera, model)
            tp.visibility = visibility_scores(track, rc.median_window)
            preds[(seq.seq_id, track.person_id)] = tp
    out = _out_dir(args)
    path = out / "predictions_raw.jsonl"
    seqio.write_predictions(path, "raw", preds, fps, model.cfg.root_index)
    print(f"wrote {len(preds)} track predictions to {path}")


def cmd_refine(args) -> None:
    cfg = load_config(args.config, args.seed)
    meta, preds = seqio.read_predictions(args.predictions)
    rc = _refine_config(cfg)
    tag = REFINE_METHODS[args.method]
    refined = {}
    if args.method == "energy":
        if args.model is None:
            raise ValidationError("--model is required for energy refinement")
        model = _load_model(args.model)
        if model.cfg.num_joints != meta["num_joints"]:
            raise ValidationError("model and predictions disagree on joint count")
        for key, tp in preds.items():
            res = refine_track(tp.loc, tp.rel, tp.visibility, rc, model.norm,
                               model.cfg.root_index)
            refined[key] = seqio.TrackPrediction(
                person_id=tp.person_id, loc=res.loc, rel=res.rel,
                visibility=tp.visibility, had_detection=tp.had_detection,
                energy=res.energy, breakdown=res.breakdown,
                iterations=res.iterations)
    else:
        for key, tp in preds.items():
            loc = baselines.linear_interpolate(tp.loc, tp.had_detection)
            rel = baselines.linear_interpolate(tp.rel, tp.had_detection)
            if args.method == "one-euro":
                loc = baselines.one_euro_filter(loc, meta["fps"])
                rel = baselines.one_euro_filter(rel, meta["fps"])
            refined[key] = seqio.TrackPrediction(
                person_id=tp.person_id, loc=loc, rel=rel,
                visibility=tp.visibility, had_detection=tp.had_detection)
    out = _out_dir(args)
    path = out / f"predictions_{tag}.jsonl"
    seqio.write_predictions(path, tag, refined, meta["fps"], meta["root_index"])
    print(f"wrote {len(refined)} {tag} tracks to {path}")


def _evaluate_predictions(pred_path, seq_by_id: dict, cfg: dict):
    """Returns (method, report dict) for one predictions file."""
    meta, preds = seqio.read_predictions(pred_path)
    threshold = cfg["refine"]["visibility_threshold"]
    pck_mm = cfg["metrics"]["pck_threshold_mm"]
    by_seq: dict = {}
    for (seq_id, pid), tp in preds.items():
        seq = seq_by_id.get(seq_id)
        if seq is None:
            raise ValidationError(f"predictions reference unknown sequence {seq_id!r}")
        if tp.num_frames != seq.num_frames:
            raise ValidationError(f"frame count mismatch for {seq_id}/{pid}")
        if tp.rel.shape[1] != seq.skeleton.num_joints:
            raise ValidationError(f"joint count mismatch for {seq_id}/{pid}")
        by_seq.setdefault(seq_id, {})[pid] = tp
    per_subset: dict = {name: {} for name in SUBSETS}
    for seq_id in sorted(by_seq):
        seq = seq_by_id[seq_id]
        tracks = {t.person_id: t for t in seq.tracks}
        people = by_seq[seq_id]
        unknown = set(people) - set(tracks)
        if unknown:
            raise ValidationError(f"predictions reference unknown persons {sorted(unknown)}")
        seq_preds = {pid: (tp.loc, tp.rel) for pid, tp in people.items()}
        seq_gt = {pid: tracks[pid].gt for pid in people}
        masks = {name: {pid: metrics.subset_filter(tp.visibility, name, threshold)
                        for pid, tp in people.items()} for name in SUBSETS}
        scored = metrics.evaluate_sequence(seq_preds, seq_gt, seq.skeleton.root_index,
                                           masks, pck_threshold=pck_mm)
        for name, values in scored.items():
            per_subset[name][seq_id] = values
    report = {"method": meta["method"], "subsets": {}}
    for name in SUBSETS:
        if per_subset[name]:
            report["subsets"][name] = {
                "per_sequence": per_subset[name],
                "mean": metrics.aggregate(per_subset[name]),
            }
    return meta["method"], report


def cmd_evaluate(args) -> None:
    cfg = load_config(args.config, args.seed)
    sequences = seqio.read_corpus(args.corpus)
    seq_by_id = {seq.seq_id: seq for seq in sequences}
    out = _out_dir(args)
    table = {}
    for pred_path in args.predictions:
        method, report = _evaluate_predictions(pred_path, seq_by_id, cfg)
        seqio.write_report(report, out / f"report_{method}.csv",
                           out / f"report_{method}.json")
        table[method] = report["subsets"]["all"]["mean"]
        print(f"{method}: " + ", ".join(
            f"{k} {v:.2f}" for k, v in report["subsets"]["all"]["mean"].items()
            if k != "count"))
    if len(args.predictions) > 1:
        seqio.write_comparison(table, out / "comparison.csv", out / "comparison.json")
        print(f"wrote comparison over {len(table)} methods")


def cmd_compare(args) -> None:
    cfg = load_config(args.config, args.seed)
    sequences = seqio.read_corpus(args.corpus)
    seq_by_id = {seq.seq_id: seq for seq in sequences}
    out = _out_dir(args)
    table = {}
    for pred_path in args.predictions:
        method, report = _evaluate_predictions(pred_path, seq_by_id, cfg)
        table[method] = report["subsets"]["all"]["mean"]
    seqio.write_comparison(table, out / "comparison.csv", out / "comparison.json")
    print(f"wrote comparison over {len(table)} methods to {out / 'comparison.csv'}")


def cmd_plot(args) -> None:
    sequences = seqio.read_corpus(args.corpus)
    seq = next((s for s in sequences if s.seq_id == args.seq), None)
    if seq is None:
        raise ValidationError(f"unknown sequence {args.seq!r}")
    _, preds = seqio.read_predictions(args.predictions)
    tp = preds.get((args.seq, args.person))
    if tp is None:
        raise ValidationError(f"no prediction for person {args.person!r} in {args.seq!r}")
    track = next((t for t in seq.tracks if t.person_id == args.person), None)
    if track is None:
        raise ValidationError(f"unknown person {args.person!r}")
    joint = seq.skeleton.root_index if args.joint is None else args.joint
    if not 0 <= joint < seq.skeleton.num_joints:
        raise ValidationError(f"joint index {joint} out of range")
    if any(g is None for g in track.gt):
        raise ValidationError("track has frames without ground truth; cannot plot")
    gt = np.stack([g.location + g.relative[joint] for g in track.gt])
    pred = tp.loc + tp.rel[:, joint]
    times = np.arange(seq.num_frames, dtype=np.float64) / seq.fps
    name = seq.skeleton.joint_names[joint]
    svg = render_track_svg(times, gt, pred, tp.had_detection,
                           f"{args.seq} / {args.person} / {name}")
    out = _out_dir(args)
    path = out / f"trajectory_{args.seq}_{args.person}.svg"
    path.write_text(svg)
    print(f"wrote {path}")


# ---- argument parsing -------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="poselift",
        description="absolute 3D pose pipeline: synthesize, train, predict, "
                    "refine, evaluate")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", metavar="PATH",
                        help="JSON config file; flags override its fields")
        sp.add_argument("--seed", type=int, metavar="N",
                        help="global seed (overrides the config seed)")
        sp.add_argument("--out", metavar="DIR", default=".",
                        help="output directory (default: current directory)")

    sp = sub.add_parser("generate", help="synthesize train/val/test corpus")
    common(sp)
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("train", help="train the lifting network")
    common(sp)
    sp.add_argument("--corpus", required=True, metavar="DIR",
                    help="corpus root (train/ and optional val/ subdirs)")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("predict", help="run the lifter over a corpus split")
    common(sp)
    sp.add_argument("--corpus", required=True, metavar="DIR",
                    help="directory of sequence files")
    sp.add_argument("--model", required=True, metavar="PATH")
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("refine", help="smooth predicted trajectories")
    common(sp)
    sp.add_argument("--predictions", required=True, metavar="PATH")
    sp.add_argument("--model", metavar="PATH",
                    help="model file (required for --method energy)")
    sp.add_argument("--method", choices=sorted(REFINE_METHODS), default="energy")
    sp.set_defaults(func=cmd_refine)

    sp = sub.add_parser("evaluate", help="score predictions against ground truth")
    common(sp)
    sp.add_argument("--corpus", required=True, metavar="DIR")
    sp.add_argument("--predictions", required=True, nargs="+", metavar="PATH")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("compare", help="tabulate several prediction files")
    common(sp)
    sp.add_argument("--corpus", required=True, metavar="DIR")
    sp.add_argument("--predictions", required=True, nargs="+", metavar="PATH")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("plot", help="render a trajectory SVG")
    common(sp)
    sp.add_argument("--corpus", required=True, metavar="DIR")
    sp.add_argument("--predictions", required=True, metavar="PATH")
    sp.add_argument("--seq", required=True, metavar="ID")
    sp.add_argument("--person", required=True, metavar="ID")
    sp.add_argument("--joint", type=int, metavar="N",
                    help="joint index (default: root)")
    sp.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
