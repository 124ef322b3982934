"""Seeded synthetic multi-person sequences with simulated 2D detections.

Persons are kinematic skeletons: the root follows a band-limited path (a few
random-phase sinusoids) inside a per-person depth band, limbs sway smoothly at
exactly constant bone lengths. The nearer half of the cast are walkers that
sweep across the image; the farther half are idlers that mostly stay put, so
occlusion gaps land on people whose true motion is small. 2D tracks come from
projecting the ground truth and corrupting it with an occlusion-aware detector
model: noise grows and confidence drops with the fraction of a joint covered
by a nearer person's body, and mostly-covered poses go undetected.

Everything is a pure function of (config, seed); identical inputs reproduce
byte-identical sequences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .geometry import (
    CameraIntrinsics,
    PersonTrack,
    Pose2D,
    Pose3D,
    Sequence,
    Skeleton,
    default_skeleton,
    project,
)

# Rest offsets from the hip (mm, y down) for the 17-joint default skeleton.
REST_POSE_17 = np.array([
    [0.0, -820.0, 0.0],     # head_top
    [0.0, -520.0, 0.0],     # neck
    [-180.0, -500.0, 0.0],  # right_shoulder
    [-220.0, -240.0, 0.0],  # right_elbow
    [-250.0, 10.0, 0.0],    # right_wrist
    [180.0, -500.0, 0.0],   # left_shoulder
    [220.0, -240.0, 0.0],   # left_elbow
    [250.0, 10.0, 0.0],     # left_wrist
    [-110.0, 0.0, 0.0],     # right_hip
    [-125.0, 420.0, 0.0],   # right_knee
    [-135.0, 830.0, 0.0],   # right_ankle
    [110.0, 0.0, 0.0],      # left_hip
    [125.0, 420.0, 0.0],    # left_knee
    [135.0, 830.0, 0.0],    # left_ankle
    [0.0, 0.0, 0.0],        # hip (root)
    [0.0, -260.0, 0.0],     # spine
    [0.0, -660.0, 0.0],     # head
])

# Root-path tunables (mm, Hz, mm/s). Walkers carry a slow wide "sweep"
# sinusoid whose phase starts near a zero crossing, so every sequence has them
# crossing the image; successive walkers sweep in opposite initial directions,
# which keeps one from shadowing another indefinitely. Sweep speed is tuned
# against the occlusion zone width so a typical crossing hides the farther
# person for tens of frames, not hundreds. Idlers sit in disjoint half-planes
# (alternating sides of the image) and barely move.
# Sweep turnarounds must land outside the idler home band in image space
# (amp - |start| at walker depth projects wider than the idler offsets at
# idler depth); otherwise a reversal parks one walker over an idler and the
# gap stretches far past the intended range.
WALKER_SWEEP_AMP_RANGE = (1200.0, 1700.0)
WALKER_SWEEP_FREQ_RANGE = (0.035, 0.070)
WALKER_SWEEP_PHASE_JITTER = 0.3  # radians around the zero crossing
WALKER_AMP_RANGE = (80.0, 250.0)
WALKER_FREQ_RANGE = (0.08, 0.30)
WALKER_START_RANGE = (-300.0, 300.0)
WALKER_DRIFT_RANGE = (0.0, 20.0)
WALKER_DEPTH_AMP_SCALE = (0.04, 0.12)  # x depth band width
IDLER_AMP_RANGE = (15.0, 60.0)
IDLER_FREQ_RANGE = (0.04, 0.15)
IDLER_START_RANGE = (300.0, 1000.0)  # offset into the idler's home side
IDLER_DRIFT_RANGE = (2.0, 8.0)
IDLER_DEPTH_AMP_SCALE = (0.01, 0.04)
VERTICAL_AMP_RANGE = (10.0, 40.0)
VERTICAL_FREQ_RANGE = (0.05, 0.40)
VERTICAL_START_RANGE = (-50.0, 250.0)
DEPTH_FREQ_RANGE = (0.03, 0.20)
ROOT_COMPONENT_RANGE = (2, 4)  # lateral sinusoids (walker sweep excluded)

# Limb-sway tunables (unitless direction perturbations).
SWAY_AMP_RANGE = (0.04, 0.18)
SWAY_FREQ_RANGE = (0.15, 1.00)
SWAY_COMPONENTS = 3

CONFIDENCE_NOISE_STD = 0.05
OCCLUSION_NOISE_GAIN = 4.0  # detection noise std multiplier is 1 + gain * occ

# Fixed equal-area polar grid used for partial circle/capsule coverage.
_QUAD_RINGS = 8
_QUAD_ANGLES = 16


def _default_camera() -> CameraIntrinsics:
    return CameraIntrinsics(fx=1200.0, fy=1200.0, cx=960.0, cy=540.0)


@dataclass(frozen=True)
class SynthConfig:
    num_persons: int = 4
    num_frames: int = 2000
    fps: float = 30.0
    camera: CameraIntrinsics = field(default_factory=_default_camera)
    noise_px: float = 2.0
    occlusion_miss_threshold: float = 0.60
    limb_lengths: tuple | None = None  # per-edge mm; None derives from the rest pose
    depth_range: tuple = (2500.0, 7000.0)
    capsule_radius_scale: float = 0.05  # x occluder 2D bbox height
    joint_radius_scale: float = 0.03  # x subject 2D bbox height
    max_step_mm: float = 60.0  # root per-frame displacement bound

    def __post_init__(self):
        if self.num_persons < 1:
            raise ValidationError("num_persons must be >= 1")
        if self.num_frames < 1:
            raise ValidationError("num_frames must be >= 1")
        if self.fps <= 0:
            raise ValidationError("fps must be positive")
        if not 0.0 <= self.occlusion_miss_threshold <= 1.0:
            raise ValidationError("occlusion_miss_threshold must lie in [0, 1]")
        if self.noise_px < 0:
            raise ValidationError("noise_px must be >= 0")
        lo, hi = self.depth_range
        if not (0.0 < lo < hi):
            raise ValidationError("depth_range must satisfy 0 < min < max")
        if self.capsule_radius_scale <= 0 or self.joint_radius_scale <= 0:
            raise ValidationError("occluder radii scales must be positive")
        if self.max_step_mm <= 0:
            raise ValidationError("max_step_mm must be positive")


@dataclass
class OcclusionState:
    """Occlusion fraction per (person, frame, joint), each value in [0, 1]."""

    fractions: np.ndarray  # (P, T, J)

    def __post_init__(self):
        self.fractions = np.asarray(self.fractions, dtype=np.float64)
        if np.any(self.fractions < 0.0) or np.any(self.fractions > 1.0):
            raise ValidationError("occlusion fractions must lie in [0, 1]")


def sequence_seed(corpus_seed: int, split: str, index: int) -> int:
    """Stable 64-bit per-sequence seed derived from the corpus seed."""
    split_code = {"train": 0, "val": 1, "test": 2}.get(split)
    if split_code is None:
        raise ValidationError(f"unknown split {split!r}")
    ss = np.random.SeedSequence([int(corpus_seed), split_code, int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


def _sinusoid(rng, t: np.ndarray, amp_range, freq_range, n_components: int) -> np.ndarray:
    out = np.zeros_like(t)
    for _ in range(n_components):
        amp = rng.uniform(*amp_range)
        freq = rng.uniform(*freq_range)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        out += amp * np.sin(2.0 * np.pi * freq * t + phase)
    return out


def _root_path(rng, cfg: SynthConfig, band: tuple, sign: float, walker: bool) -> np.ndarray:
    """Band-limited root trajectory (T, 3) inside the given depth band.

    sign flips the walker's initial sweep direction, or picks the idler's home
    side of the image. Both roles consume the same number of random variates.
    """
    t = np.arange(cfg.num_frames, dtype=np.float64) / cfg.fps
    n_comp = int(rng.integers(ROOT_COMPONENT_RANGE[0], ROOT_COMPONENT_RANGE[1] + 1))

    sweep_amp = rng.uniform(*WALKER_SWEEP_AMP_RANGE)
    sweep_freq = rng.uniform(*WALKER_SWEEP_FREQ_RANGE)
    sweep_phase = rng.uniform(-WALKER_SWEEP_PHASE_JITTER, WALKER_SWEEP_PHASE_JITTER)
    start_draw = rng.uniform(0.0, 1.0)
    drift_draw = rng.uniform(0.0, 1.0)
    if walker:
        amp_range, freq_range = WALKER_AMP_RANGE, WALKER_FREQ_RANGE
        x0 = WALKER_START_RANGE[0] + start_draw * (WALKER_START_RANGE[1] - WALKER_START_RANGE[0])
        drift = sign * (WALKER_DRIFT_RANGE[0] + drift_draw * (WALKER_DRIFT_RANGE[1] - WALKER_DRIFT_RANGE[0]))
        sweep = sign * sweep_amp * np.sin(2.0 * np.pi * sweep_freq * t + sweep_phase)
        depth_scale = WALKER_DEPTH_AMP_SCALE
    else:
        amp_range, freq_range = IDLER_AMP_RANGE, IDLER_FREQ_RANGE
        x0 = sign * (IDLER_START_RANGE[0] + start_draw * (IDLER_START_RANGE[1] - IDLER_START_RANGE[0]))
        drift = sign * (IDLER_DRIFT_RANGE[0] + drift_draw * (IDLER_DRIFT_RANGE[1] - IDLER_DRIFT_RANGE[0]))
        sweep = np.zeros_like(t)
        depth_scale = IDLER_DEPTH_AMP_SCALE
    x = _sinusoid(rng, t, amp_range, freq_range, n_comp) + sweep + drift * t

    y0 = rng.uniform(*VERTICAL_START_RANGE)
    y = _sinusoid(rng, t, VERTICAL_AMP_RANGE, VERTICAL_FREQ_RANGE, 2)

    z_lo, z_hi = band
    width = z_hi - z_lo
    z0 = rng.uniform(z_lo + 0.3 * width, z_hi - 0.3 * width)
    z = _sinusoid(rng, t, (depth_scale[0] * width, depth_scale[1] * width), DEPTH_FREQ_RANGE, 2)

    varying = np.stack([x, y, z], axis=1)
    start = np.array([x0, y0, z0])
    path = start[None, :] + varying
    if cfg.num_frames > 1:
        steps = np.linalg.norm(np.diff(path, axis=0), axis=1)
        max_step = float(steps.max())
        if max_step > cfg.max_step_mm:
            varying *= 0.98 * cfg.max_step_mm / max_step
            path = start[None, :] + varying
    return path


def _edge_lengths(skeleton: Skeleton, rest: np.ndarray, override) -> np.ndarray:
    if override is not None:
        lengths = np.asarray(override, dtype=np.float64)
        if lengths.shape != (len(skeleton.edges),):
            raise ValidationError("limb_lengths must provide one value per edge")
        if np.any(lengths <= 0):
            raise ValidationError("limb lengths must be positive")
        return lengths
    return np.array([
        np.linalg.norm(rest[b] - rest[a]) for a, b in skeleton.edges
    ])


def _relative_poses(rng, cfg: SynthConfig, skeleton: Skeleton) -> np.ndarray:
    """Root-relative joints (T, J, 3) with exactly constant bone lengths."""
    rest = REST_POSE_17
    if skeleton.num_joints != rest.shape[0]:
        raise ValidationError("synthetic generation expects the 17-joint skeleton")
    t = np.arange(cfg.num_frames, dtype=np.float64) / cfg.fps
    lengths = _edge_lengths(skeleton, rest, cfg.limb_lengths)

    rel = np.zeros((cfg.num_frames, skeleton.num_joints, 3))
    for e, (parent, child) in enumerate(skeleton.edges):
        base = rest[child] - rest[parent]
        base_dir = base / np.linalg.norm(base)
        wobble = np.zeros((cfg.num_frames, 3))
        for _ in range(SWAY_COMPONENTS):
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            amp = rng.uniform(*SWAY_AMP_RANGE)
            freq = rng.uniform(*SWAY_FREQ_RANGE)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            wobble += np.outer(amp * np.sin(2.0 * np.pi * freq * t + phase), axis)
        direction = base_dir[None, :] + wobble
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        rel[:, child] = rel[:, parent] + lengths[e] * direction
    return rel


def _quad_grid():
    """Equal-area sample offsets on the unit disc, fixed across calls."""
    radii = np.sqrt((np.arange(_QUAD_RINGS) + 0.5) / _QUAD_RINGS)
    angles = 2.0 * np.pi * (np.arange(_QUAD_ANGLES) + 0.5) / _QUAD_ANGLES
    rr, aa = np.meshgrid(radii, angles, indexing="ij")
    return np.stack([rr * np.cos(aa), rr * np.sin(aa)], axis=-1).reshape(-1, 2)


_QUAD_OFFSETS = _quad_grid()


def _point_segment_distance(p, a, b):
    """Distance from points p to segments (a, b); inputs broadcast on (..., 2)."""
    ab = b - a
    denom = np.maximum(np.sum(ab * ab, axis=-1), 1e-12)
    t = np.clip(np.sum((p - a) * ab, axis=-1) / denom, 0.0, 1.0)
    proj = a + t[..., None] * ab
    return np.linalg.norm(p - proj, axis=-1)


def circle_capsule_coverage(center, radius, seg_a, seg_b, capsule_radius):
    """Fraction of a circle covered by a capsule, elementwise over broadcast arrays.

    Exact for the disjoint and fully-contained branches; partial overlap uses a
    fixed polar quadrature grid, so results are deterministic and monotone in
    the capsule radius.
    """
    center = np.asarray(center, dtype=np.float64)
    seg_a = np.asarray(seg_a, dtype=np.float64)
    seg_b = np.asarray(seg_b, dtype=np.float64)
    d = _point_segment_distance(center, seg_a, seg_b)
    scalar = d.ndim == 0
    shape = (1,) if scalar else d.shape
    d = np.reshape(d, shape)
    radius = np.broadcast_to(np.asarray(radius, dtype=np.float64), shape)
    capsule_radius = np.broadcast_to(np.asarray(capsule_radius, dtype=np.float64), shape)
    center = np.broadcast_to(center, shape + (2,))
    seg_a = np.broadcast_to(seg_a, shape + (2,))
    seg_b = np.broadcast_to(seg_b, shape + (2,))

    cov = np.zeros(shape)
    full = d <= capsule_radius - radius
    cov[full] = 1.0
    partial = ~full & (d < capsule_radius + radius)
    if np.any(partial):
        idx = np.nonzero(partial)
        pts = center[idx][:, None, :] + radius[idx][:, None, None] * _QUAD_OFFSETS[None, :, :]
        pd = _point_segment_distance(pts, seg_a[idx][:, None, :], seg_b[idx][:, None, :])
        cov[idx] = np.mean(pd <= capsule_radius[idx][:, None], axis=-1)
    return float(cov[0]) if scalar else cov


def compute_occlusion(abs_tracks, cam: CameraIntrinsics, skeleton: Skeleton,
                      capsule_radius_scale: float = 0.06,
                      joint_radius_scale: float = 0.03) -> OcclusionState:
    """Occlusion fractions for every (person, frame, joint).

    abs_tracks: (P, T, J, 3) absolute ground truth in mm. A joint of person p
    is occluded by the body segments (2D capsules) of any person q whose root
    is nearer to the camera on that frame; the fraction is the largest single
    capsule coverage of the joint circle. Self-occlusion is ignored.
    """
    abs_tracks = np.asarray(abs_tracks, dtype=np.float64)
    num_p, num_t, num_j, _ = abs_tracks.shape
    root = skeleton.root_index
    edges = np.asarray(skeleton.edges, dtype=np.int64)

    z = abs_tracks[..., 2]
    if np.any(z <= 0.0):
        raise ValidationError("occlusion needs all joints in front of the camera")
    kp2d = np.empty((num_p, num_t, num_j, 2))
    kp2d[..., 0] = cam.fx * abs_tracks[..., 0] / z + cam.cx
    kp2d[..., 1] = cam.fy * abs_tracks[..., 1] / z + cam.cy

    bbox_h = kp2d[..., 1].max(axis=2) - kp2d[..., 1].min(axis=2)  # (P, T)
    joint_r = joint_radius_scale * bbox_h
    capsule_r = capsule_radius_scale * bbox_h
    root_z = z[:, :, root]

    occ = np.zeros((num_p, num_t, num_j))
    for p in range(num_p):
        for q in range(num_p):
            if q == p:
                continue
            nearer = root_z[q] < root_z[p]  # (T,)
            if not np.any(nearer):
                continue
            ts = np.nonzero(nearer)[0]
            cov = circle_capsule_coverage(
                kp2d[p, ts][:, :, None, :],                    # (t, J, 1, 2)
                joint_r[p, ts][:, None, None],                 # (t, 1, 1)
                kp2d[q, ts][:, edges[:, 0]][:, None, :, :],    # (t, 1, E, 2)
                kp2d[q, ts][:, edges[:, 1]][:, None, :, :],
                capsule_r[q, ts][:, None, None],
            )
            occ[p, ts] = np.maximum(occ[p, ts], cov.max(axis=2))
    return OcclusionState(np.clip(occ, 0.0, 1.0))


def simulate_detector(gt2d: Pose2D, occ: np.ndarray, noise_px: float, rng,
                      miss_threshold: float = 0.55) -> Pose2D:
    """Corrupt a projected pose the way a 2D detector would.

    Noise std per joint is noise_px * (1 + 4 * occ); confidence is 1 - occ
    plus Gaussian noise, clamped to [0, 1]. Poses whose mean occlusion exceeds
    the miss threshold come back detected=False with zero confidence.
    noise_px = 0 is the ideal-detector limit: coordinates and confidences are
    both noise free.
    """
    occ = np.asarray(occ, dtype=np.float64)
    if occ.shape != (gt2d.num_joints,) or np.any((occ < 0) | (occ > 1)):
        raise ValidationError("occ must be per-joint fractions in [0, 1]")
    # Fixed draw order keeps the stream identical whether or not the miss
    # rule fires.
    std = noise_px * (1.0 + OCCLUSION_NOISE_GAIN * occ)
    conf_std = CONFIDENCE_NOISE_STD if noise_px > 0 else 0.0
    coords = gt2d.coords + rng.normal(size=gt2d.coords.shape) * std[:, None]
    conf = np.clip(1.0 - occ + rng.normal(size=occ.shape) * conf_std, 0.0, 1.0)
    if float(np.mean(occ)) > miss_threshold:
        return Pose2D(coords, np.zeros_like(conf), detected=False, units=gt2d.units)
    return Pose2D(coords, conf, detected=True, units=gt2d.units)


def generate_sequence(cfg: SynthConfig, seed, seq_id: str | None = None) -> Sequence:
    """Generate one fully ground-truthed sequence; bit-identical per (cfg, seed)."""
    skeleton = default_skeleton()
    ss = np.random.SeedSequence(seed)
    children = ss.spawn(2 * cfg.num_persons)
    motion_rngs = [np.random.Generator(np.random.PCG64(c)) for c in children[:cfg.num_persons]]
    detect_rngs = [np.random.Generator(np.random.PCG64(c)) for c in children[cfg.num_persons:]]

    z_lo, z_hi = cfg.depth_range
    band_edges = np.linspace(z_lo, z_hi, cfg.num_persons + 1)

    # Nearer half of the cast are walkers, the rest idlers; within each role
    # the orientation sign alternates (sweep direction / home side).
    num_walkers = (cfg.num_persons + 1) // 2
    locs = np.empty((cfg.num_persons, cfg.num_frames, 3))
    rels = np.empty((cfg.num_persons, cfg.num_frames, skeleton.num_joints, 3))
    for p in range(cfg.num_persons):
        band = (float(band_edges[p]), float(band_edges[p + 1]))
        walker = p < num_walkers
        ordinal = p if walker else p - num_walkers
        sign = 1.0 if ordinal % 2 == 0 else -1.0
        locs[p] = _root_path(motion_rngs[p], cfg, band, sign, walker)
        rels[p] = _relative_poses(motion_rngs[p], cfg, skeleton)

    abs_tracks = locs[:, :, None, :] + rels
    if np.any(abs_tracks[..., 2] <= 0.0):
        raise ValidationError("configuration places a person behind the camera")

    occ = compute_occlusion(abs_tracks, cfg.camera, skeleton,
                            cfg.capsule_radius_scale, cfg.joint_radius_scale)

    tracks = []
    for p in range(cfg.num_persons):
        detections = []
        gt = []
        for t in range(cfg.num_frames):
            gt2d = project(abs_tracks[p, t], cfg.camera)
            det = simulate_detector(gt2d, occ.fractions[p, t], cfg.noise_px,
                                    detect_rngs[p], cfg.occlusion_miss_threshold)
            detections.append(det if det.detected else None)
            gt.append(Pose3D(locs[p, t], rels[p, t]))
        tracks.append(PersonTrack(person_id=f"p{p}", detections=detections, gt=gt))

    if seq_id is None:
        seq_id = f"synth-{int(np.random.SeedSequence(seed).generate_state(1)[0]):08x}"
    return Sequence(seq_id=seq_id, num_frames=cfg.num_frames, fps=cfg.fps,
                    camera=cfg.camera, skeleton=skeleton, tracks=tracks)
