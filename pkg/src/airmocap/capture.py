"""Synthetic multi-view capture and skeletal reconstruction.

Cameras are pinhole models rigidly attached to drones: yaw follows the
drone heading, pitch follows the gimbal tilt (positive = down). The keypoint
detector is a parametric stand-in: Gaussian pixel noise, tilt-dependent miss
probability, and tilt-dependent left/right limb swaps. Reconstruction is
per-joint homogeneous DLT over all cameras that report the joint.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .core import Pose, WorldModel

COCO_JOINT_NAMES = (
    "nose", "left_eye", "right_eye", "left_ear", "right_ear",
    "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
    "left_wrist", "right_wrist", "left_hip", "right_hip",
    "left_knee", "right_knee", "left_ankle", "right_ankle",
)

# limb pairs the detector may mirror at high tilt
LR_SWAP_PAIRS = ((7, 8), (9, 10), (13, 14), (15, 16))

BONES = (
    (5, 7), (7, 9), (6, 8), (8, 10),          # arms
    (11, 13), (13, 15), (12, 14), (14, 16),   # legs
    (5, 6), (11, 12), (5, 11), (6, 12),       # torso
    (0, 1), (0, 2), (1, 3), (2, 4),           # head
)


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float = 320.0
    fy: float = 320.0
    cx: float = 320.0
    cy: float = 240.0
    width: int = 640
    height: int = 480

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be > 0")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class Skeleton:
    """P joint positions (COCO-17 ordering by default)."""

    joints: np.ndarray

    def __post_init__(self):
        j = np.array(self.joints, dtype=float)
        if j.ndim != 2 or j.shape[1] != 3 or not np.all(np.isfinite(j)):
            raise ValueError("joints must be a finite (P, 3) array")
        j.setflags(write=False)
        object.__setattr__(self, "joints", j)

    @property
    def n_joints(self) -> int:
        return self.joints.shape[0]


def bone_lengths(skel: Skeleton, bones=BONES) -> np.ndarray:
    j = skel.joints
    return np.array([np.linalg.norm(j[a] - j[b]) for a, b in bones])


@dataclass(frozen=True)
class Detection2D:
    """Per-joint detector output for one camera frame."""

    pixels: np.ndarray
    confidence: np.ndarray
    visible: np.ndarray

    def __post_init__(self):
        px = np.array(self.pixels, dtype=float)
        conf = np.array(self.confidence, dtype=float)
        vis = np.array(self.visible, dtype=bool)
        P = len(vis)
        if px.shape != (P, 2) or conf.shape != (P,):
            raise ValueError("inconsistent detection shapes")
        if conf.size and (conf.min() < 0 or conf.max() > 1):
            raise ValueError("confidence must lie in [0, 1]")
        for a in (px, conf, vis):
            a.setflags(write=False)
        object.__setattr__(self, "pixels", px)
        object.__setattr__(self, "confidence", conf)
        object.__setattr__(self, "visible", vis)


@dataclass(frozen=True)
class NoiseModel:
    pixel_sigma: float = 2.0
    pose_position_sigma: float = 0.0
    pose_rotation_sigma: float = 0.0
    miss_base_rate: float = 0.02
    miss_tilt_gain: float = 0.08
    swap_rate: float = 0.05
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("pixel_sigma", "pose_position_sigma", "pose_rotation_sigma",
                     "miss_tilt_gain"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("miss_base_rate", "swap_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


def camera_rotation(pose: Pose) -> np.ndarray:
    """World-from-camera rotation; columns are the camera's right, down, and
    forward axes. Tilt pitches the forward axis below the horizon."""
    psi, tau = pose.heading, pose.camera_tilt
    forward = np.array([math.cos(psi) * math.cos(tau),
                        math.sin(psi) * math.cos(tau),
                        -math.sin(tau)])
    right = np.array([math.sin(psi), -math.cos(psi), 0.0])
    down = np.cross(forward, right)
    return np.column_stack([right, down, forward])


def projection_matrix(pose: Pose, intr: CameraIntrinsics) -> np.ndarray:
    """3x4 pinhole matrix K [R^T | -R^T c]."""
    R = camera_rotation(pose)
    Rt = R.T
    return intr.matrix() @ np.hstack([Rt, (-Rt @ pose.position)[:, None]])


def project(pose: Pose, intr: CameraIntrinsics, points):
    """Project world points; returns (pixels (..., 2), depth (...)).

    Points at depth <= 0 get NaN pixels (the behind-camera marker).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    R = camera_rotation(pose)
    cam = (pts - pose.position) @ R          # camera-frame coordinates
    depth = cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = intr.cx + intr.fx * cam[:, 0] / depth
        v = intr.cy + intr.fy * cam[:, 1] / depth
    uv = np.column_stack([u, v])
    uv[depth <= 0] = np.nan
    if np.ndim(points) == 1:
        return uv[0], float(depth[0])
    return uv, depth


def in_bounds(uv, intr: CameraIntrinsics):
    uv = np.atleast_2d(uv)
    ok = np.isfinite(uv).all(axis=1)
    ok &= (uv[:, 0] >= 0) & (uv[:, 0] < intr.width)
    ok &= (uv[:, 1] >= 0) & (uv[:, 1] < intr.height)
    return ok


def aim_at(position, target):
    """Heading and gimbal tilt that point a camera at the target point."""
    d = np.asarray(target, float) - np.asarray(position, float)
    heading = math.atan2(d[1], d[0])
    tilt = math.atan2(-d[2], math.hypot(d[0], d[1]))
    return heading, tilt


def occlusion_fractions(world: WorldModel, origin, targets, n_quad: int = 32):
    """Mean occupancy along origin-to-target segments (one per target)."""
    targets = np.atleast_2d(targets)
    if world.is_empty:
        return np.zeros(len(targets))
    tau = (np.arange(n_quad) + 0.5) / n_quad
    seg = (tau[None, :, None] * targets[:, None, :]
           + (1.0 - tau)[None, :, None] * np.asarray(origin, float)[None, None, :])
    return world.occupancy_at(seg).mean(axis=1)


def simulate_detections(gt: Skeleton, pose: Pose, intr: CameraIntrinsics,
                        world: WorldModel, noise: NoiseModel,
                        rng: np.random.Generator | None = None,
                        occlusion_threshold: float = 0.5) -> Detection2D:
    """Parametric keypoint detector.

    Joints are invisible when behind the camera, projected out of bounds, or
    when the camera-to-joint occlusion integral exceeds the threshold.
    Visible pixels get Gaussian noise; joints drop out with probability
    miss_base_rate + miss_tilt_gain*|tilt| and left/right limb pairs swap
    with probability swap_rate*|tilt|/(pi/3). The random stream draws a fixed
    number of variates regardless of visibility, so detection sequences are
    reproducible for a given rng state.
    """
    if rng is None:
        rng = np.random.default_rng(noise.rng_seed)
    P = gt.n_joints
    uv, depth = project(pose, intr, gt.joints)
    occ = occlusion_fractions(world, pose.position, gt.joints)
    vis = (depth > 0) & in_bounds(uv, intr) & (occ <= occlusion_threshold)

    pix = uv + rng.normal(0.0, noise.pixel_sigma, size=(P, 2))
    p_miss = min(1.0, noise.miss_base_rate + noise.miss_tilt_gain * abs(pose.camera_tilt))
    vis &= rng.random(P) >= p_miss
    p_swap = min(1.0, noise.swap_rate * abs(pose.camera_tilt) / (math.pi / 3.0))
    swap_draws = rng.random(len(LR_SWAP_PAIRS))
    for (a, b), draw in zip(LR_SWAP_PAIRS, swap_draws):
        if draw < p_swap:
            pix[[a, b]] = pix[[b, a]]
            vis[[a, b]] = vis[[b, a]]

    vis &= in_bounds(pix, intr)  # noise/swap may push a pixel out of frame
    conf = np.where(vis, np.clip(1.0 - occ, 0.0, 1.0), 0.0)
    pix = np.where(vis[:, None], pix, np.nan)
    return Detection2D(pixels=pix, confidence=conf, visible=vis)


def perturb_camera_pose(pose: Pose, noise: NoiseModel, rng: np.random.Generator) -> Pose:
    """Recorded-pose error model: iid Gaussian position offset plus yaw/tilt
    offsets. Used on the reconstruction path only."""
    dp = rng.normal(0.0, noise.pose_position_sigma, size=3)
    dyaw, dtilt = rng.normal(0.0, noise.pose_rotation_sigma, size=2)
    return Pose(position=pose.position + dp, heading=pose.heading + dyaw,
                camera_tilt=pose.camera_tilt + dtilt)


def camera_center(proj: np.ndarray) -> np.ndarray:
    M, p4 = proj[:, :3], proj[:, 3]
    return -np.linalg.solve(M, p4)


def ray_direction(proj: np.ndarray, pixel) -> np.ndarray:
    d = np.linalg.solve(proj[:, :3], np.array([pixel[0], pixel[1], 1.0]))
    return d / np.linalg.norm(d)


def triangulate(proj_mats, pixels, min_angle: float = 1e-6) -> np.ndarray:
    """Homogeneous DLT triangulation from >= 2 views.

    proj_mats: (m, 3, 4) projection matrices; pixels: (m, 2) observations.
    Raises on fewer than 2 views or degenerate geometry (coincident centers
    or all rays parallel within min_angle).
    """
    proj_mats = np.asarray(proj_mats, dtype=float)
    pixels = np.asarray(pixels, dtype=float)
    m = len(proj_mats)
    if m < 2:
        raise ValueError(f"triangulation needs >= 2 views, got {m}")
    centers = np.array([camera_center(p) for p in proj_mats])
    if max(np.linalg.norm(centers[i] - centers[j])
           for i in range(m) for j in range(i + 1, m)) < 1e-9:
        raise ValueError("degenerate baseline: coincident camera centers")
    rays = np.array([ray_direction(p, px) for p, px in zip(proj_mats, pixels)])
    max_angle = 0.0
    for i in range(m):
        for j in range(i + 1, m):
            c = abs(float(np.dot(rays[i], rays[j])))
            max_angle = max(max_angle, math.acos(min(1.0, c)))
    if max_angle < min_angle:
        raise ValueError("degenerate baseline: rays parallel")

    A = np.concatenate([
        pixels[:, 0:1] * proj_mats[:, 2, :] - proj_mats[:, 0, :],
        pixels[:, 1:2] * proj_mats[:, 2, :] - proj_mats[:, 1, :],
    ], axis=0)
    _, _, vt = np.linalg.svd(A)
    X = vt[-1]
    if abs(X[3]) < 1e-12 * np.linalg.norm(X[:3]):
        raise ValueError("degenerate baseline: point at infinity")
    return X[:3] / X[3]


def triangulate_batch(proj_mats, pixels):
    """Vectorized DLT for B points sharing one view set.

    proj_mats: (m, 3, 4); pixels: (B, m, 2). Returns (points (B, 3),
    valid (B,)); invalid entries are numerically degenerate solutions.
    """
    proj_mats = np.asarray(proj_mats, dtype=float)
    pixels = np.asarray(pixels, dtype=float)
    B, m, _ = pixels.shape
    rows_u = pixels[:, :, 0:1] * proj_mats[None, :, 2, :] - proj_mats[None, :, 0, :]
    rows_v = pixels[:, :, 1:2] * proj_mats[None, :, 2, :] - proj_mats[None, :, 1, :]
    A = np.concatenate([rows_u, rows_v], axis=1)       # (B, 2m, 4)
    try:
        _, _, vt = np.linalg.svd(A)
    except np.linalg.LinAlgError:
        pts = np.zeros((B, 3))
        return pts, np.zeros(B, dtype=bool)
    X = vt[:, -1, :]
    w = X[:, 3]
    valid = np.abs(w) > 1e-12 * np.linalg.norm(X[:, :3], axis=1)
    pts = np.zeros((B, 3))
    safe = np.where(valid, w, 1.0)
    pts = X[:, :3] / safe[:, None]
    pts[~valid] = 0.0
    valid &= np.all(np.isfinite(pts), axis=1)
    return pts, valid


@dataclass(frozen=True)
class SkeletonSequence:
    timestamps: np.ndarray
    joints: np.ndarray            # (T, P, 3)
    carried: np.ndarray           # (T, P) True where not freshly triangulated

    def __post_init__(self):
        t = np.array(self.timestamps, dtype=float)
        j = np.array(self.joints, dtype=float)
        c = np.array(self.carried, dtype=bool)
        if j.ndim != 3 or j.shape[0] != len(t) or j.shape[2] != 3 or c.shape != j.shape[:2]:
            raise ValueError("inconsistent skeleton sequence shapes")
        for a in (t, j, c):
            a.setflags(write=False)
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "joints", j)
        object.__setattr__(self, "carried", c)

    def __len__(self):
        return len(self.timestamps)


def reconstruct_sequence(timestamps, detections, poses, intrinsics,
                         min_views: int = 2) -> SkeletonSequence:
    """Offline per-frame DLT reconstruction.

    detections[c][t] / poses[c][t] are camera-major lists; intrinsics is one
    CameraIntrinsics or a per-camera list. Joints seen by fewer than
    min_views cameras (or with degenerate geometry) are carried forward from
    the previous frame and flagged; leading gaps are backfilled from the
    first reconstructed value so the output never contains NaN.
    """
    timestamps = np.asarray(timestamps, dtype=float)
    T = len(timestamps)
    m = len(detections)
    if m == 0 or any(len(d) != T for d in detections) or any(len(p) != T for p in poses):
        raise ValueError("detections/poses must be camera-major lists covering every frame")
    if isinstance(intrinsics, CameraIntrinsics):
        intrinsics = [intrinsics] * m
    P = detections[0][0].visible.shape[0]

    joints = np.zeros((T, P, 3))
    carried = np.ones((T, P), dtype=bool)
    for t in range(T):
        proj = np.array([projection_matrix(poses[c][t], intrinsics[c]) for c in range(m)])
        vis = np.array([detections[c][t].visible for c in range(m)])       # (m, P)
        pix = np.array([detections[c][t].pixels for c in range(m)])        # (m, P, 2)
        # group joints by visibility pattern so each group is one batched solve
        patterns = {}
        for p in range(P):
            patterns.setdefault(vis[:, p].tobytes(), []).append(p)
        for key, group in patterns.items():
            cams = np.flatnonzero(np.frombuffer(key, dtype=bool))
            if len(cams) < min_views:
                continue
            obs = pix[np.ix_(cams, group)].transpose(1, 0, 2)              # (B, m', 2)
            pts, valid = triangulate_batch(proj[cams], obs)
            for idx, p in enumerate(group):
                if valid[idx]:
                    joints[t, p] = pts[idx]
                    carried[t, p] = False

    # carry-forward pass, then backfill leading gaps
    for p in range(P):
        fresh = np.flatnonzero(~carried[:, p])
        if len(fresh) == 0:
            continue
        last = joints[fresh[0], p]
        for t in range(T):
            if carried[t, p]:
                joints[t, p] = last
            else:
                last = joints[t, p]
    return SkeletonSequence(timestamps=timestamps, joints=joints, carried=carried)


@dataclass(frozen=True)
class ReconError:
    total: float
    per_frame_mpjpe: np.ndarray

    @property
    def mean_mpjpe(self) -> float:
        return float(self.per_frame_mpjpe.mean())


def recon_error(est: SkeletonSequence, gt: SkeletonSequence) -> ReconError:
    """Total squared joint error plus per-frame MPJPE."""
    if est.joints.shape != gt.joints.shape:
        raise ValueError(f"sequence shapes differ: {est.joints.shape} vs {gt.joints.shape}")
    d = est.joints - gt.joints
    sq = (d * d).sum(axis=-1)                      # (T, P)
    return ReconError(total=float(sq.sum()),
                      per_frame_mpjpe=np.sqrt(sq).mean(axis=1))


def _pose_to_json(pose: Pose):
    return {"position": [float(x) for x in pose.position],
            "heading": float(pose.heading), "tilt": float(pose.camera_tilt)}


def _pose_from_json(d) -> Pose:
    return Pose(position=np.array(d["position"], dtype=float),
                heading=d["heading"], camera_tilt=d["tilt"])


def _intr_to_json(intr: CameraIntrinsics):
    return {"fx": intr.fx, "fy": intr.fy, "cx": intr.cx, "cy": intr.cy,
            "width": intr.width, "height": intr.height}


def save_capture_jsonl(path, timestamps, detections, poses, intrinsics):
    """One line per (frame, camera): timestamp, camera id, recorded pose,
    intrinsics, and per-joint [u, v, confidence, visible]."""
    m = len(detections)
    if isinstance(intrinsics, CameraIntrinsics):
        intrinsics = [intrinsics] * m
    with open(path, "w", encoding="ascii") as fh:
        for t, stamp in enumerate(timestamps):
            for c in range(m):
                det = detections[c][t]
                joints = [
                    [float(u), float(v), float(conf), bool(vis)]
                    for (u, v), conf, vis in zip(det.pixels, det.confidence, det.visible)
                ]
                line = {
                    "t": float(stamp),
                    "camera": c,
                    "pose": _pose_to_json(poses[c][t]),
                    "intrinsics": _intr_to_json(intrinsics[c]),
                    "joints": joints,
                }
                fh.write(json.dumps(line) + "\n")


def load_capture_jsonl(path):
    """Inverse of save_capture_jsonl. Validates that every camera reports
    exactly the same timestamp sequence."""
    per_cam = {}
    with open(path, encoding="ascii") as fh:
        for raw in fh:
            raw = raw.strip()
            if not raw:
                continue
            rec = json.loads(raw)
            per_cam.setdefault(rec["camera"], []).append(rec)
    if not per_cam:
        raise ValueError(f"no capture records in {path}")
    cams = sorted(per_cam)
    stamps = {c: [r["t"] for r in per_cam[c]] for c in cams}
    ref = stamps[cams[0]]
    for c in cams[1:]:
        if stamps[c] != ref:
            bad = sorted(set(ref).symmetric_difference(stamps[c]))
            raise ValueError(f"unsynchronized frames between cameras: {bad[:10]}")
    detections, poses = [], []
    intrinsics = []
    for c in cams:
        recs = per_cam[c]
        intr = recs[0]["intrinsics"]
        intrinsics.append(CameraIntrinsics(**intr))
        det_c, pose_c = [], []
        for r in recs:
            arr = np.array(r["joints"], dtype=float)
            vis = np.array([bool(j[3]) for j in r["joints"]])
            pix = arr[:, :2]
            pix = np.where(vis[:, None], pix, np.nan)
            det_c.append(Detection2D(pixels=pix, confidence=arr[:, 2], visible=vis))
            pose_c.append(_pose_from_json(r["pose"]))
        detections.append(det_c)
        poses.append(pose_c)
    return np.array(ref, dtype=float), detections, poses, intrinsics


def save_skeletons_jsonl(path, seq: SkeletonSequence):
    with open(path, "w", encoding="ascii") as fh:
        for t in range(len(seq)):
            line = {
                "t": float(seq.timestamps[t]),
                "joints": [[float(x) for x in j] for j in seq.joints[t]],
                "carried": [bool(c) for c in seq.carried[t]],
            }
            fh.write(json.dumps(line) + "\n")


def load_skeletons_jsonl(path) -> SkeletonSequence:
    ts, joints, carried = [], [], []
    with open(path, encoding="ascii") as fh:
        for raw in fh:
            raw = raw.strip()
            if not raw:
                continue
            rec = json.loads(raw)
            ts.append(rec["t"])
            joints.append(rec["joints"])
            carried.append(rec["carried"])
    if not ts:
        raise ValueError(f"no skeleton records in {path}")
    return SkeletonSequence(timestamps=np.array(ts), joints=np.array(joints),
                            carried=np.array(carried))
