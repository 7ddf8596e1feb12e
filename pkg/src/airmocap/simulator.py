"""Scenario engine.

Closes the loop around the planners at fixed rates: the central yaw planner
replans at 10 Hz on a Kalman forecast, each drone refines its fine
trajectory at 5 Hz, drones follow the refined trajectories exactly (plus
optional execution noise), and cameras capture at 10 Hz. Reconstruction runs
offline after the loop. Every random draw comes from a generator seeded by
(scenario seed, stream id, frame, camera/drone), so runs are reproducible
bit for bit.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace

import numpy as np

from . import capture as cap
from .core import OccupancyGrid, Pose, WorldModel, wrap_angle
from .costs import FormationSpec, formation_targets
from .forecast import ActorPath, ActorState, forecast_path, initial_state, kf_predict, kf_update
from .formation_planner import FormationPlan, PlannerParams, plan
from .local_planner import (FineTrajectory, LocalPlannerParams, PeerForecast,
                            refine, upsample_plan)

HIP_HEIGHT = 1.0

# execution / capture / recording noise stream ids
_STREAM_DETECT = 1
_STREAM_POSE = 2
_STREAM_EXEC = 3
_STREAM_GAIT = 7


class SafetyViolation(RuntimeError):
    """Raised when an executed waypoint dips below the safety margin."""

    def __init__(self, report: dict):
        super().__init__(
            f"drone {report['drone']} at t={report['t']:.2f}s: "
            f"SDF {report['sdf']:.3f} m < margin {report['margin']:.3f} m"
        )
        self.report = report


@dataclass(frozen=True)
class ActorMotion:
    """Piecewise-linear waypoint follower with optional lateral sway.

    The "walk" preset moves at constant speed; "soccer" adds random speed
    multipliers redrawn every couple of seconds (seeded, deterministic).
    Waypoints are ground positions; the skeleton is synthesized on top.
    """

    waypoints: np.ndarray
    speed: float = 1.5
    sway_amplitude: float = 0.0
    sway_period: float = 8.0
    preset: str = "walk"
    seed: int = 0

    def __post_init__(self):
        w = np.array(self.waypoints, dtype=float)
        if w.ndim != 2 or w.shape[1] != 3 or len(w) < 1:
            raise ValueError("waypoints must be a (W, 3) array")
        if self.preset not in ("walk", "soccer"):
            raise ValueError(f"unknown actor preset {self.preset!r}")
        if not self.speed >= 0:
            raise ValueError("speed must be >= 0")
        w.setflags(write=False)
        object.__setattr__(self, "waypoints", w)
        seg = np.diff(w, axis=0)
        seg_len = np.linalg.norm(seg, axis=1)
        cum = np.concatenate([[0.0], np.cumsum(seg_len)])
        cum.setflags(write=False)
        object.__setattr__(self, "_cum", cum)
        if self.preset == "soccer":
            rng = np.random.default_rng([self.seed, _STREAM_GAIT])
            mult = rng.uniform(0.5, 1.8, size=2048)  # one multiplier per 2 s window
        else:
            mult = np.ones(2048)
        mult.setflags(write=False)
        object.__setattr__(self, "_speed_mult", mult)

    def _arclength(self, t: float) -> float:
        window = 2.0
        n_full = int(t // window)
        mult = self._speed_mult
        n_full = min(n_full, len(mult) - 1)
        s = mult[:n_full].sum() * window + mult[n_full] * (t - n_full * window)
        return self.speed * s

    def _point_at_arclength(self, s: float):
        cum = self._cum
        total = cum[-1]
        if total == 0.0:
            return self.waypoints[0].copy(), np.zeros(3)
        s = min(max(s, 0.0), total)
        i = int(np.searchsorted(cum, s, side="right")) - 1
        i = min(i, len(cum) - 2)
        seg = self.waypoints[i + 1] - self.waypoints[i]
        seg_len = cum[i + 1] - cum[i]
        frac = 0.0 if seg_len == 0 else (s - cum[i]) / seg_len
        tangent = seg / seg_len if seg_len > 0 else np.zeros(3)
        return self.waypoints[i] + frac * seg, tangent

    def ground_at(self, t: float):
        """Ground position and unit tangent at time t (tangent zero when
        standing)."""
        s = self._arclength(t)
        pos, tangent = self._point_at_arclength(s)
        if s >= self._cum[-1] or self.speed == 0.0:
            tangent = tangent * 0.0
        if self.sway_amplitude > 0.0 and np.any(tangent):
            normal = np.array([-tangent[1], tangent[0], 0.0])
            pos = pos + self.sway_amplitude * math.sin(
                2.0 * math.pi * t / self.sway_period) * normal
        return pos, tangent

    def pelvis_at(self, t: float) -> np.ndarray:
        pos, _ = self.ground_at(t)
        return pos + np.array([0.0, 0.0, HIP_HEIGHT])


def walker_skeleton(motion: ActorMotion, t: float) -> cap.Skeleton:
    """Procedural 17-joint walking figure at time t.

    Limbs swing sinusoidally at the stride frequency implied by the current
    speed; amplitudes scale down toward standing. Local frame: x forward,
    y left, z up from the ground point.
    """
    ground, tangent = motion.ground_at(t)
    speed = motion.speed if np.any(tangent) else 0.0
    heading = math.atan2(tangent[1], tangent[0]) if np.any(tangent) else 0.0
    stride_hz = speed / 1.4 if speed > 0 else 0.0
    phase = 2.0 * math.pi * stride_hz * t
    amp = min(1.0, speed / 1.5)
    leg = 0.30 * amp * math.sin(phase)
    knee = 0.15 * amp * math.sin(phase)
    arm = 0.20 * amp * math.sin(phase)
    elbow = 0.10 * amp * math.sin(phase)
    bob = 0.03 * amp * math.sin(2.0 * phase)

    # x forward, y left, z up; left limbs lead on positive phase
    local = np.array([
        [0.08, 0.00, 1.62],            # nose
        [0.06, 0.035, 1.66],           # left_eye
        [0.06, -0.035, 1.66],          # right_eye
        [0.00, 0.08, 1.64],            # left_ear
        [0.00, -0.08, 1.64],           # right_ear
        [0.00, 0.19, 1.45],            # left_shoulder
        [0.00, -0.19, 1.45],           # right_shoulder
        [-arm * 0.5, 0.22, 1.18],      # left_elbow
        [arm * 0.5, -0.22, 1.18],      # right_elbow
        [-arm, 0.24, 0.93],            # left_wrist
        [arm, -0.24, 0.93],            # right_wrist
        [0.00, 0.11, 0.95],            # left_hip
        [0.00, -0.11, 0.95],           # right_hip
        [knee, 0.12, 0.50],            # left_knee
        [-knee, -0.12, 0.50],          # right_knee
        [leg, 0.13, 0.10 + 0.05 * amp * max(0.0, math.sin(phase))],   # left_ankle
        [-leg, -0.13, 0.10 + 0.05 * amp * max(0.0, -math.sin(phase))],  # right_ankle
    ])
    local[:, 2] += bob
    c, s = math.cos(heading), math.sin(heading)
    R = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return cap.Skeleton(joints=ground + local @ R.T)


@dataclass(frozen=True)
class Scenario:
    """Everything needed for one deterministic run."""

    world: WorldModel
    motion: ActorMotion
    formation: FormationSpec = FormationSpec()
    noise: cap.NoiseModel = cap.NoiseModel()
    intrinsics: cap.CameraIntrinsics = cap.CameraIntrinsics()
    planner: PlannerParams = PlannerParams()
    local: LocalPlannerParams = LocalPlannerParams()
    duration: float = 75.0
    capture_hz: float = 10.0
    central_hz: float = 10.0
    local_hz: float = 5.0
    horizon: float = 10.0
    plan_dt: float = 2.0
    dt_fine: float = 0.5
    theta0: float = math.pi / 2.0
    seed: int = 0
    safety_margin: float = 1.0
    execution_noise: float = 0.0
    kf_process_noise: float = 1.0
    kf_obs_noise: float = 0.09
    occlusion_threshold: float = 0.5
    formation_mode: str = "adaptive"
    fixed_climb_rate: float = 3.0
    fixed_lookahead: float = 8.0

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("duration must be > 0")
        for name in ("capture_hz", "central_hz", "local_hz"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.formation_mode not in ("adaptive", "fixed"):
            raise ValueError(f"unknown formation_mode {self.formation_mode!r}")


@dataclass
class RunTrace:
    timestamps: np.ndarray
    gt: cap.SkeletonSequence
    est: cap.SkeletonSequence
    per_frame_mpjpe: np.ndarray
    total_error: float
    drone_positions: np.ndarray        # (T, n, 3)
    formation_yaw: np.ndarray          # (T,)
    realized_tilt: np.ndarray          # (T, n) radians
    min_sdf: np.ndarray                # (T,)
    detections: list                   # [camera][frame] Detection2D
    true_poses: list                   # [camera][frame] Pose
    recorded_poses: list               # [camera][frame] Pose
    refine_degraded_count: int = 0

    @property
    def mean_mpjpe(self) -> float:
        return float(self.per_frame_mpjpe.mean())


def _formation_slots(spec: FormationSpec, pelvis, theta: float) -> np.ndarray:
    path = ActorPath(timestamps=np.array([0.0]), positions=np.asarray(pelvis)[None, :])
    return formation_targets(path, spec, theta).positions[:, 0, :]


def _clearance_height(world: WorldModel, x: float, y: float, z_start: float,
                      clearance: float, z_step: float = 0.5, z_cap: float = 60.0) -> float:
    """Lowest z >= z_start with SDF clearance at (x, y)."""
    z = z_start
    while z < z_start + z_cap:
        if world.sdf_at(np.array([x, y, z])) >= clearance:
            return z
        z += z_step
    return z


def _fixed_yaw_trajectory(scenario: Scenario, drone_index: int, state: ActorState,
                          t0: float, current_z: float) -> FineTrajectory:
    """Frozen-yaw baseline: follow the formation slot in x/y and gain only
    altitude to clear obstacles, with look-ahead and a climb-rate limit."""
    s = scenario
    fine_actor = forecast_path(state, s.horizon + s.fixed_lookahead, s.dt_fine, t0)
    theta = s.theta0 + s.formation.drone_offsets()[drone_index]
    slots = fine_actor.positions + np.array([
        s.formation.rho_form * math.cos(theta) * math.cos(s.formation.phi_form),
        s.formation.rho_form * math.sin(theta) * math.cos(s.formation.phi_form),
        s.formation.rho_form * math.sin(s.formation.phi_form),
    ])
    req = np.array([
        _clearance_height(s.world, p[0], p[1], p[2], s.local.eps_clear)
        for p in slots
    ])
    # look-ahead: start climbing early enough for upcoming requirements
    n_fine = int(round(s.horizon / s.dt_fine)) + 1
    look = int(round(s.fixed_lookahead / s.dt_fine))
    z = np.array([req[j:j + look + 1].max() for j in range(n_fine)])
    z = np.maximum(z, slots[:n_fine, 2])
    max_dz = s.fixed_climb_rate * s.dt_fine
    z[0] = current_z
    for j in range(1, n_fine):
        z[j] = np.clip(z[j], z[j - 1] - max_dz, z[j - 1] + max_dz)
        z[j] = max(z[j], req[j])  # clearance beats the rate limit
    pts = slots[:n_fine].copy()
    pts[:, 2] = z
    return FineTrajectory(timestamps=fine_actor.timestamps[:n_fine], points=pts)


def run_scenario(s: Scenario) -> RunTrace:
    """Execute the receding-horizon loop and reconstruct offline."""
    n = s.formation.n
    dt_frame = 1.0 / s.capture_hz
    frames = int(round(s.duration * s.capture_hz))
    central_every = max(1, int(round(s.capture_hz / s.central_hz)))
    local_every = max(1, int(round(s.capture_hz / s.local_hz)))

    timestamps = dt_frame * np.arange(frames)
    pelvis0 = s.motion.pelvis_at(0.0)
    v0 = (s.motion.pelvis_at(dt_frame) - pelvis0) / dt_frame
    state = initial_state(pelvis0, v0, position_var=0.25, velocity_var=1.0)

    drone_pos = _formation_slots(s.formation, pelvis0, s.theta0).copy()
    refined: list[FineTrajectory | None] = [None] * n
    fplan: FormationPlan | None = None

    gt_joints = []
    det_streams: list[list] = [[] for _ in range(n)]
    true_poses: list[list] = [[] for _ in range(n)]
    rec_poses: list[list] = [[] for _ in range(n)]
    positions_log = np.zeros((frames, n, 3))
    yaw_log = np.zeros(frames)
    tilt_log = np.zeros((frames, n))
    sdf_log = np.zeros(frames)
    degraded = 0

    for k in range(frames):
        t = float(timestamps[k])
        pelvis_true = s.motion.pelvis_at(t)

        # advance drones along their active fine trajectories
        if k > 0:
            for i in range(n):
                if refined[i] is not None:
                    drone_pos[i] = refined[i].sample(t)
            if s.execution_noise > 0.0:
                for i in range(n):
                    rng = np.random.default_rng([s.seed, _STREAM_EXEC, k, i])
                    drone_pos[i] = drone_pos[i] + rng.normal(0.0, s.execution_noise, 3)

        sdf_vals = np.array([float(s.world.sdf_at(drone_pos[i])) for i in range(n)])
        sdf_log[k] = sdf_vals.min()
        if sdf_log[k] < s.safety_margin:
            i_bad = int(np.argmin(sdf_vals))
            raise SafetyViolation({
                "frame": k, "t": t, "drone": i_bad,
                "position": [float(x) for x in drone_pos[i_bad]],
                "sdf": float(sdf_vals[i_bad]), "margin": s.safety_margin,
            })

        # track the actor
        if k > 0:
            state = kf_predict(state, dt_frame, s.kf_process_noise)
            state = kf_update(state, pelvis_true, s.kf_obs_noise)

        # central planning: anchor at the realized formation yaw
        theta_real = wrap_angle(math.atan2(drone_pos[0][1] - pelvis_true[1],
                                           drone_pos[0][0] - pelvis_true[0]))
        if s.formation_mode == "adaptive" and k % central_every == 0:
            fplan = plan(s.world, state, s.formation, theta_real,
                         s.horizon, s.plan_dt, t0=t, params=s.planner)

        # local refinement round
        if k % local_every == 0:
            if s.formation_mode == "adaptive":
                fine_actor = forecast_path(state, s.horizon, s.dt_fine, t0=t)
                grid_t = fine_actor.timestamps
                peer_pts = np.array([
                    prev.sample(grid_t) if prev is not None
                    else np.tile(drone_pos[i], (len(grid_t), 1))
                    for i, prev in enumerate(refined)
                ])
                new_refined = []
                for i in range(n):
                    target = upsample_plan(fplan, i, s.dt_fine)
                    # warm start from the previous round's solution
                    init = (refined[i].sample(grid_t) if refined[i] is not None
                            else target.points.copy())
                    init[0] = drone_pos[i]
                    peers = PeerForecast(
                        timestamps=grid_t,
                        points=np.delete(peer_pts, i, axis=0))
                    result = refine(
                        FineTrajectory(timestamps=grid_t, points=init),
                        s.world, fine_actor, target, peers, s.local)
                    degraded += int(result.degraded)
                    new_refined.append(result.trajectory)
                refined = new_refined
            else:
                refined = [
                    _fixed_yaw_trajectory(s, i, state, t, float(drone_pos[i][2]))
                    for i in range(n)
                ]

        # capture
        skel = walker_skeleton(s.motion, t)
        gt_joints.append(skel.joints)
        pelvis_est = state.position
        positions_log[k] = drone_pos
        yaw_log[k] = theta_real
        for i in range(n):
            heading, tilt = cap.aim_at(drone_pos[i], pelvis_est)
            pose = Pose(position=drone_pos[i].copy(), heading=heading, camera_tilt=tilt)
            det = cap.simulate_detections(
                skel, pose, s.intrinsics, s.world, s.noise,
                rng=np.random.default_rng([s.seed, _STREAM_DETECT, k, i]),
                occlusion_threshold=s.occlusion_threshold)
            recorded = cap.perturb_camera_pose(
                pose, s.noise, np.random.default_rng([s.seed, _STREAM_POSE, k, i]))
            det_streams[i].append(det)
            true_poses[i].append(pose)
            rec_poses[i].append(recorded)
            _, tilt_true = cap.aim_at(drone_pos[i], pelvis_true)
            tilt_log[k, i] = tilt_true

    gt = cap.SkeletonSequence(timestamps=timestamps, joints=np.array(gt_joints),
                              carried=np.zeros((frames, gt_joints[0].shape[0]), bool))
    est = cap.reconstruct_sequence(timestamps, det_streams, rec_poses, s.intrinsics)
    err = cap.recon_error(est, gt)
    return RunTrace(
        timestamps=timestamps, gt=gt, est=est,
        per_frame_mpjpe=err.per_frame_mpjpe, total_error=err.total,
        drone_positions=positions_log, formation_yaw=yaw_log,
        realized_tilt=tilt_log, min_sdf=sdf_log,
        detections=det_streams, true_poses=true_poses, recorded_poses=rec_poses,
        refine_degraded_count=degraded,
    )


def free_world() -> WorldModel:
    """Obstacle-free world: a tiny all-zero grid plus a free out-of-bounds
    default, so every query reports free space."""
    grid = OccupancyGrid(origin=np.zeros(3), voxel_size=1.0, values=np.zeros((2, 2, 2)))
    return WorldModel.from_grid(grid)


def scenario_free(duration: float = 75.0, seed: int = 0, n: int = 2,
                  phi_deg: float = 15.0, pose_sigma: float = 0.0) -> Scenario:
    """Sim experiment base: straight 1.5 m/s walk with lateral sway in an
    empty world."""
    motion = ActorMotion(
        waypoints=np.array([[0.0, 0.0, 0.0], [120.0, 0.0, 0.0]]),
        speed=1.5, sway_amplitude=0.75, sway_period=8.0)
    formation = FormationSpec(n=n, phi_form=math.radians(phi_deg))
    noise = cap.NoiseModel(pose_position_sigma=pose_sigma)
    return Scenario(world=free_world(), motion=motion, formation=formation,
                    noise=noise, duration=duration, seed=seed)


def mound_world() -> WorldModel:
    """A single broad column ("mound") north of the actor's path."""
    origin = np.array([0.0, -12.0, 0.0])
    voxel = 0.5
    dims = (100, 64, 40)
    values = np.zeros(dims)
    add_cylinder(values, origin, voxel, center_xy=(25.0, 9.66), radius=5.5,
                 z0=0.0, z1=13.5)
    grid = OccupancyGrid(origin=origin, voxel_size=voxel, values=values)
    return WorldModel.from_grid(grid)


def scenario_mound(duration: float = 26.0, seed: int = 0,
                   formation_mode: str = "adaptive") -> Scenario:
    motion = ActorMotion(waypoints=np.array([[5.0, 0.0, 0.0], [45.0, 0.0, 0.0]]),
                         speed=1.5)
    return Scenario(world=mound_world(), motion=motion,
                    formation=FormationSpec(n=2), noise=cap.NoiseModel(),
                    duration=duration, seed=seed, formation_mode=formation_mode)


def add_box(values: np.ndarray, origin, voxel_size: float, lo, hi,
            occupancy: float = 1.0):
    """Mark voxels whose centers fall inside the axis-aligned box [lo, hi]."""
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    idx_lo = np.maximum(np.ceil((lo - origin) / voxel_size - 0.5).astype(int), 0)
    idx_hi = np.minimum(np.floor((hi - origin) / voxel_size - 0.5).astype(int),
                        np.array(values.shape) - 1)
    if np.any(idx_hi < idx_lo):
        return
    values[idx_lo[0]:idx_hi[0] + 1, idx_lo[1]:idx_hi[1] + 1,
           idx_lo[2]:idx_hi[2] + 1] = occupancy


def add_cylinder(values: np.ndarray, origin, voxel_size: float, center_xy,
                 radius: float, z0: float, z1: float, occupancy: float = 1.0):
    """Mark voxels whose centers fall inside a vertical cylinder."""
    nx, ny, nz = values.shape
    xs = origin[0] + (np.arange(nx) + 0.5) * voxel_size
    ys = origin[1] + (np.arange(ny) + 0.5) * voxel_size
    zs = origin[2] + (np.arange(nz) + 0.5) * voxel_size
    in_z = (zs >= z0) & (zs <= z1)
    dx = xs[:, None] - center_xy[0]
    dy = ys[None, :] - center_xy[1]
    in_xy = dx ** 2 + dy ** 2 <= radius ** 2
    mask = in_xy[:, :, None] & in_z[None, None, :]
    values[mask] = occupancy


def experiment_tilt_sweep(base: Scenario, tilts_deg=(0.0, 15.0, 30.0, 45.0, 60.0),
                          noise_sigmas=(0.0, 0.1, 0.25, 0.5), seeds=(0, 1, 2, 3, 4),
                          jobs: int = 1):
    """Sim E1: reconstruction error vs formation tilt under camera-pose noise.

    Returns one row per (tilt, noise, seed) cell, sorted, with total squared
    error and mean MPJPE.
    """
    cells = [(tilt, sigma, seed) for tilt in tilts_deg for sigma in noise_sigmas
             for seed in seeds]
    runs = _run_cells(base, cells, _tilt_cell, jobs)
    rows = [
        {"tilt_deg": tilt, "noise_sigma_m": sigma, "seed": seed,
         "total_E_recon": res[0], "mean_mpjpe_m": res[1]}
        for (tilt, sigma, seed), res in runs
    ]
    rows.sort(key=lambda r: (r["tilt_deg"], r["noise_sigma_m"], r["seed"]))
    return rows


def experiment_robot_sweep(base: Scenario, ns=(2, 3, 4, 5),
                           noise_sigmas=(0.0, 0.1, 0.25, 0.5), seeds=(0, 1, 2, 3, 4),
                           jobs: int = 1):
    """Sim E2: reconstruction error vs drone count at 15 degrees tilt."""
    cells = [(n, sigma, seed) for n in ns for sigma in noise_sigmas for seed in seeds]
    runs = _run_cells(base, cells, _robot_cell, jobs)
    rows = [
        {"n": n, "noise_sigma_m": sigma, "seed": seed,
         "total_E_recon": res[0], "mean_mpjpe_m": res[1]}
        for (n, sigma, seed), res in runs
    ]
    rows.sort(key=lambda r: (r["n"], r["noise_sigma_m"], r["seed"]))
    return rows


def _tilt_cell(base: Scenario, cell):
    tilt, sigma, seed = cell
    s = replace(base,
                formation=replace(base.formation, phi_form=math.radians(tilt)),
                noise=replace(base.noise, pose_position_sigma=sigma),
                seed=seed)
    trace = run_scenario(s)
    return trace.total_error, trace.mean_mpjpe


def _robot_cell(base: Scenario, cell):
    n, sigma, seed = cell
    s = replace(base,
                formation=replace(base.formation, n=n,
                                  phi_form=math.radians(15.0)),
                noise=replace(base.noise, pose_position_sigma=sigma),
                seed=seed)
    trace = run_scenario(s)
    return trace.total_error, trace.mean_mpjpe


def _run_cells(base: Scenario, cells, fn, jobs: int):
    if jobs <= 1:
        return [(cell, fn(base, cell)) for cell in cells]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=jobs) as pool:
        results = list(pool.map(_CellRunner(base, fn), cells))
    return list(zip(cells, results))


class _CellRunner:
    """Picklable cell -> result callable for process pools."""

    def __init__(self, base, fn):
        self.base = base
        self.fn = fn

    def __call__(self, cell):
        return self.fn(self.base, cell)


def run_fixed_vs_adaptive(base: Scenario):
    """Run the same scenario with adaptive DP yaw and with frozen yaw plus
    altitude-only avoidance; report errors and realized tilt statistics."""
    rows = []
    for mode in ("adaptive", "fixed"):
        trace = run_scenario(replace(base, formation_mode=mode))
        tilt_deg = np.degrees(trace.realized_tilt)
        rows.append({
            "variant": mode,
            "total_E_recon": trace.total_error,
            "mean_mpjpe_m": trace.mean_mpjpe,
            "mean_tilt_deg": float(tilt_deg.mean()),
            "max_tilt_deg": float(tilt_deg.max()),
        })
    return rows


def aggregate(rows, key: str):
    """Mean/std of mean_mpjpe_m per (key, noise_sigma_m) cell."""
    groups = {}
    for r in rows:
        groups.setdefault((r[key], r["noise_sigma_m"]), []).append(r["mean_mpjpe_m"])
    out = []
    for (kv, sigma), vals in sorted(groups.items()):
        arr = np.array(vals)
        out.append({key: kv, "noise_sigma_m": sigma,
                    "mean_mpjpe_m": float(arr.mean()),
                    "std_mpjpe_m": float(arr.std())})
    return out


def write_rows_csv(path, rows, fields):
    """Deterministic CSV: fixed field order, repr-formatted floats, LF endings."""
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fields)
        for r in rows:
            writer.writerow([repr(r[f]) if isinstance(r[f], float) else r[f]
                             for f in fields])


def write_manifest(path, config: dict, seeds, outputs):
    manifest = {
        "schema_version": 1,
        "config": config,
        "seeds": list(seeds),
        "outputs": list(outputs),
    }
    with open(path, "w", encoding="ascii") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
