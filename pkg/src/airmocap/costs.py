"""Formation geometry and the planner cost functionals.

The planning objective is J = J_smooth + l1*J_occlusion + l2*J_obstacle
+ l3*J_formation, evaluated on candidate drone trajectories around a
forecasted actor path. Obstacle/occlusion terms read a time-dependent
spherical occupancy grid centered on the actor.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import WorldModel, spherical_offsets, wrap_angle
from .forecast import ActorPath

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class FormationSpec:
    """Ring formation around the actor: n drones at range rho_form and
    elevation phi_form, equally spaced in azimuth.

    Weights follow the objective ordering: lam_occlusion (l1),
    lam_obstacle (l2), lam_formation (l3).
    """

    n: int = 2
    rho_form: float = 10.0
    phi_form: float = math.radians(15.0)
    lam_occlusion: float = 5.0
    lam_obstacle: float = 10.0
    lam_formation: float = 1.0
    r_max: float = 15.0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"formation needs n >= 2 drones, got {self.n}")
        if not self.rho_form > 0:
            raise ValueError(f"rho_form must be > 0, got {self.rho_form}")
        if self.r_max < self.rho_form:
            raise ValueError("r_max must be >= rho_form")
        for name in ("lam_occlusion", "lam_obstacle", "lam_formation"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def delta_theta(self) -> float:
        """Yaw spacing between drones: 2*pi/n, with the n=2 special case of pi/2."""
        if self.n == 2:
            return math.pi / 2.0
        return TWO_PI / self.n

    def drone_offsets(self) -> np.ndarray:
        return self.delta_theta * np.arange(self.n)


@dataclass(frozen=True)
class TrajectorySet:
    """Per-drone waypoints on a shared timestamp grid.

    positions has shape (n, T, 3). headings, when present, is (n, T) yaw
    angles pointing at the actor.
    """

    timestamps: np.ndarray
    positions: np.ndarray
    headings: np.ndarray | None = None

    def __post_init__(self):
        t = np.array(self.timestamps, dtype=float)
        p = np.array(self.positions, dtype=float)
        if t.ndim != 1 or p.ndim != 3 or p.shape[1] != len(t) or p.shape[2] != 3:
            raise ValueError(f"bad trajectory shapes: timestamps {t.shape}, positions {p.shape}")
        if len(t) > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        t.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "positions", p)
        if self.headings is not None:
            h = np.array(self.headings, dtype=float)
            if h.shape != p.shape[:2]:
                raise ValueError(f"headings shape {h.shape} != {p.shape[:2]}")
            h.setflags(write=False)
            object.__setattr__(self, "headings", h)

    @property
    def n_drones(self) -> int:
        return self.positions.shape[0]

    @property
    def n_steps(self) -> int:
        return self.positions.shape[1]


def formation_targets(actor_path: ActorPath, spec: FormationSpec, theta_form) -> TrajectorySet:
    """Place the n-drone ring around each forecasted actor position.

    theta_form is the formation yaw per time step (scalar broadcasts); drone i
    sits at azimuth theta_form + i*delta_theta, range rho_form, elevation
    phi_form. Headings point back at the actor.
    """
    T = len(actor_path)
    theta = np.broadcast_to(np.asarray(theta_form, dtype=float), (T,))
    angles = theta[None, :] + spec.drone_offsets()[:, None]  # (n, T)
    offsets = spherical_offsets(spec.rho_form, angles, spec.phi_form)
    positions = actor_path.positions[None, :, :] + offsets
    to_actor = actor_path.positions[None, :, :] - positions
    headings = np.arctan2(to_actor[..., 1], to_actor[..., 0])
    return TrajectorySet(timestamps=actor_path.timestamps, positions=positions,
                         headings=headings)


def cost_formation(traj: TrajectorySet, targets: TrajectorySet) -> float:
    """Sum over drones and time of the (unsquared) distance to formation slots."""
    if traj.positions.shape != targets.positions.shape:
        raise ValueError(
            f"trajectory/target shape mismatch: {traj.positions.shape} vs "
            f"{targets.positions.shape}"
        )
    d = traj.positions - targets.positions
    return float(np.sqrt((d * d).sum(axis=-1)).sum())


@dataclass(frozen=True)
class SphericalCostGrid:
    """Occupancy resampled onto actor-centered spherical cells, one lattice
    per forecast step.

    values[t, j, k, l] is the mean occupancy of the cell at azimuth cell j,
    elevation cell k, radial cell l. Azimuth cells are centered on
    -pi + j*(2*pi/D_theta) so they align with the planner's yaw states;
    elevation spans [-pi/2, pi/2]; radius spans [0, r_max].
    """

    timestamps: np.ndarray
    centers: np.ndarray
    values: np.ndarray
    r_max: float

    def __post_init__(self):
        t = np.array(self.timestamps, dtype=float)
        c = np.array(self.centers, dtype=float)
        v = np.array(self.values, dtype=float)
        if v.ndim != 4 or c.shape != (len(t), 3) or v.shape[0] != len(t):
            raise ValueError(f"bad grid shapes: {t.shape}, {c.shape}, {v.shape}")
        if v.size and (v.min() < -1e-12 or v.max() > 1.0 + 1e-12):
            raise ValueError("cell costs must lie in [0, 1]")
        for a in (t, c, v):
            a.setflags(write=False)
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "r_max", float(self.r_max))

    @property
    def d_theta(self) -> int:
        return self.values.shape[1]

    @property
    def d_phi(self) -> int:
        return self.values.shape[2]

    @property
    def d_rho(self) -> int:
        return self.values.shape[3]

    def theta_index(self, theta):
        step = TWO_PI / self.d_theta
        return (np.round((np.asarray(theta) + math.pi) / step).astype(int)) % self.d_theta

    def phi_index(self, phi):
        step = math.pi / self.d_phi
        idx = np.floor((np.asarray(phi) + math.pi / 2) / step).astype(int)
        return np.clip(idx, 0, self.d_phi - 1)

    def column_volume_weights(self) -> np.ndarray:
        """Spherical volume element rho^2*cos(phi)*drho*dtheta*dphi evaluated
        at cell centers; shape (d_phi, d_rho)."""
        d_theta = TWO_PI / self.d_theta
        d_phi = math.pi / self.d_phi
        d_rho = self.r_max / self.d_rho
        phi_c = -math.pi / 2 + (np.arange(self.d_phi) + 0.5) * d_phi
        rho_c = (np.arange(self.d_rho) + 0.5) * d_rho
        return np.cos(phi_c)[:, None] * (rho_c ** 2)[None, :] * d_rho * d_theta * d_phi


def build_spherical_grid(world: WorldModel, actor_path: ActorPath, spec: FormationSpec,
                         d_theta: int = 8, d_phi: int = 4, d_rho: int = 8,
                         samples_per_cell: int = 8) -> SphericalCostGrid:
    """Resample Cartesian occupancy into actor-centered spherical cells.

    Each cell is averaged over stratified samples: samples_per_cell must be a
    perfect cube s^3 and each cell is split s times per axis with one sample
    at each sub-cell center.
    """
    if d_theta < 4:
        raise ValueError(f"d_theta must be >= 4, got {d_theta}")
    s = round(samples_per_cell ** (1.0 / 3.0))
    if s ** 3 != samples_per_cell:
        raise ValueError(f"samples_per_cell must be a perfect cube, got {samples_per_cell}")
    T = len(actor_path)
    shape = (T, d_theta, d_phi, d_rho)
    if world.is_empty:
        return SphericalCostGrid(actor_path.timestamps, actor_path.positions,
                                 np.zeros(shape), spec.r_max)

    step_t = TWO_PI / d_theta
    step_p = math.pi / d_phi
    step_r = spec.r_max / d_rho
    sub = (np.arange(s) + 0.5) / s
    theta_lo = -math.pi + (np.arange(d_theta) - 0.5) * step_t
    theta_s = theta_lo[:, None] + step_t * sub[None, :]          # (Dt, s)
    phi_s = -math.pi / 2 + (np.arange(d_phi)[:, None] + sub[None, :]) * step_p
    rho_s = (np.arange(d_rho)[:, None] + sub[None, :]) * step_r

    th = theta_s.reshape(d_theta, 1, 1, s, 1, 1)
    ph = phi_s.reshape(1, d_phi, 1, 1, s, 1)
    rh = rho_s.reshape(1, 1, d_rho, 1, 1, s)
    offsets = spherical_offsets(rh, th, ph)                       # (Dt, Dp, Dr, s, s, s, 3)
    points = actor_path.positions.reshape(T, 1, 1, 1, 1, 1, 1, 3) + offsets[None]
    occ = world.occupancy_at(points)
    values = np.clip(occ.mean(axis=(-3, -2, -1)), 0.0, 1.0)
    return SphericalCostGrid(actor_path.timestamps, actor_path.positions, values, spec.r_max)


def cost_obstacle(grid: SphericalCostGrid, traj: TrajectorySet, spec: FormationSpec) -> float:
    """Radial-column occupancy accumulated at each drone's angular direction.

    For every drone/time the occupancy of the column of cells containing
    the drone's (theta, phi) direction is integrated from 0 to r_max with
    the spherical volume weight; the per-drone, per-time terms are summed.
    """
    d = traj.positions - grid.centers[None, :, :]
    rho = np.linalg.norm(d, axis=-1)
    if np.any(rho < 1e-9):
        raise ValueError("drone coincides with the actor; angular direction undefined")
    theta = np.arctan2(d[..., 1], d[..., 0])
    phi = np.arcsin(np.clip(d[..., 2] / rho, -1.0, 1.0))
    j = grid.theta_index(theta)                                   # (n, T)
    k = grid.phi_index(phi)
    t_idx = np.broadcast_to(np.arange(grid.values.shape[0])[None, :], j.shape)
    columns = grid.values[t_idx, j, k, :]                         # (n, T, d_rho)
    weights = grid.column_volume_weights()[k]                     # (n, T, d_rho)
    return float((columns * weights).sum())


def cost_occlusion(world: WorldModel, traj: TrajectorySet, actor_path: ActorPath,
                   n_quad: int = 32) -> float:
    """Mean occupancy along each drone-to-actor segment (midpoint rule,
    n_quad samples), summed over drones and time."""
    if traj.n_steps != len(actor_path) or not np.allclose(
            traj.timestamps, actor_path.timestamps):
        raise ValueError("trajectory and actor path timestamps differ")
    if world.is_empty:
        return 0.0
    tau = (np.arange(n_quad) + 0.5) / n_quad
    pts = (tau[None, None, :, None] * traj.positions[:, :, None, :]
           + (1.0 - tau)[None, None, :, None] * actor_path.positions[None, :, None, :])
    occ = world.occupancy_at(pts)
    return float(occ.mean(axis=-1).sum())


def cost_smoothness(traj: TrajectorySet) -> float:
    """Squared finite-difference acceleration summed over drones and time."""
    if traj.n_steps < 3:
        warnings.warn("smoothness needs at least 3 waypoints; returning 0", stacklevel=2)
        return 0.0
    dts = np.diff(traj.timestamps)
    dt = dts[0]
    if not np.allclose(dts, dt):
        raise ValueError("smoothness assumes a uniform timestamp grid")
    p = traj.positions
    acc = p[:, 2:] - 2.0 * p[:, 1:-1] + p[:, :-2]
    return float((acc * acc).sum()) / dt ** 4


@dataclass(frozen=True)
class CostComponents:
    smooth: float
    occlusion: float
    obstacle: float
    formation: float


def total_cost(components: CostComponents, spec: FormationSpec) -> float:
    """J = J_smooth + l1*J_occ + l2*J_obs + l3*J_form."""
    vals = (components.smooth, components.occlusion, components.obstacle,
            components.formation)
    if any(v < 0 for v in vals):
        raise ValueError(f"cost components must be >= 0, got {vals}")
    return (components.smooth
            + spec.lam_occlusion * components.occlusion
            + spec.lam_obstacle * components.obstacle
            + spec.lam_formation * components.formation)
