"""Decentralized per-drone trajectory refinement.

Each drone upsamples its formation waypoints to a 0.5 s grid and smooths
them by covariant gradient descent: xi <- xi - (1/eta) * A^-1 * grad U,
where A is the second-difference smoothness metric with the start point
held fixed and U combines smoothness, occlusion, obstacle clearance
(SDF hinge), formation tracking, and inter-drone separation penalties.
Peers exchange immutable forecasts of their fine waypoints between rounds;
there is no shared mutable state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .core import WorldModel
from .forecast import ActorPath
from .formation_planner import FormationPlan


@dataclass(frozen=True)
class LocalPlannerParams:
    eta: float = 10.0
    max_iters: int = 50
    max_backtracks: int = 8
    rel_tol: float = 1e-4
    eps_clear: float = 2.0
    d_min: float = 3.0
    lam_occlusion: float = 5.0
    lam_obstacle: float = 10.0
    lam_tracking: float = 1.0
    lam_separation: float = 100.0
    n_quad: int = 32
    covariant: bool = True


@dataclass(frozen=True)
class FineTrajectory:
    """Waypoints on a uniform fine grid; the first waypoint is the drone's
    current position and never moves during refinement."""

    timestamps: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        t = np.array(self.timestamps, dtype=float)
        p = np.array(self.points, dtype=float)
        if t.ndim != 1 or p.shape != (len(t), 3):
            raise ValueError(f"bad fine-trajectory shapes {t.shape}, {p.shape}")
        if len(t) > 2 and not np.allclose(np.diff(t), t[1] - t[0]):
            raise ValueError("fine trajectory timestamps must be uniform")
        t.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "points", p)

    def __len__(self):
        return len(self.timestamps)

    @property
    def dt(self) -> float:
        return float(self.timestamps[1] - self.timestamps[0])

    def sample(self, t) -> np.ndarray:
        """Linearly interpolated position(s) at time t (clamped to the ends).
        Scalar t gives (3,); an array of times gives (len(t), 3)."""
        out = np.stack([np.interp(t, self.timestamps, self.points[:, k])
                        for k in range(3)], axis=-1)
        return out


@dataclass(frozen=True)
class PeerForecast:
    """Expected fine waypoints of the other drones, shape (m, T_f, 3)."""

    timestamps: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        t = np.array(self.timestamps, dtype=float)
        p = np.array(self.points, dtype=float)
        if p.ndim != 3 or p.shape[1] != len(t) or p.shape[2] != 3:
            raise ValueError(f"bad peer-forecast shapes {t.shape}, {p.shape}")
        t.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "points", p)

    @property
    def n_peers(self) -> int:
        return self.points.shape[0]


def upsample_plan(coarse: FormationPlan, drone_index: int, dt_fine: float = 0.5) -> FineTrajectory:
    """Linear interpolation of one drone's coarse waypoints onto the fine grid."""
    if coarse.targets is None:
        raise ValueError("plan carries no formation targets to upsample")
    ts = coarse.timestamps
    n_fine = int(round((ts[-1] - ts[0]) / dt_fine)) + 1
    t_fine = ts[0] + dt_fine * np.arange(n_fine)
    pos = coarse.targets.positions[drone_index]
    fine = np.column_stack([np.interp(t_fine, ts, pos[:, k]) for k in range(3)])
    return FineTrajectory(timestamps=t_fine, points=fine)


def smoothness_cost_grad(points: np.ndarray, dt: float):
    """Squared second-difference acceleration and its gradient."""
    acc = (points[2:] - 2.0 * points[1:-1] + points[:-2]) / dt ** 2
    cost = float((acc * acc).sum())
    grad = np.zeros_like(points)
    a2 = 2.0 * acc / dt ** 2
    grad[2:] += a2
    grad[1:-1] -= 2.0 * a2
    grad[:-2] += a2
    return cost, grad


def occlusion_cost_grad(points: np.ndarray, actor_points: np.ndarray,
                        world: WorldModel, n_quad: int = 32):
    """Mean occupancy along each waypoint-to-actor segment (midpoint rule)."""
    if world.is_empty:
        return 0.0, np.zeros_like(points)
    tau = (np.arange(n_quad) + 0.5) / n_quad
    seg = (tau[None, :, None] * points[:, None, :]
           + (1.0 - tau)[None, :, None] * actor_points[:, None, :])
    occ, g = world.grid.occupancy_and_gradient_at(seg)
    cost = float(occ.mean(axis=-1).sum())
    grad = (tau[None, :, None] * g).mean(axis=1)
    return cost, grad


def obstacle_cost_grad(points: np.ndarray, world: WorldModel, eps_clear: float = 2.0):
    """SDF hinge penalty sum of max(0, eps_clear - d)^2."""
    if world.is_empty:
        return 0.0, np.zeros_like(points)
    d, dg = world.sdf.distance_and_gradient_at(points)
    h = np.maximum(0.0, eps_clear - d)
    cost = float((h * h).sum())
    grad = -2.0 * h[:, None] * dg
    return cost, grad


def tracking_cost_grad(points: np.ndarray, target_points: np.ndarray):
    delta = points - target_points
    return float((delta * delta).sum()), 2.0 * delta


def separation_cost_grad(points: np.ndarray, peer_points: np.ndarray, d_min: float = 3.0):
    """Hinge penalty on simultaneous inter-drone distance below d_min."""
    if peer_points.size == 0:
        return 0.0, np.zeros_like(points)
    diff = points[None, :, :] - peer_points                    # (m, T, 3)
    dist = np.linalg.norm(diff, axis=-1)
    h = np.maximum(0.0, d_min - dist)
    cost = float((h * h).sum())
    safe = np.maximum(dist, 1e-12)
    grad = (-2.0 * h / safe)[:, :, None] * diff
    return cost, grad.sum(axis=0)


def separation_cost(traj: FineTrajectory, peers: PeerForecast, d_min: float = 3.0) -> float:
    if len(traj) != len(peers.timestamps) or not np.allclose(
            traj.timestamps, peers.timestamps):
        raise ValueError("trajectory and peer forecast grids differ")
    cost, _ = separation_cost_grad(traj.points, peers.points, d_min)
    return cost


@dataclass(frozen=True)
class RefineResult:
    trajectory: FineTrajectory
    initial_cost: float
    final_cost: float
    iterations: int
    converged: bool
    degraded: bool


def _objective(points, dt, world, actor_points, target_points, peer_points,
               params: LocalPlannerParams, with_grad: bool):
    c_s, g_s = smoothness_cost_grad(points, dt)
    c_o, g_o = occlusion_cost_grad(points, actor_points, world, params.n_quad)
    c_b, g_b = obstacle_cost_grad(points, world, params.eps_clear)
    c_t, g_t = tracking_cost_grad(points, target_points)
    c_p, g_p = separation_cost_grad(points, peer_points, params.d_min)
    cost = (c_s + params.lam_occlusion * c_o + params.lam_obstacle * c_b
            + params.lam_tracking * c_t + params.lam_separation * c_p)
    if not with_grad:
        return cost, None
    grad = (g_s + params.lam_occlusion * g_o + params.lam_obstacle * g_b
            + params.lam_tracking * g_t + params.lam_separation * g_p)
    return cost, grad


def smoothness_metric(n_points: int, dt: float, ridge: float) -> np.ndarray:
    """Hessian of the smoothness term over the free waypoints (start fixed),
    plus a small ridge: linear ramps are smoothness-free, so the restricted
    Hessian alone is singular."""
    D2 = np.zeros((n_points - 2, n_points))
    for i in range(n_points - 2):
        D2[i, i:i + 3] = (1.0, -2.0, 1.0)
    H = 2.0 * D2.T @ D2 / dt ** 4
    A = H[1:, 1:] + ridge * np.eye(n_points - 1)
    return A


def refine(traj: FineTrajectory, world: WorldModel, actor_path: ActorPath,
           target: FineTrajectory, peers: PeerForecast,
           params: LocalPlannerParams = LocalPlannerParams()) -> RefineResult:
    """Covariant gradient descent on the fine trajectory.

    Accepts an update only when it strictly decreases U (backtracking line
    search), so the accepted cost sequence is non-increasing. Terminates on a
    small relative cost change, a vanishing gradient, max_iters, or, when
    backtracking is exhausted away from a stationary point, with the
    degraded flag set.
    """
    for other, name in ((target.timestamps, "target"),
                        (actor_path.timestamps, "actor path"),
                        (peers.timestamps, "peer forecast")):
        if len(other) != len(traj) or not np.allclose(other, traj.timestamps):
            raise ValueError(f"{name} is not on the trajectory's timestamp grid")

    dt = traj.dt
    pts = traj.points.copy()
    n = len(pts)
    # ridge scaled to the tracking curvature keeps A well conditioned without
    # distorting the smoothness geometry
    A = smoothness_metric(n, dt, ridge=2.0 * max(params.lam_tracking, 1e-6))
    chol = cho_factor(A) if params.covariant else None

    def U(p, with_grad=False):
        return _objective(p, dt, world, actor_path.positions, target.points,
                          peers.points, params, with_grad)

    cost, grad = U(pts, with_grad=True)
    initial_cost = cost
    converged = False
    degraded = False
    iters = 0
    for _ in range(params.max_iters):
        iters += 1
        g_free = grad[1:]
        if np.linalg.norm(g_free) <= 1e-10 * (1.0 + abs(cost)):
            converged = True
            break
        direction = cho_solve(chol, g_free) if params.covariant else g_free
        accepted = False
        step = 1.0 / params.eta
        for _ in range(params.max_backtracks + 1):
            cand = pts.copy()
            cand[1:] = pts[1:] - step * direction
            # gradient computed alongside the value: it is reused next
            # iteration when the step is accepted
            c_cand, g_cand = U(cand, with_grad=True)
            if c_cand < cost:
                pts = cand
                prev = cost
                cost = c_cand
                grad = g_cand
                accepted = True
                break
            step *= 0.5
        if not accepted:
            degraded = True
            break
        if abs(prev - cost) <= params.rel_tol * max(abs(prev), 1e-12):
            converged = True
            break

    out = FineTrajectory(timestamps=traj.timestamps, points=pts)
    return RefineResult(trajectory=out, initial_cost=initial_cost, final_cost=cost,
                        iterations=iters, converged=converged, degraded=degraded)
