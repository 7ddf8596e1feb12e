"""Centralized formation-yaw planning.

The single decision variable is the formation yaw theta_form. Per forecast
step the yaw axis is discretized into D cells; a backward dynamic-programming
pass computes the cost-to-go under a modular neighbor-transition constraint
and a forward pass greedily extracts the optimal yaw sequence starting from
the formation's current yaw.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import WorldModel, spherical_offsets, wrap_angle
from .costs import (FormationSpec, SphericalCostGrid, build_spherical_grid,
                    formation_targets, TrajectorySet)
from .forecast import ActorPath, ActorState, forecast_path

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class PlannerParams:
    d_theta: int = 8
    d_phi: int = 4
    d_rho: int = 8
    samples_per_cell: int = 8
    n_quad: int = 32
    neighbor_radius: int = 1

    def __post_init__(self):
        if self.neighbor_radius < 1:
            raise ValueError("neighbor_radius must be >= 1")


@dataclass(frozen=True)
class YawStateSpace:
    """T x D lattice of formation-yaw states.

    Row 0 is the current (anchor) time step; the yaw of cell k is
    -pi + k*(2*pi/D). cost_to_go is filled by backward_pass.
    """

    timestamps: np.ndarray
    cost_map: np.ndarray
    neighbor_radius: int = 1
    cost_to_go: np.ndarray | None = None

    def __post_init__(self):
        t = np.array(self.timestamps, dtype=float)
        c = np.array(self.cost_map, dtype=float)
        if c.ndim != 2 or c.shape[0] != len(t):
            raise ValueError(f"cost map shape {c.shape} does not cover {len(t)} steps")
        if not np.all(np.isfinite(c)) or c.size and c.min() < 0:
            raise ValueError("cost map must be finite and >= 0")
        if self.neighbor_radius < 1:
            raise ValueError("neighbor_radius must be >= 1")
        t.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "cost_map", c)
        if self.cost_to_go is not None:
            v = np.array(self.cost_to_go, dtype=float)
            if v.shape != c.shape:
                raise ValueError(f"cost_to_go shape {v.shape} != cost map {c.shape}")
            v.setflags(write=False)
            object.__setattr__(self, "cost_to_go", v)

    @property
    def n_steps(self) -> int:
        return self.cost_map.shape[0]

    @property
    def d_theta(self) -> int:
        return self.cost_map.shape[1]

    @property
    def yaw_values(self) -> np.ndarray:
        return -math.pi + np.arange(self.d_theta) * (TWO_PI / self.d_theta)

    def yaw_cell(self, theta: float) -> int:
        """Nearest cell to a (possibly off-grid) yaw angle."""
        step = TWO_PI / self.d_theta
        return int(round((wrap_angle(theta) + math.pi) / step)) % self.d_theta


@dataclass(frozen=True)
class FormationPlan:
    """Chosen yaw cell/angle per step; cells[0] anchors the current yaw."""

    timestamps: np.ndarray
    cells: np.ndarray
    theta: np.ndarray
    neighbor_radius: int
    d_theta: int
    targets: TrajectorySet | None = None
    space: YawStateSpace | None = None

    def __post_init__(self):
        t = np.array(self.timestamps, dtype=float)
        cells = np.array(self.cells, dtype=int)
        theta = np.array(self.theta, dtype=float)
        if not (len(t) == len(cells) == len(theta)):
            raise ValueError("plan fields must share one length")
        step = np.abs(np.diff(cells))
        hops = np.minimum(step, self.d_theta - step)
        if np.any(hops > self.neighbor_radius):
            raise ValueError("plan violates the neighbor-transition constraint")
        for a in (t, cells, theta):
            a.setflags(write=False)
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "theta", theta)

    def __len__(self):
        return len(self.cells)


def build_cost_map(grid: SphericalCostGrid, world: WorldModel, actor_path: ActorPath,
                   spec: FormationSpec, neighbor_radius: int = 1,
                   n_quad: int = 32) -> YawStateSpace:
    """Per-step, per-yaw-cell cost of placing the whole formation at that yaw.

    C[t][k] = l1*occlusion + l2*obstacle + l3*formation-deviation, evaluated
    for all n drones at their ring offsets. The deviation term is identically
    zero here because candidates sit exactly on their formation slots; it is
    kept in the sum for clarity.
    """
    T = len(actor_path)
    if grid.values.shape[0] != T:
        raise ValueError(f"grid covers {grid.values.shape[0]} steps, path has {T}")
    D = grid.d_theta
    yaws = -math.pi + np.arange(D) * (TWO_PI / D)
    angles = yaws[:, None] + spec.drone_offsets()[None, :]        # (D, n)

    # Occlusion: mean occupancy along each candidate-to-actor segment.
    if world.is_empty:
        occ_term = np.zeros((T, D))
    else:
        offsets = spherical_offsets(spec.rho_form, angles, spec.phi_form)  # (D, n, 3)
        cand = actor_path.positions[:, None, None, :] + offsets[None]     # (T, D, n, 3)
        tau = (np.arange(n_quad) + 0.5) / n_quad
        pts = (tau[None, None, None, :, None] * cand[:, :, :, None, :]
               + (1.0 - tau)[None, None, None, :, None]
               * actor_path.positions[:, None, None, None, :])
        occ = world.occupancy_at(pts)                              # (T, D, n, n_quad)
        occ_term = occ.mean(axis=-1).sum(axis=-1)

    # Obstacle: radial-column integral at each drone's angular cell.
    weights = grid.column_volume_weights()                         # (d_phi, d_rho)
    k_phi = int(grid.phi_index(spec.phi_form))
    col = (grid.values[:, :, k_phi, :] * weights[k_phi][None, None, :]).sum(axis=-1)  # (T, D)
    j = grid.theta_index(angles)                                   # (D, n)
    obs_term = col[:, j].sum(axis=-1)                              # (T, D)

    form_term = 0.0  # candidates coincide with their slots
    C = spec.lam_occlusion * occ_term + spec.lam_obstacle * obs_term \
        + spec.lam_formation * form_term
    return YawStateSpace(timestamps=actor_path.timestamps, cost_map=C,
                         neighbor_radius=neighbor_radius)


def backward_pass(space: YawStateSpace) -> YawStateSpace:
    """Fill the cost-to-go: V[T-1] = C[T-1]; V[t][k] = C[t][k] +
    min over modular neighbors k' (|k - k'| <= neighbor_radius) of V[t+1][k']."""
    C = space.cost_map
    r = space.neighbor_radius
    V = np.empty_like(C)
    V[-1] = C[-1]
    shifts = range(-r, r + 1)
    for t in range(space.n_steps - 2, -1, -1):
        nxt = np.min(np.stack([np.roll(V[t + 1], s) for s in shifts]), axis=0)
        V[t] = C[t] + nxt
    return replace(space, cost_to_go=V)


def forward_pass(space: YawStateSpace, theta0: float) -> FormationPlan:
    """Extract the yaw sequence: anchor at theta0's cell, then greedily take
    the neighbor with minimal cost-to-go. Ties break toward the smallest yaw
    change, then the smallest cell index."""
    if space.cost_to_go is None:
        raise ValueError("forward_pass requires a completed backward_pass")
    V = space.cost_to_go
    D = space.d_theta
    r = space.neighbor_radius
    cells = [space.yaw_cell(theta0)]
    for t in range(1, space.n_steps):
        best = min(
            ((V[t, (cells[-1] + off) % D], abs(off), (cells[-1] + off) % D)
             for off in range(-r, r + 1)),
            key=lambda c: (c[0], c[1], c[2]),
        )
        cells.append(best[2])
    cells = np.array(cells)
    return FormationPlan(
        timestamps=space.timestamps,
        cells=cells,
        theta=space.yaw_values[cells],
        neighbor_radius=r,
        d_theta=D,
        space=space,
    )


def plan_cost(space: YawStateSpace, cells) -> float:
    """Accumulated cost map value of a yaw-cell path, excluding the sunk
    anchor row."""
    cells = np.asarray(cells, dtype=int)
    t = np.arange(1, space.n_steps)
    return float(space.cost_map[t, cells[1:]].sum())


def plan(world: WorldModel, actor_state: ActorState, spec: FormationSpec,
         theta0: float, horizon: float = 10.0, dt: float = 2.0, t0: float = 0.0,
         params: PlannerParams = PlannerParams()) -> FormationPlan:
    """Full planning cycle: forecast, spherical grid, cost map, backward and
    forward passes, formation targets. Deterministic for fixed inputs."""
    path = forecast_path(actor_state, horizon, dt, t0)
    if len(path) < 2:
        raise ValueError(f"horizon {horizon} / dt {dt} yields fewer than 2 steps")
    grid = build_spherical_grid(world, path, spec, params.d_theta, params.d_phi,
                                params.d_rho, params.samples_per_cell)
    space = build_cost_map(grid, world, path, spec, params.neighbor_radius,
                           params.n_quad)
    space = backward_pass(space)
    fplan = forward_pass(space, theta0)
    targets = formation_targets(path, spec, fplan.theta)
    return replace(fplan, targets=targets)
