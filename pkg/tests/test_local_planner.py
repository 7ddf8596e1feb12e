"""Fine-trajectory refinement tests: gradients, line search, separation."""

import numpy as np
import pytest

from airmocap.core import empty_world
from airmocap.costs import TrajectorySet
from airmocap.forecast import ActorPath
from airmocap.formation_planner import FormationPlan
from airmocap.local_planner import (
    FineTrajectory,
    LocalPlannerParams,
    PeerForecast,
    obstacle_cost_grad,
    occlusion_cost_grad,
    refine,
    separation_cost,
    separation_cost_grad,
    smoothness_cost_grad,
    tracking_cost_grad,
    upsample_plan,
)

from conftest import make_world


def fine_grid(n=21, dt=0.5):
    return dt * np.arange(n)


def line_traj(a, b, n=21, dt=0.5):
    return FineTrajectory(fine_grid(n, dt), np.linspace(a, b, n))


def no_peers(n=21, dt=0.5):
    return PeerForecast(fine_grid(n, dt), np.zeros((0, n, 3)))


def coarse_plan(positions, dt=2.0):
    positions = np.asarray(positions, float)
    T = len(positions)
    t = dt * np.arange(T)
    targets = TrajectorySet(t, positions[None])
    return FormationPlan(t, np.zeros(T, int), np.zeros(T), neighbor_radius=1,
                         d_theta=8, targets=targets)


def column_obstacle_world():
    vals = np.zeros((40, 40, 20))
    vals[18:22, 28:32, :12] = 1.0
    return make_world(vals, origin=(-20.0, -20.0, 0.0), voxel_size=1.0)


def test_upsample_linear_interpolation():
    plan = coarse_plan([[0, 0, 0], [4, 0, 0]])
    fine = upsample_plan(plan, 0, dt_fine=0.5)
    assert len(fine) == 5
    assert np.allclose(fine.timestamps, [0, 0.5, 1.0, 1.5, 2.0])
    assert np.allclose(fine.points[1], [1, 0, 0])
    assert np.allclose(fine.points[0], plan.targets.positions[0, 0])
    assert np.allclose(fine.points[-1], plan.targets.positions[0, -1])


def test_upsample_constant_plan():
    plan = coarse_plan([[2, 3, 4]] * 6)
    fine = upsample_plan(plan, 0)
    assert len(fine) == 21
    assert np.allclose(fine.points, [2, 3, 4])


def test_upsample_requires_targets():
    plan = FormationPlan(np.arange(2.0), np.zeros(2, int), np.zeros(2),
                         neighbor_radius=1, d_theta=8)
    with pytest.raises(ValueError, match="targets"):
        upsample_plan(plan, 0)


def test_fine_trajectory_sample_interpolates_and_clamps():
    traj = line_traj([0, 0, 0], [10, 0, 5])
    assert np.allclose(traj.sample(0.25), [0.25, 0, 0.125])
    assert np.allclose(traj.sample(-1.0), traj.points[0])
    assert np.allclose(traj.sample(99.0), traj.points[-1])
    out = traj.sample(np.array([0.0, 5.0, 10.0]))
    assert out.shape == (3, 3)
    assert np.allclose(out[1], [5, 0, 2.5])


def test_fine_trajectory_validation():
    with pytest.raises(ValueError, match="uniform"):
        FineTrajectory(np.array([0.0, 0.5, 2.0]), np.zeros((3, 3)))
    with pytest.raises(ValueError, match="shapes"):
        FineTrajectory(np.arange(3.0), np.zeros((4, 3)))


def test_peer_forecast_validation():
    with pytest.raises(ValueError, match="shapes"):
        PeerForecast(np.arange(3.0), np.zeros((2, 4, 3)))
    assert PeerForecast(np.arange(3.0), np.zeros((2, 3, 3))).n_peers == 2


def test_separation_cost_hinge_values():
    a = line_traj([0, 0, 0], [10, 0, 0])
    # 4 m apart: beyond the 3 m threshold
    far = PeerForecast(a.timestamps, (a.points + [0, 4.0, 0])[None])
    assert separation_cost(a, far) == 0.0
    # 2 m apart: hinge of 1 m at every one of the T_f points
    near = PeerForecast(a.timestamps, (a.points + [0, 2.0, 0])[None])
    assert separation_cost(a, near) == pytest.approx(len(a) * 1.0)
    # two peers double it
    both = PeerForecast(a.timestamps, np.stack([a.points + [0, 2.0, 0],
                                                a.points - [0, 2.0, 0]]))
    assert separation_cost(a, both) == pytest.approx(2 * len(a))


def test_separation_cost_symmetric():
    rng = np.random.default_rng(6)
    t = fine_grid()
    p = rng.normal(size=(21, 3))
    q = rng.normal(size=(21, 3))
    ab = separation_cost(FineTrajectory(t, p), PeerForecast(t, q[None]))
    ba = separation_cost(FineTrajectory(t, q), PeerForecast(t, p[None]))
    assert ab == pytest.approx(ba, abs=1e-12)


def test_separation_cost_grid_mismatch():
    a = line_traj([0, 0, 0], [10, 0, 0])
    with pytest.raises(ValueError, match="grids differ"):
        separation_cost(a, PeerForecast(a.timestamps + 0.1, a.points[None]))


def test_objective_gradient_matches_central_differences(slab_world):
    """Analytic gradient of the full refinement objective vs central
    differences (h=1e-4) at random waypoints near the slab."""
    rng = np.random.default_rng(17)
    wp = np.column_stack([rng.uniform(8.2, 9.4, 5), rng.uniform(-2, 2, 5),
                          rng.uniform(-2, 2, 5)])
    actor = np.tile([16.2, 0.3, -0.2], (5, 1))
    target = wp + rng.normal(scale=0.3, size=(5, 3))
    peer = wp[None] + np.array([0.0, 1.5, 0.0])
    prm = LocalPlannerParams()
    dt = 0.5

    def U(p, with_grad=False):
        cs, gs = smoothness_cost_grad(p, dt)
        co, go = occlusion_cost_grad(p, actor, slab_world, prm.n_quad)
        cb, gb = obstacle_cost_grad(p, slab_world, prm.eps_clear)
        ct, gt = tracking_cost_grad(p, target)
        cp, gp = separation_cost_grad(p, peer, prm.d_min)
        cost = (cs + prm.lam_occlusion * co + prm.lam_obstacle * cb
                + prm.lam_tracking * ct + prm.lam_separation * cp)
        if not with_grad:
            return cost
        return cost, (gs + prm.lam_occlusion * go + prm.lam_obstacle * gb
                      + prm.lam_tracking * gt + prm.lam_separation * gp)

    _, g_an = U(wp, with_grad=True)
    h = 1e-4
    for i in range(5):
        for c in range(3):
            plus, minus = wp.copy(), wp.copy()
            plus[i, c] += h
            minus[i, c] -= h
            fd = (U(plus) - U(minus)) / (2 * h)
            rel = abs(fd - g_an[i, c]) / max(abs(fd), abs(g_an[i, c]), 1e-9)
            assert rel < 1e-3


def test_refine_stationary_point_unchanged():
    # straight line in free space tracking itself: gradient is zero
    traj = line_traj([0, 0, 0], [10, 2, 1])
    actor = ActorPath(traj.timestamps, traj.points - [0, 0, 5.0])
    res = refine(traj, empty_world(), actor, traj, no_peers())
    assert res.converged and not res.degraded
    assert np.abs(res.trajectory.points - traj.points).max() < 1e-9
    assert res.final_cost == res.initial_cost


def test_refine_start_point_immutable_and_cost_decreases():
    rng = np.random.default_rng(3)
    t = fine_grid()
    pts = np.linspace([0, 0, 0], [10, 0, 0], 21) + rng.normal(scale=0.4,
                                                              size=(21, 3))
    traj = FineTrajectory(t, pts)
    target = line_traj([0, 0, 0], [10, 0, 0])
    actor = ActorPath(t, target.points - [0, 0, 5.0])
    res = refine(traj, empty_world(), actor, target, no_peers())
    assert np.array_equal(res.trajectory.points[0], pts[0])
    assert res.final_cost < res.initial_cost
    assert not res.degraded


def test_refine_escapes_obstacle_block():
    world = column_obstacle_world()
    t = fine_grid()
    pts = np.linspace([-8, 9.3, 2.7], [8, 9.3, 2.7], 21)
    traj = FineTrajectory(t, pts)
    actor = ActorPath(t, np.tile([0.0, 0.0, 1.0], (21, 1)))
    res = refine(traj, world, actor, FineTrajectory(t, pts.copy()), no_peers())
    c0, _ = obstacle_cost_grad(pts, world)
    c1, _ = obstacle_cost_grad(res.trajectory.points, world)
    assert c1 < c0
    d0 = world.sdf.distance_at(pts)
    d1 = world.sdf.distance_at(res.trajectory.points)
    assert d1.min() > d0.min()
    assert d1.min() > 0  # pushed fully outside the block


def test_refine_separation_pushes_drones_apart():
    """Two drones starting 1 m apart drift to >= 2.5 m at the horizon end
    after exchanging forecasts over a few decentralized rounds."""
    t = fine_grid()
    a = FineTrajectory(t, np.linspace([0, 0.5, 0], [10, 0.5, 0], 21))
    b = FineTrajectory(t, np.linspace([0, -0.5, 0], [10, -0.5, 0], 21))
    target_a = FineTrajectory(t, np.array(a.points))
    target_b = FineTrajectory(t, np.array(b.points))
    actor = ActorPath(t, np.tile([5.0, 0.0, -5.0], (21, 1)))
    for _ in range(3):
        a = refine(a, empty_world(), actor, target_a,
                   PeerForecast(t, b.points[None])).trajectory
        b = refine(b, empty_world(), actor, target_b,
                   PeerForecast(t, a.points[None])).trajectory
    dist = np.linalg.norm(a.points - b.points, axis=1)
    assert dist[-1] >= 2.5


def test_covariant_update_tames_stiff_modes():
    """On a zig-zag path the raw plain-gradient step at the same eta blows
    the smoothness cost up, while the metric-preconditioned step shrinks it."""
    t = fine_grid()
    zig = np.zeros((21, 3))
    zig[:, 0] = 0.75 * np.arange(21)
    zig[:, 2] = np.where(np.arange(21) % 2 == 0, 0.0, 1.0)
    actor = ActorPath(t, np.tile([5.0, 0.0, -5.0], (21, 1)))
    params = LocalPlannerParams(max_iters=1, lam_tracking=0.01)
    res = refine(FineTrajectory(t, zig.copy()), empty_world(), actor,
                 FineTrajectory(t, zig.copy()), no_peers(), params)
    s0, g_s = smoothness_cost_grad(zig, 0.5)
    s_cov, _ = smoothness_cost_grad(res.trajectory.points, 0.5)

    _, g_t = tracking_cost_grad(zig, zig)
    g = g_s + params.lam_tracking * g_t
    plain = zig.copy()
    plain[1:] -= (1.0 / params.eta) * g[1:]
    s_plain, _ = smoothness_cost_grad(plain, 0.5)

    assert s_cov < s0 < s_plain


def test_refine_degraded_on_hopeless_step_size():
    # eta ~ 0 makes every backtracked step overshoot; best-so-far comes back
    t = fine_grid()
    pts = np.linspace([0, 0, 0], [10, 0, 0], 21)
    target = FineTrajectory(t, pts + [0, 1.0, 0])
    actor = ActorPath(t, np.tile([5.0, 0.0, -5.0], (21, 1)))
    res = refine(FineTrajectory(t, pts), empty_world(), actor, target,
                 no_peers(), LocalPlannerParams(eta=1e-9))
    assert res.degraded
    assert res.final_cost == res.initial_cost
    assert np.array_equal(res.trajectory.points, pts)


def test_refine_rejects_mismatched_grids():
    traj = line_traj([0, 0, 0], [10, 0, 0])
    actor = ActorPath(traj.timestamps, np.zeros((21, 3)))
    bad_target = FineTrajectory(traj.timestamps + 0.25, traj.points)
    with pytest.raises(ValueError, match="target"):
        refine(traj, empty_world(), actor, bad_target, no_peers())
    bad_peers = PeerForecast(fine_grid(11), np.zeros((1, 11, 3)))
    with pytest.raises(ValueError, match="peer"):
        refine(traj, empty_world(), actor, traj, bad_peers)
