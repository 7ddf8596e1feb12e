"""End-to-end acceptance gate.

Each test checks one shipping criterion and emits a single
``[acceptance] NN <name>: PASS/FAIL (detail)`` line; the full list is echoed
in the terminal summary. The two long tests (tilt and robot-count sweeps)
drive 75 s closed-loop runs over 5 seeds and dominate the runtime.
"""

import itertools
import json
import math
import time

import numpy as np
import pytest
import yaml
from scipy.spatial import cKDTree

import conftest
from airmocap.capture import (
    CameraIntrinsics,
    SkeletonSequence,
    aim_at,
    project,
    projection_matrix,
    recon_error,
    triangulate_batch,
)
from airmocap.cli import main
from airmocap.core import OccupancyGrid, Pose, WorldModel, sdf_from_grid
from airmocap.costs import (
    FormationSpec,
    TrajectorySet,
    build_spherical_grid,
    cost_formation,
    cost_occlusion,
    cost_smoothness,
)
from airmocap.forecast import ActorPath
from airmocap.formation_planner import (
    YawStateSpace,
    backward_pass,
    build_cost_map,
    forward_pass,
    plan_cost,
)
from airmocap.local_planner import (
    obstacle_cost_grad,
    occlusion_cost_grad,
    separation_cost_grad,
    smoothness_cost_grad,
    tracking_cost_grad,
)
from airmocap.simulator import (
    aggregate,
    experiment_robot_sweep,
    experiment_tilt_sweep,
    run_fixed_vs_adaptive,
    run_scenario,
    scenario_free,
    scenario_mound,
)


def _report(name: str, ok: bool, detail: str) -> bool:
    line = f"[acceptance] {name}: {'PASS' if ok else 'FAIL'} ({detail})"
    print(line)
    conftest.ACCEPTANCE_LINES.append(line)
    return ok


SIGMAS = (0.0, 0.1, 0.25, 0.5)
SEEDS = (0, 1, 2, 3, 4)


@pytest.fixture(scope="session")
def tilt_sweep():
    base = scenario_free(duration=75.0)
    t0 = time.perf_counter()
    rows = experiment_tilt_sweep(base, tilts_deg=(0.0, 15.0, 30.0, 45.0, 60.0),
                                 noise_sigmas=SIGMAS, seeds=SEEDS)
    return rows, time.perf_counter() - t0


@pytest.fixture(scope="session")
def robot_sweep():
    base = scenario_free(duration=75.0)
    # only the extreme noise levels enter the criterion
    return experiment_robot_sweep(base, ns=(2, 3, 4, 5),
                                  noise_sigmas=(0.0, 0.5), seeds=SEEDS)


@pytest.fixture(scope="session")
def mound_rows():
    return run_fixed_vs_adaptive(scenario_mound())


@pytest.fixture(scope="session")
def mound_trace():
    return run_scenario(scenario_mound())


def blocks_world_64():
    rng = np.random.default_rng(0)
    vals = np.zeros((64, 64, 64))
    for _ in range(12):
        i, j, k = rng.integers(4, 56, 3)
        vals[i:i + 6, j:j + 6, k:k + 6] = 1.0
    grid = OccupancyGrid(origin=np.array([-32.0, -32.0, 0.0]), voxel_size=1.0,
                         values=vals)
    return WorldModel.from_grid(grid)


def test_01_yaw_dp_matches_exhaustive_search():
    """Plan cost equals brute-force enumeration on random cost maps.

    Integer-valued maps keep both accumulation orders exact in float64, so
    equality is literal, not approximate.
    """
    rng = np.random.default_rng(42)
    D, T = 8, 5
    t0 = time.perf_counter()
    exact = 0
    for _ in range(100):
        C = rng.integers(0, 1000, size=(T, D)).astype(float)
        theta0 = rng.uniform(-np.pi, np.pi)
        space = backward_pass(YawStateSpace(timestamps=np.arange(T) * 2.0,
                                            cost_map=C))
        fplan = forward_pass(space, theta0=theta0)
        got = plan_cost(space, fplan.cells)
        c0 = space.yaw_cell(theta0)
        best = math.inf
        for offs in itertools.product((-1, 0, 1), repeat=T - 1):
            cell, acc = c0, 0.0
            for t, off in enumerate(offs, start=1):
                cell = (cell + off) % D
                acc += C[t, cell]
            best = min(best, acc)
        exact += got == best
    elapsed = time.perf_counter() - t0
    ok = exact == 100 and elapsed < 1.0
    assert _report("01 yaw dp optimality", ok,
                   f"{exact}/100 maps exact vs 3^4 enumeration, {elapsed:.2f} s < 1 s")


def test_02_planning_cycle_speed():
    """One full central cycle (spherical resample, cost map, DP both passes)
    on a 64^3 world stays under 10 ms median."""
    world = blocks_world_64()
    T = 5
    ts = np.arange(T) * 2.0
    path = ActorPath(timestamps=ts,
                     positions=np.column_stack([np.linspace(-10.0, 2.0, T),
                                                np.zeros(T), np.full(T, 1.0)]))
    spec = FormationSpec()

    def cycle():
        grid = build_spherical_grid(world, path, spec)
        space = backward_pass(build_cost_map(grid, world, path, spec))
        return forward_pass(space, theta0=np.pi / 2)

    cycle()  # warm caches before timing
    times = []
    for _ in range(100):
        t0 = time.perf_counter()
        cycle()
        times.append(time.perf_counter() - t0)
    med_ms = float(np.median(times)) * 1e3
    ok = med_ms < 10.0
    assert _report("02 planning cycle speed", ok,
                   f"median {med_ms:.2f} ms < 10 ms over 100 runs, D=8 T=5 on 64^3 world")


def test_03_noiseless_triangulation_exact():
    rng = np.random.default_rng(42)
    pts = rng.uniform(-5.0, 5.0, size=(1000, 3)) + np.array([0.0, 0.0, 1.0])
    intr = CameraIntrinsics()
    worst = {}
    for m in (2, 5):
        mats, pix = [], []
        for i in range(m):
            a = 2.0 * np.pi * i / m + 0.3
            c = np.array([20.0 * np.cos(a), 20.0 * np.sin(a), 4.0])
            heading, tilt = aim_at(c, np.array([0.0, 0.0, 1.0]))
            pose = Pose(position=c, heading=heading, camera_tilt=tilt)
            uv, depth = project(pose, intr, pts)
            assert (depth > 0).all()
            mats.append(projection_matrix(pose, intr))
            pix.append(uv)
        rec, valid = triangulate_batch(np.array(mats), np.stack(pix, axis=1))
        assert valid.all()
        worst[m] = float(np.linalg.norm(rec - pts, axis=1).max())
    ok = worst[2] < 1e-6 and worst[5] < 1e-6
    assert _report("03 noiseless triangulation", ok,
                   f"1000 points, max err 2-view {worst[2]:.1e} / 5-view {worst[5]:.1e} < 1e-6 m")


def test_04_cost_gradients_match_finite_differences():
    """Analytic gradients of all five refinement terms, checked by central
    differences (h=1e-4) at 20 seeded free-space waypoints ringing an
    obstacle column (inside the SDF hinge's active band)."""
    vals = np.zeros((40, 40, 20))
    vals[18:22, 28:32, :12] = 1.0
    world = WorldModel.from_grid(OccupancyGrid(
        origin=np.array([-20.0, -20.0, 0.0]), voxel_size=1.0, values=vals))
    rng = np.random.default_rng(7)
    ang = rng.uniform(0.0, 2.0 * np.pi, 20)
    rad = rng.uniform(2.6, 3.4, 20)
    points = np.column_stack([rad * np.cos(ang), 10.0 + rad * np.sin(ang),
                              rng.uniform(3.0, 9.0, 20)])
    actor_points = np.array([0.0, 0.0, 1.0]) + rng.normal(0.0, 0.2, (20, 3))
    target_points = points + rng.normal(0.0, 0.4, (20, 3))
    peer_points = np.stack([points + np.array([0.0, 2.5, 0.0]),
                            points - np.array([2.4, 0.0, 0.0])])

    terms = {
        "smoothness": lambda p: smoothness_cost_grad(p, 0.5),
        "occlusion": lambda p: occlusion_cost_grad(p, actor_points, world),
        "obstacle": lambda p: obstacle_cost_grad(p, world),
        "tracking": lambda p: tracking_cost_grad(p, target_points),
        "separation": lambda p: separation_cost_grad(p, peer_points),
    }
    h = 1e-4
    rels = {}
    for name, fn in terms.items():
        _, g = fn(points)
        fd = np.zeros_like(points)
        for i in range(points.shape[0]):
            for a in range(3):
                pp = points.copy()
                pp[i, a] += h
                pm = points.copy()
                pm[i, a] -= h
                fd[i, a] = (fn(pp)[0] - fn(pm)[0]) / (2.0 * h)
        rels[name] = float(np.linalg.norm(fd - g) / np.linalg.norm(fd))
    ok = all(r <= 1e-3 for r in rels.values())
    worst = max(rels, key=rels.get)
    assert _report("04 gradient checks", ok,
                   f"20 waypoints, h=1e-4, worst term {worst} rel {rels[worst]:.1e} <= 1e-3")


def test_05_tilt_sweep_trend(tilt_sweep):
    rows, elapsed = tilt_sweep
    agg = {(r["tilt_deg"], r["noise_sigma_m"]): r["mean_mpjpe_m"]
           for r in aggregate(rows, "tilt_deg")}
    mono = all(agg[(30.0, s)] <= agg[(45.0, s)] <= agg[(60.0, s)]
               for s in SIGMAS)
    spread = max(max(agg[(t, s)] for t in (0.0, 15.0, 30.0))
                 / min(agg[(t, s)] for t in (0.0, 15.0, 30.0))
                 for s in SIGMAS)
    ok = mono and spread <= 1.25 and elapsed < 600.0
    assert _report("05 error vs tilt trend", ok,
                   f"5 seeds x 75 s: MPJPE non-decreasing on 30/45/60 deg at all "
                   f"{len(SIGMAS)} noise levels: {mono}; 0/15/30 deg max/min "
                   f"{spread:.3f} <= 1.25; {elapsed:.0f} s < 600 s")


def test_06_robot_count_trend(robot_sweep):
    agg = {(r["n"], r["noise_sigma_m"]): r["mean_mpjpe_m"]
           for r in aggregate(robot_sweep, "n")}
    ratio = agg[(5, 0.5)] / agg[(2, 0.5)]
    zero = [agg[(n, 0.0)] for n in (2, 3, 4, 5)]
    spread = max(zero) - min(zero)
    ok = 0.6 <= ratio <= 0.8 and spread <= 0.05
    assert _report("06 error vs robot count", ok,
                   f"sigma=0.5 m: err(n=5)/err(n=2) = {ratio:.3f} in [0.6, 0.8]; "
                   f"zero-noise spread {spread:.3f} m <= 0.05 m")


def test_07_adaptive_beats_fixed_yaw(mound_rows):
    by = {r["variant"]: r for r in mound_rows}
    ad, fx = by["adaptive"], by["fixed"]
    # "keeps tilt within 10 deg of 15" binds the whole run, i.e. the peak;
    # the frozen baseline is forced over the mound, so its peak blows past 45
    ok = (abs(ad["max_tilt_deg"] - 15.0) <= 10.0
          and fx["max_tilt_deg"] > 45.0
          and ad["total_E_recon"] < fx["total_E_recon"])
    assert _report("07 adaptive vs fixed yaw", ok,
                   f"mound: adaptive tilt peak {ad['max_tilt_deg']:.1f} deg within 10 of 15; "
                   f"fixed peak {fx['max_tilt_deg']:.1f} deg > 45; E_recon "
                   f"{ad['total_E_recon']:.1f} < {fx['total_E_recon']:.1f}")


def test_08_safety_margin_enforced(tilt_sweep, robot_sweep, mound_rows,
                                   mound_trace, tmp_path, capsys):
    # every sweep run above completed, i.e. none tripped the in-loop abort
    n_runs = len(tilt_sweep[0]) + len(robot_sweep) + len(mound_rows) + 1
    min_sdf = float(mound_trace.min_sdf.min())

    doc = {"duration_s": 2.0,
           "actor": {"waypoints": [[0.0, 0.0, 0.0]], "speed_mps": 0.0,
                     "sway_amplitude_m": 0.0},
           "world": {"preset": "custom", "origin": [-20.0, -20.0, -5.0],
                     "dims": [40, 40, 20],
                     "boxes": [{"lo": [-3.0, 7.0, 1.0], "hi": [3.0, 13.0, 7.0]}]}}
    cfg = tmp_path / "violate.yaml"
    cfg.write_text(yaml.safe_dump(doc))
    code = main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")])
    capsys.readouterr()
    report_ok = (tmp_path / "o" / "safety_report.json").exists()

    ok = min_sdf >= 1.0 and code == 3 and report_ok
    assert _report("08 safety invariant", ok,
                   f"{n_runs} closed-loop runs with no waypoint under 1 m "
                   f"(mound min SDF {min_sdf:.2f} m); seeded violation exits 3 "
                   f"with report")


def test_09_simulate_deterministic_outputs(tmp_path):
    doc = {"duration_s": 2.0, "seed": 11,
           "actor": {"waypoints": [[0.0, 0.0, 0.0], [30.0, 0.0, 0.0]]}}
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(yaml.safe_dump(doc))
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
        outs.append(out)
    frames = [(o / "frames.csv").read_bytes() for o in outs]
    extras = all((outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
                 for f in ("detections.jsonl", "est_skeletons.jsonl",
                           "summary.json"))
    ok = frames[0] == frames[1] and extras
    assert _report("09 determinism", ok,
                   f"fixed seed: frames.csv byte-identical across reruns "
                   f"({len(frames[0])} bytes), JSONL artifacts too")


def test_10_oracle_equivalences():
    rng = np.random.default_rng(3)

    # exact signed distances vs an independent nearest-neighbor search
    occ_vals = (rng.random((32, 32, 32)) < 0.02).astype(float)
    grid = OccupancyGrid(origin=np.array([-8.0, -8.0, 0.0]), voxel_size=0.5,
                         values=occ_vals)
    sdf = sdf_from_grid(grid)
    occ = occ_vals >= 0.5
    idx = np.indices((32, 32, 32)).reshape(3, -1).T.astype(float)
    d_occ, _ = cKDTree(idx[occ.ravel()]).query(idx)
    d_free, _ = cKDTree(idx[~occ.ravel()]).query(idx)
    ref = np.where(occ.ravel(), -d_free, d_occ).reshape(32, 32, 32) * 0.5
    sdf_exact = np.array_equal(sdf.values, ref)

    # cost sums vs explicit python loops
    n, T = 3, 12
    ts = np.arange(T) * 0.5
    A = TrajectorySet(timestamps=ts, positions=rng.normal(0.0, 5.0, (n, T, 3)))
    B = TrajectorySet(timestamps=ts, positions=rng.normal(0.0, 5.0, (n, T, 3)))
    naive_form = sum(
        math.sqrt(float(((A.positions[i, t] - B.positions[i, t]) ** 2).sum()))
        for i in range(n) for t in range(T))
    form_diff = abs(cost_formation(A, B) - naive_form)
    naive_smooth = sum(
        float(((A.positions[i, t + 1] - 2 * A.positions[i, t]
                + A.positions[i, t - 1]) ** 2).sum()) / 0.5 ** 4
        for i in range(n) for t in range(1, T - 1))
    smooth_diff = abs(cost_smoothness(A) - naive_smooth)

    carried = np.zeros((50, 17), dtype=bool)
    est = SkeletonSequence(timestamps=np.arange(50) * 0.1,
                           joints=rng.normal(0.0, 1.0, (50, 17, 3)),
                           carried=carried)
    gt = SkeletonSequence(timestamps=np.arange(50) * 0.1,
                          joints=est.joints + rng.normal(0.0, 0.05, (50, 17, 3)),
                          carried=carried)
    err = recon_error(est, gt)
    naive_total = 0.0
    naive_mpjpe = np.zeros(50)
    for t in range(50):
        for p in range(17):
            d2 = float(((est.joints[t, p] - gt.joints[t, p]) ** 2).sum())
            naive_total += d2
            naive_mpjpe[t] += math.sqrt(d2)
    naive_mpjpe /= 17
    recon_diff = max(abs(err.total - naive_total),
                     float(np.abs(err.per_frame_mpjpe - naive_mpjpe).max()))

    # slab line-of-sight integral vs its closed form (half the segment is
    # inside occupancy 1, so each of the 3 steps contributes exactly 0.5)
    svals = np.zeros((60, 20, 20))
    svals[20:30, :, :] = 1.0
    sworld = WorldModel.from_grid(OccupancyGrid(
        origin=np.array([0.0, -5.0, -5.0]), voxel_size=0.5, values=svals))
    ts3 = np.array([0.0, 1.0, 2.0])
    apath = ActorPath(timestamps=ts3, positions=np.tile([7.5, 0.0, 0.0], (3, 1)))
    straj = TrajectorySet(timestamps=ts3,
                          positions=np.tile([17.5, 0.0, 0.0], (1, 3, 1)))
    slab_errs = {q: abs(cost_occlusion(sworld, straj, apath, n_quad=q) - 1.5)
                 for q in (32, 64)}
    slab_ok = all(e <= 3.0 / q for q, e in slab_errs.items())

    ok = (sdf_exact and form_diff <= 1e-12 and smooth_diff <= 1e-12
          and recon_diff <= 1e-12 and slab_ok)
    assert _report("10 oracle equivalences", ok,
                   f"32^3 SDF exact: {sdf_exact}; formation/smoothness/recon "
                   f"diffs {form_diff:.1e}/{smooth_diff:.1e}/{recon_diff:.1e} "
                   f"<= 1e-12; slab integral err {slab_errs[32]:.1e} <= 1/N_quad")
