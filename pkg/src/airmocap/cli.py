"""Command-line entry point.

Subcommands: plan (one planning cycle), simulate (full run), experiment
(sweeps), reconstruct (offline DLT from a capture file). Exit codes: 0 ok,
2 config error, 3 safety violation, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import capture as cap
from . import simulator as sim
from .config import ConfigError, build_scenario, default_config, load_config
from .forecast import forecast_path, initial_state
from .formation_planner import plan
from .local_planner import PeerForecast, refine, upsample_plan
from .simulator import SafetyViolation


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, default=None, help="scenario YAML (defaults used if omitted)")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--jobs", type=int, default=1, help="parallel sweep jobs")
    p.add_argument("--trace", action="store_true", help="emit per-step planning traces")


def _load(args) -> dict:
    cfg = load_config(args.config) if args.config else default_config()
    if args.seed is not None:
        cfg["seed"] = args.seed
    return cfg


def _writer(path: Path):
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_plan(args) -> int:
    cfg = _load(args)
    scenario = build_scenario(cfg)
    out = _writer(args.out)
    s = scenario
    pelvis0 = s.motion.pelvis_at(0.0)
    v0 = (s.motion.pelvis_at(0.1) - pelvis0) / 0.1
    state = initial_state(pelvis0, v0, position_var=0.25, velocity_var=1.0)
    fplan = plan(s.world, state, s.formation, s.theta0, s.horizon, s.plan_dt,
                 t0=0.0, params=s.planner)

    rows = [{"t": float(t), "cell": int(c), "theta_rad": float(th),
             "theta_deg": float(np.degrees(th))}
            for t, c, th in zip(fplan.timestamps, fplan.cells, fplan.theta)]
    sim.write_rows_csv(out / "yaw_sequence.csv", rows,
                       ["t", "cell", "theta_rad", "theta_deg"])

    coarse_rows = []
    for i in range(s.formation.n):
        for t_idx, t in enumerate(fplan.timestamps):
            x, y, z = fplan.targets.positions[i, t_idx]
            coarse_rows.append({"drone": i, "t": float(t), "x": float(x),
                                "y": float(y), "z": float(z)})
    sim.write_rows_csv(out / "coarse_targets.csv", coarse_rows,
                       ["drone", "t", "x", "y", "z"])

    fine_actor = forecast_path(state, s.horizon, s.dt_fine, t0=0.0)
    fine_targets = [upsample_plan(fplan, i, s.dt_fine) for i in range(s.formation.n)]
    refined_rows = []
    for i in range(s.formation.n):
        peers = PeerForecast(
            timestamps=fine_targets[i].timestamps,
            points=np.array([fine_targets[j].points
                             for j in range(s.formation.n) if j != i]))
        result = refine(fine_targets[i], s.world, fine_actor, fine_targets[i],
                        peers, s.local)
        for t, (x, y, z) in zip(result.trajectory.timestamps, result.trajectory.points):
            refined_rows.append({"drone": i, "t": float(t), "x": float(x),
                                 "y": float(y), "z": float(z)})
    sim.write_rows_csv(out / "refined_waypoints.csv", refined_rows,
                       ["drone", "t", "x", "y", "z"])

    if args.trace:
        space = fplan.space
        with open(out / "plan_trace.jsonl", "w", encoding="ascii") as fh:
            for t_idx in range(space.n_steps):
                fh.write(json.dumps({
                    "t": float(space.timestamps[t_idx]),
                    "cell": int(fplan.cells[t_idx]),
                    "C": [float(x) for x in space.cost_map[t_idx]],
                    "V": [float(x) for x in space.cost_to_go[t_idx]],
                }) + "\n")

    outputs = ["yaw_sequence.csv", "coarse_targets.csv", "refined_waypoints.csv"]
    if args.trace:
        outputs.append("plan_trace.jsonl")
    sim.write_manifest(out / "manifest.json", cfg, [cfg["seed"]], outputs)
    print(f"planned {len(fplan)} steps; yaw cells {[int(c) for c in fplan.cells]}")
    return 0


def cmd_simulate(args) -> int:
    cfg = _load(args)
    scenario = build_scenario(cfg)
    out = _writer(args.out)
    trace = sim.run_scenario(scenario)

    frame_rows = [
        {"frame": k, "t": float(trace.timestamps[k]),
         "mpjpe_m": float(trace.per_frame_mpjpe[k]),
         "yaw_rad": float(trace.formation_yaw[k]),
         "min_sdf_m": float(trace.min_sdf[k]),
         "mean_tilt_deg": float(np.degrees(trace.realized_tilt[k].mean()))}
        for k in range(len(trace.timestamps))
    ]
    sim.write_rows_csv(out / "frames.csv", frame_rows,
                       ["frame", "t", "mpjpe_m", "yaw_rad", "min_sdf_m", "mean_tilt_deg"])

    cap.save_capture_jsonl(out / "detections.jsonl", trace.timestamps,
                           trace.detections, trace.recorded_poses,
                           scenario.intrinsics)
    cap.save_skeletons_jsonl(out / "gt_skeletons.jsonl", trace.gt)
    cap.save_skeletons_jsonl(out / "est_skeletons.jsonl", trace.est)

    summary = {
        "total_E_recon": trace.total_error,
        "mean_mpjpe_m": trace.mean_mpjpe,
        "frames": len(trace.timestamps),
        "refine_degraded_count": trace.refine_degraded_count,
        "min_sdf_m": float(trace.min_sdf.min()),
    }
    with open(out / "summary.json", "w", encoding="ascii") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    sim.write_manifest(out / "manifest.json", cfg, [cfg["seed"]],
                       ["frames.csv", "detections.jsonl", "gt_skeletons.jsonl",
                        "est_skeletons.jsonl", "summary.json"])
    print(f"total_E_recon={trace.total_error:.6f} mean_mpjpe_m={trace.mean_mpjpe:.6f}")
    return 0


def cmd_experiment(args) -> int:
    cfg = _load(args)
    scenario = build_scenario(cfg)
    out = _writer(args.out)
    exp = cfg["experiment"]
    seeds = exp["seeds"]
    if args.sweep == "tilt":
        rows = sim.experiment_tilt_sweep(scenario, tuple(exp["tilts_deg"]),
                                         tuple(exp["noise_sigmas_m"]),
                                         tuple(seeds), jobs=args.jobs)
        sim.write_rows_csv(out / "tilt_sweep.csv", rows,
                           ["tilt_deg", "noise_sigma_m", "seed",
                            "total_E_recon", "mean_mpjpe_m"])
        table = sim.aggregate(rows, "tilt_deg")
        outputs = ["tilt_sweep.csv"]
        key = "tilt_deg"
    elif args.sweep == "robots":
        rows = sim.experiment_robot_sweep(scenario, tuple(exp["robot_counts"]),
                                          tuple(exp["noise_sigmas_m"]),
                                          tuple(seeds), jobs=args.jobs)
        sim.write_rows_csv(out / "robot_sweep.csv", rows,
                           ["n", "noise_sigma_m", "seed",
                            "total_E_recon", "mean_mpjpe_m"])
        table = sim.aggregate(rows, "n")
        outputs = ["robot_sweep.csv"]
        key = "n"
    else:  # fixed-vs-adaptive
        rows = sim.run_fixed_vs_adaptive(scenario)
        sim.write_rows_csv(out / "fixed_vs_adaptive.csv", rows,
                           ["variant", "total_E_recon", "mean_mpjpe_m",
                            "mean_tilt_deg", "max_tilt_deg"])
        table = rows
        outputs = ["fixed_vs_adaptive.csv"]
        key = "variant"
    sim.write_manifest(out / "manifest.json", cfg, seeds, outputs)
    for row in table:
        print(" ".join(f"{k}={v}" for k, v in row.items()))
    return 0


def cmd_reconstruct(args) -> int:
    out = _writer(args.out)
    timestamps, detections, poses, intrinsics = cap.load_capture_jsonl(args.detections)
    est = cap.reconstruct_sequence(timestamps, detections, poses, intrinsics)
    cap.save_skeletons_jsonl(out / "est_skeletons.jsonl", est)
    carried = int(est.carried.sum())
    if carried:
        print(f"warning: {carried} joint-frames lacked 2 views and were carried forward")
    if args.gt is not None:
        gt = cap.load_skeletons_jsonl(args.gt)
        err = cap.recon_error(est, gt)
        summary = {"total_E_recon": err.total, "mean_mpjpe_m": err.mean_mpjpe}
        with open(out / "summary.json", "w", encoding="ascii") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"total_E_recon={err.total:.6f} mean_mpjpe_m={err.mean_mpjpe:.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="airmocap",
                                     description=__doc__.strip().splitlines()[0])
    subs = parser.add_subparsers(dest="command", required=True)

    p_plan = subs.add_parser("plan", help="run one central planning cycle")
    _add_common(p_plan)
    p_plan.set_defaults(func=cmd_plan)

    p_sim = subs.add_parser("simulate", help="run a full scenario")
    _add_common(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_exp = subs.add_parser("experiment", help="run an experiment sweep")
    _add_common(p_exp)
    p_exp.add_argument("--sweep", choices=("tilt", "robots", "fixed-vs-adaptive"),
                       required=True)
    p_exp.set_defaults(func=cmd_experiment)

    p_rec = subs.add_parser("reconstruct", help="offline reconstruction from JSONL")
    _add_common(p_rec)
    p_rec.add_argument("--detections", type=Path, required=True)
    p_rec.add_argument("--gt", type=Path, default=None)
    p_rec.set_defaults(func=cmd_reconstruct)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        # malformed inputs (bad capture files, inconsistent shapes)
        print(f"invalid input: {e}", file=sys.stderr)
        return 2
    except SafetyViolation as e:
        try:
            out = _writer(args.out)
            with open(out / "safety_report.json", "w", encoding="ascii") as fh:
                json.dump(e.report, fh, indent=2, sort_keys=True)
                fh.write("\n")
            print(f"safety violation: {e} (report: {out / 'safety_report.json'})",
                  file=sys.stderr)
        except OSError:
            print(f"safety violation: {e}", file=sys.stderr)
        return 3
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
