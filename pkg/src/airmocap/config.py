"""Scenario configuration: one YAML document, every field optional.

Unknown keys are rejected with their dotted path; values are merged over the
defaults below, validated, and echoed into output manifests so any run can
be reproduced from its artifacts alone. Angles are degrees in the file and
radians internally.
"""

from __future__ import annotations

import copy
import math
from pathlib import Path

import numpy as np
import yaml

from . import simulator as sim
from .capture import CameraIntrinsics, NoiseModel
from .core import OccupancyGrid, WorldModel, load_occgrid
from .costs import FormationSpec
from .formation_planner import PlannerParams
from .local_planner import LocalPlannerParams
from .simulator import ActorMotion, Scenario


class ConfigError(ValueError):
    """Invalid configuration; message carries the offending field path."""


DEFAULTS = {
    "schema_version": 1,
    "seed": 0,
    "duration_s": 75.0,
    "formation_mode": "adaptive",
    "rates": {
        "capture_hz": 10.0,
        "central_hz": 10.0,
        "local_hz": 5.0,
    },
    "planner": {
        "horizon_s": 10.0,
        "dt_s": 2.0,
        "d_theta": 8,
        "d_phi": 4,
        "d_rho": 8,
        "samples_per_cell": 8,
        "n_quad": 32,
        "neighbor_radius": 1,
    },
    "local": {
        "dt_fine_s": 0.5,
        "eta": 10.0,
        "max_iters": 50,
        "max_backtracks": 8,
        "rel_tol": 1e-4,
        "eps_clear_m": 2.0,
        "d_min_m": 3.0,
        "lam_occlusion": 5.0,
        "lam_obstacle": 10.0,
        "lam_tracking": 1.0,
        "lam_separation": 100.0,
    },
    "formation": {
        "n": 2,
        "rho_m": 10.0,
        "phi_deg": 15.0,
        "initial_yaw_deg": 90.0,
        "lam_occlusion": 5.0,
        "lam_obstacle": 10.0,
        "lam_formation": 1.0,
        "r_max_m": 15.0,
    },
    "noise": {
        "pixel_sigma_px": 2.0,
        "pose_position_sigma_m": 0.0,
        "pose_rotation_sigma_rad": 0.0,
        "miss_base_rate": 0.02,
        "miss_tilt_gain_per_rad": 0.08,
        "swap_rate": 0.05,
    },
    "camera": {
        "fx": 320.0,
        "fy": 320.0,
        "cx": 320.0,
        "cy": 240.0,
        "width": 640,
        "height": 480,
        "occlusion_threshold": 0.5,
    },
    "world": {
        "preset": "free",       # free | mound | custom
        "grid_file": None,
        "origin": [0.0, 0.0, 0.0],
        "dims": [2, 2, 2],
        "voxel_size_m": 1.0,
        "boxes": [],
        "cylinders": [],
    },
    "actor": {
        "waypoints": [[0.0, 0.0, 0.0], [120.0, 0.0, 0.0]],
        "speed_mps": 1.5,
        "sway_amplitude_m": 0.75,
        "sway_period_s": 8.0,
        "preset": "walk",
    },
    "safety": {
        "margin_m": 1.0,
        "execution_noise_m": 0.0,
    },
    "tracking": {
        "process_noise": 1.0,
        "obs_noise": 0.09,
    },
    "fixed_baseline": {
        "climb_rate_mps": 3.0,
        "lookahead_s": 8.0,
    },
    "experiment": {
        "tilts_deg": [0.0, 15.0, 30.0, 45.0, 60.0],
        "robot_counts": [2, 3, 4, 5],
        "noise_sigmas_m": [0.0, 0.1, 0.25, 0.5],
        "seeds": [0, 1, 2, 3, 4],
    },
}


def default_config() -> dict:
    return copy.deepcopy(DEFAULTS)


def _merge(user, defaults, path):
    if isinstance(defaults, dict):
        if not isinstance(user, dict):
            raise ConfigError(f"{path or '<root>'}: expected a mapping, got {type(user).__name__}")
        out = {}
        for key, value in user.items():
            if key not in defaults:
                raise ConfigError(f"unknown key: {path + '.' if path else ''}{key}")
            out[key] = _merge(value, defaults[key], f"{path + '.' if path else ''}{key}")
        for key, value in defaults.items():
            if key not in out:
                out[key] = copy.deepcopy(value)
        return out
    return _check_leaf(user, defaults, path)


def _check_leaf(value, template, path):
    if template is None:
        if value is not None and not isinstance(value, str):
            raise ConfigError(f"{path}: expected a path string or null")
        return value
    if isinstance(template, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected a boolean")
        return value
    if isinstance(template, int) and not isinstance(template, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer")
        return value
    if isinstance(template, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number")
        return float(value)
    if isinstance(template, str):
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string")
        return value
    if isinstance(template, list):
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list")
        return value
    raise ConfigError(f"{path}: unsupported value")


def validate_config(raw: dict) -> dict:
    """Merge a user document over the defaults, rejecting unknown keys."""
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("<root>: config must be a mapping")
    cfg = _merge(raw, DEFAULTS, "")
    if cfg["schema_version"] != 1:
        raise ConfigError(f"schema_version: unsupported version {cfg['schema_version']}")
    return cfg


def load_config(path) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        raw = yaml.safe_load(p.read_text())
    except yaml.YAMLError as e:
        raise ConfigError(f"config is not valid YAML: {e}") from e
    return validate_config(raw)


def build_world(cfg: dict) -> WorldModel:
    w = cfg["world"]
    preset = w["preset"]
    if preset == "free":
        return sim.free_world()
    if preset == "mound":
        return sim.mound_world()
    if preset != "custom":
        raise ConfigError(f"world.preset: unknown preset {preset!r}")
    if w["grid_file"] is not None:
        gpath = Path(w["grid_file"])
        if not gpath.exists():
            raise ConfigError(f"world.grid_file: no such file {gpath}")
        return WorldModel.from_grid(load_occgrid(gpath))
    dims = w["dims"]
    if len(dims) != 3 or any(not isinstance(d, int) or d < 1 for d in dims):
        raise ConfigError("world.dims: expected three positive integers")
    origin = np.array(w["origin"], dtype=float)
    voxel = float(w["voxel_size_m"])
    values = np.zeros(tuple(dims))
    for i, box in enumerate(w["boxes"]):
        try:
            sim.add_box(values, origin, voxel, box["lo"], box["hi"],
                        float(box.get("occupancy", 1.0)))
        except (KeyError, TypeError) as e:
            raise ConfigError(f"world.boxes[{i}]: needs lo/hi corners ({e})") from e
    for i, cyl in enumerate(w["cylinders"]):
        try:
            sim.add_cylinder(values, origin, voxel, cyl["center_xy"],
                             float(cyl["radius_m"]), float(cyl["z0_m"]),
                             float(cyl["z1_m"]), float(cyl.get("occupancy", 1.0)))
        except (KeyError, TypeError) as e:
            raise ConfigError(f"world.cylinders[{i}]: needs center_xy/radius_m/z0_m/z1_m ({e})") from e
    grid = OccupancyGrid(origin=origin, voxel_size=voxel, values=values)
    return WorldModel.from_grid(grid)


def build_scenario(cfg: dict) -> Scenario:
    """Turn a validated config document into a Scenario."""
    try:
        waypoints = np.array(cfg["actor"]["waypoints"], dtype=float)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"actor.waypoints: {e}") from e
    if waypoints.ndim != 2 or waypoints.shape[1] != 3:
        raise ConfigError("actor.waypoints: expected a list of [x, y, z] points")
    try:
        motion = ActorMotion(
            waypoints=waypoints,
            speed=cfg["actor"]["speed_mps"],
            sway_amplitude=cfg["actor"]["sway_amplitude_m"],
            sway_period=cfg["actor"]["sway_period_s"],
            preset=cfg["actor"]["preset"],
            seed=cfg["seed"],
        )
        formation = FormationSpec(
            n=cfg["formation"]["n"],
            rho_form=cfg["formation"]["rho_m"],
            phi_form=math.radians(cfg["formation"]["phi_deg"]),
            lam_occlusion=cfg["formation"]["lam_occlusion"],
            lam_obstacle=cfg["formation"]["lam_obstacle"],
            lam_formation=cfg["formation"]["lam_formation"],
            r_max=cfg["formation"]["r_max_m"],
        )
        noise = NoiseModel(
            pixel_sigma=cfg["noise"]["pixel_sigma_px"],
            pose_position_sigma=cfg["noise"]["pose_position_sigma_m"],
            pose_rotation_sigma=cfg["noise"]["pose_rotation_sigma_rad"],
            miss_base_rate=cfg["noise"]["miss_base_rate"],
            miss_tilt_gain=cfg["noise"]["miss_tilt_gain_per_rad"],
            swap_rate=cfg["noise"]["swap_rate"],
            rng_seed=cfg["seed"],
        )
        intr = CameraIntrinsics(
            fx=cfg["camera"]["fx"], fy=cfg["camera"]["fy"],
            cx=cfg["camera"]["cx"], cy=cfg["camera"]["cy"],
            width=cfg["camera"]["width"], height=cfg["camera"]["height"],
        )
        planner = PlannerParams(
            d_theta=cfg["planner"]["d_theta"],
            d_phi=cfg["planner"]["d_phi"],
            d_rho=cfg["planner"]["d_rho"],
            samples_per_cell=cfg["planner"]["samples_per_cell"],
            n_quad=cfg["planner"]["n_quad"],
            neighbor_radius=cfg["planner"]["neighbor_radius"],
        )
        local = LocalPlannerParams(
            eta=cfg["local"]["eta"],
            max_iters=cfg["local"]["max_iters"],
            max_backtracks=cfg["local"]["max_backtracks"],
            rel_tol=cfg["local"]["rel_tol"],
            eps_clear=cfg["local"]["eps_clear_m"],
            d_min=cfg["local"]["d_min_m"],
            lam_occlusion=cfg["local"]["lam_occlusion"],
            lam_obstacle=cfg["local"]["lam_obstacle"],
            lam_tracking=cfg["local"]["lam_tracking"],
            lam_separation=cfg["local"]["lam_separation"],
            n_quad=cfg["planner"]["n_quad"],
        )
        return Scenario(
            world=build_world(cfg),
            motion=motion,
            formation=formation,
            noise=noise,
            intrinsics=intr,
            planner=planner,
            local=local,
            duration=cfg["duration_s"],
            capture_hz=cfg["rates"]["capture_hz"],
            central_hz=cfg["rates"]["central_hz"],
            local_hz=cfg["rates"]["local_hz"],
            horizon=cfg["planner"]["horizon_s"],
            plan_dt=cfg["planner"]["dt_s"],
            dt_fine=cfg["local"]["dt_fine_s"],
            theta0=math.radians(cfg["formation"]["initial_yaw_deg"]),
            seed=cfg["seed"],
            safety_margin=cfg["safety"]["margin_m"],
            execution_noise=cfg["safety"]["execution_noise_m"],
            kf_process_noise=cfg["tracking"]["process_noise"],
            kf_obs_noise=cfg["tracking"]["obs_noise"],
            occlusion_threshold=cfg["camera"]["occlusion_threshold"],
            formation_mode=cfg["formation_mode"],
            fixed_climb_rate=cfg["fixed_baseline"]["climb_rate_mps"],
            fixed_lookahead=cfg["fixed_baseline"]["lookahead_s"],
        )
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(str(e)) from e
