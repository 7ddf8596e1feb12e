"""Multi-drone aerial motion capture: planning, simulation, reconstruction."""

from .core import (OccupancyGrid, Pose, SignedDistanceField, SphericalCoord,
                   WorldModel, load_occgrid, save_occgrid, sdf_from_grid,
                   spherical_to_world, world_to_spherical, wrap_angle)
from .costs import (CostComponents, FormationSpec, SphericalCostGrid,
                    TrajectorySet, build_spherical_grid, cost_formation,
                    cost_obstacle, cost_occlusion, cost_smoothness,
                    formation_targets, total_cost)
from .forecast import (ActorPath, ActorState, forecast_path, initial_state,
                       kf_predict, kf_update)
from .formation_planner import (FormationPlan, PlannerParams, YawStateSpace,
                                backward_pass, build_cost_map, forward_pass,
                                plan, plan_cost)
from .local_planner import (FineTrajectory, LocalPlannerParams, PeerForecast,
                            RefineResult, refine, separation_cost, upsample_plan)
from .capture import (CameraIntrinsics, Detection2D, NoiseModel, ReconError,
                      Skeleton, SkeletonSequence, perturb_camera_pose, project,
                      recon_error, reconstruct_sequence, simulate_detections,
                      triangulate)
from .simulator import (ActorMotion, RunTrace, SafetyViolation, Scenario,
                        experiment_robot_sweep, experiment_tilt_sweep,
                        run_fixed_vs_adaptive, run_scenario, scenario_free,
                        scenario_mound)

__version__ = "0.1.0"
