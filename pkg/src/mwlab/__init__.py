"""Max-Weight stability toolkit: fluid and jumping-fluid models, a robust
delay-stability checker, heavy-tailed simulation and Lyapunov verification."""
from .network import (CapacityVerdict, Membership, Network, capacity_membership, load_network, mw_pick,
                      mw_schedules, zero_closure)
from .minnorm import min_norm_by_faces, min_norm_point
from .fluid import DriftQuery, PiecewiseLinearTrajectory, integrate_fluid, min_norm_drift, next_event
from .jf import (JumpBudget, JumpSchedule, PointCloud, RateProfile, RjfStatus, RjfVerdict, SearchConfig, Witness,
                 attraction_test, budget_ok, check_rjf, enumerate_budget, integrate_jf, sample_reachable)
from .arrivals import (ArrivalPlan, ArrivalSpec, EpisodePlan, build_episode_schedule, concatenate_episodes,
                       sample_episode_density, sample_pareto_mixture, sigma)
from .stability import (SimTrace, StabilityReport, detect_jumps, forced_jump_run, monte_carlo, run_witness,
                        sensitivity_check, simulate, step)
from .lyapunov import LyapunovCandidate, VerificationReport, build_distance_lyapunov, verify_special

__version__ = "0.1.0"
