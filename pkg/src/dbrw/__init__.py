"""Simulation and numerical checks for geometrically discounted branching random walks."""

from .errors import (BoundViolated, BudgetExceeded, ConfigError, ConstructionError,
                     DepthTooShallowForLevel, InternalInconsistency)
from .laws import (Constant, CustomPmf, Deterministic, Gaussian, GeometricShifted, LogPareto,
                   ParetoPositive, PoissonShifted, SymmetricPareto, TwoPoint, Uniform,
                   increment_from_dict, moment_1overH, offspring_from_dict)
from .tree_sim import SimConfig, count_exceedances, dfs_supremum, run_replicas, track_W, walk
from .series import (Boundedness, classify_boundedness, c_constant, compute_P,
                     expected_exceedance, u_threshold)
from .chaining import build_partitions, chain_report, extract_raypoints
from .rde import iterate_to_fixpoint, compare_to_simulation, fie_residual
from .sssi import SkeletonConfig, boundedness_scan, build_skeleton, equivalence_test
from .growth import GrowthVerdict, classify_growth
from .experiments import PhaseCell, phase_scan

__version__ = "0.1.0"
