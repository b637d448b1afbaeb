"""Dominant transition paths and rates for the delayed Maier-Stein model."""
__version__ = "0.1.0"

from ._backend import NAME as BACKEND
from .analysis import (DiagramCell, LifetimeRecord, ScanRow, SlopeRow, lifetime, optimal_force,
                       scan_2d, scan_tau, slope_analysis)
from .errors import (DelayDtpError, DivergenceError, InterfaceStarvation, MeshError,
                     ParameterError, RootSearchError, SingularDelayError)
from .ffs import (FfsConfig, RateResult, action_rate_estimate, direct_rate, ffs_rate,
                  prefactor)
from .mam import DtpResult, RelaxConfig, find_tau_c, relax, solve_branches
from .model import (A, B, SADDLE, ModelParams, State, TransverseStability, drift,
                    fixed_points, m2, on_axis_unstable, quasi_potential, reduced_drift,
                    rightmost_char_root, transverse_stability)
from .path import (ActionReport, Path, action, action_gradient, default_mesh, make_path,
                   max_transverse_distance, read_path_csv, write_path_csv)
from .sdde import HistoryBuffer, delayed_ou_variance, em_step, stochastic_mesh
