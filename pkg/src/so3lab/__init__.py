"""Simulation and verification laboratory for velocity-free rigid-body
attitude tracking on SO(3)."""

from .controller import (AngleFunction, ControllerGains, Euler321Trajectory,
                         SetpointTrajectory, TrackingErrors, chi_bound_constant,
                         chi_vector, compute_tracking_errors, evaluate_desired,
                         max_desired_rate, pd_control, velocity_free_control)
from .errors import (ConfigError, DegenerateMatrix, InvalidPsiBound,
                     MissingEstimate, NotRotation, NotSkewSymmetric,
                     NumericalBlowup, SingularInertia, So3LabError,
                     UncertifiableScenario)
from .lyapunov import (BoundMatrices, LyapunovSample, SeparationCertificate,
                       b_constants, bound_matrices, build_certificate,
                       check_inertia_ratio, check_roa, choose_constants,
                       error_vector_bound, lyapunov_trace, psi_bar_ceiling)
from .observer import (EquilibriumClass, EstimateErrors, ObserverGains,
                       ObserverState, chetaev_function, classify_equilibrium,
                       compute_estimate_errors, observer_derivative,
                       observer_lyapunov)
from .rigid_body import (InertiaSpec, RigidBodyState, body_frame_derivative,
                         inertial_frame_derivative)
from .sim import (BasinReport, Scenario, SimState, TrajectoryLog, monte_carlo,
                  run, stabilization_v_a, step, tracking_v_b,
                  validate_derivatives)
from .so3 import (E_c_matrix, E_o_matrix, QuadraticBounds, WeightMatrix,
                  error_function, estimation_error_vector, euler321_rotation,
                  exp_so3, hat, is_rotation, project_to_rotation,
                  quadratic_bounds, random_rotation, tracking_error_vector, vee)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
