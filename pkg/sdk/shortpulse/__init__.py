"""
shortpulse SDK

Numerical justification of the short-pulse approximation for the quasilinear
Klein-Gordon equation.

Main Components:
- shortpulse.spectral_core: Periodic Fourier grid, fields and spectral calculus
- shortpulse.short_pulse: Short-pulse evolution, closures and Duhamel solver
- shortpulse.klein_gordon: Klein-Gordon solver, energies and moving-frame scaling
- shortpulse.justification: Error energy, balance identity and epsilon sweeps
- shortpulse.config / runner / reports / cli: Scenario files, execution and reports

Example:
    >>> from shortpulse import make_grid, admissible_initial_data, small_norm_check
    >>> grid = make_grid(64 * 3.141592653589793, 1024)
    >>> A0 = admissible_initial_data("gaussian_derivative", 0.1, 1.0, grid)
    >>> small_norm_check(A0).ok
    True
"""

__version__ = '0.1.0'
__author__ = 'Raja Muhammad Awais'
__license__ = 'MIT'

from .exceptions import (
    Bound7Violated,
    BoundaryLeak,
    ConfigInvalid,
    FitFailed,
    GridMismatch,
    InvalidGrid,
    MeanNotZero,
    QuadratureUnderResolved,
    ReportWriteError,
    ShortPulseError,
    StepUnstable,
    SyncError,
    ValidityRegionExceeded,
)
from .spectral_core import (
    Field,
    FourierGrid,
    antiderivative,
    differentiate,
    homogeneous_negative_norm,
    make_grid,
    semigroup_apply,
    sobolev_norm,
    translate,
)
from .short_pulse import (
    ShortPulseState,
    admissible_initial_data,
    delta_of_trajectory,
    duhamel_solve,
    small_norm_check,
    sp_evolve,
    sp_rhs,
    sp_time_derivatives,
)
from .klein_gordon import (
    KGState,
    ScalingParams,
    kg_energies,
    kg_evolve,
    scale_down,
    scale_up,
)
from .justification import (
    StudyConfig,
    build_paired_initial_data,
    convergence_study,
    error_energy,
    error_state,
)
from .config import ExperimentConfig, parse_config
from .runner import run

__all__ = [
    'ShortPulseError',
    'InvalidGrid',
    'MeanNotZero',
    'StepUnstable',
    'QuadratureUnderResolved',
    'BoundaryLeak',
    'ValidityRegionExceeded',
    'GridMismatch',
    'SyncError',
    'Bound7Violated',
    'FitFailed',
    'ConfigInvalid',
    'ReportWriteError',
    'FourierGrid',
    'Field',
    'make_grid',
    'differentiate',
    'antiderivative',
    'sobolev_norm',
    'homogeneous_negative_norm',
    'semigroup_apply',
    'translate',
    'ShortPulseState',
    'sp_rhs',
    'sp_time_derivatives',
    'sp_evolve',
    'small_norm_check',
    'delta_of_trajectory',
    'duhamel_solve',
    'admissible_initial_data',
    'KGState',
    'ScalingParams',
    'kg_evolve',
    'kg_energies',
    'scale_down',
    'scale_up',
    'StudyConfig',
    'build_paired_initial_data',
    'error_state',
    'error_energy',
    'convergence_study',
    'ExperimentConfig',
    'parse_config',
    'run',
]
