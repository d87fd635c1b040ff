"""Stability certificates for linear systems with one constant delay.

``x'(t) = A x(t) + Ad x(t - h)`` is declared exponentially stable when a
finite matrix built from Legendre moments of the delay Lyapunov matrix is
positive definite at an order that is computed a priori.
"""

__version__ = "0.1.0"

from ._config import DEFAULT_CONFIG, Config, load_config
from .certificate import (
    CertificateMatrix,
    StabilityVerdict,
    VerdictKind,
    assemble_P,
    certificate_matrix,
    find_flip_interval,
    hierarchical_sweep,
    theorem_test,
    unstable_regions,
)
from .estimator import LegendreStabilityCertifier
from .exceptions import (
    InvalidInput,
    LyapunovConditionViolated,
    NumericalFailure,
    OrderTooLarge,
    TDSError,
)
from .legendre import build_legendre_table
from .oracles import scalar_critical_delay, simulate_dde
from .system import BoundConstants, TimeDelaySystem, build_MN, compute_n_star

__all__ = [
    "Config",
    "DEFAULT_CONFIG",
    "load_config",
    "TimeDelaySystem",
    "BoundConstants",
    "build_MN",
    "compute_n_star",
    "build_legendre_table",
    "CertificateMatrix",
    "StabilityVerdict",
    "VerdictKind",
    "assemble_P",
    "certificate_matrix",
    "theorem_test",
    "hierarchical_sweep",
    "unstable_regions",
    "find_flip_interval",
    "scalar_critical_delay",
    "simulate_dde",
    "LegendreStabilityCertifier",
    "TDSError",
    "InvalidInput",
    "LyapunovConditionViolated",
    "OrderTooLarge",
    "NumericalFailure",
]
