"""Constant-step subgradient dynamics and instability certificates.

Simulates the constant-step subgradient method on built-in locally Lipschitz
nonsmooth problems and numerically certifies the geometric conditions under
which a spurious local minimum is unstable: Chetaev increment bounds,
tangent-alignment (Verdier) bounds, subgradient sharpness around the
critical manifold, distance monotonicity, and local minimality with a
spuriousness witness.
"""

from .certifiers import (
    BOUNDED_BELOW,
    INCONCLUSIVE,
    SATISFIED,
    VIOLATED,
    CertificateReport,
    audit_chetaev,
    audit_distance_monotonicity,
    audit_projection_ratio,
    certify_subregularity,
    certify_verdier,
    probe_local_min,
    read_report,
    recompute_statistic,
    write_report,
)
from .dynamics import (
    ESCAPED,
    MAX_ITERS,
    STALLED,
    NumericalBlowupError,
    StepRecord,
    Trajectory,
    read_trajectory_csv,
    run,
    sample_alpha,
    sample_initial,
    verify_update_exactness,
    write_trajectory_csv,
)
from .problem import AuditSkipped, ProblemOracle, membership_check, validate_subgradient
from .problems import (
    PROBLEM_IDS,
    AbsControlProblem,
    ConstructionError,
    ReluL1Problem,
    RpcaL1Problem,
    VerdierFailProblem,
    build_spurious_min,
    make_problem,
    synthetic_matrix,
)

__version__ = "0.1.0"
