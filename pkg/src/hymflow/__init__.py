"""Hermitian-Yang-Mills flow on flat complex tori.

Submodules
----------
geometry    discretized tori, Hermitian metrics, spectral form calculus
bundle      split and deformed bundles, metric fields, Chern curvature
flow        time integration, gauge picture, perturbed equation
analytics   eigenvalue fields and monitored functionals
hn          Harder-Narasimhan type arithmetic
chern_weil  degrees and the rank-2 second Chern form
"""

from .geometry import (
    FormField,
    GeometryError,
    HermitianBase,
    contract,
    dbar,
    del_,
    domega_norm,
    gauduchon_residual,
    integrate,
    make_flat_torus,
    make_gauduchon_torus,
)
from .bundle import (
    BundleError,
    BundleSpec,
    MetricField,
    NumericalBreakdown,
    chern_curvature,
    conformal_metric,
    constant_beta,
    deform,
    make_split_bundle,
    mean_curvature,
    packet_beta,
    random_metric,
)
from .flow import (
    ConvergenceError,
    FlowState,
    FlowTrace,
    IntegratorConfig,
    MonitorSchedule,
    PositivityError,
    StabilityError,
    gauge_pair,
    run,
    run_pair,
    solve_perturbed,
    step,
)
from .analytics import (
    EigenField,
    MonitorRecord,
    eigen_field,
    hn_projection_distance,
    hym_functional,
    monitors,
    pair_distance,
)
from .chern_weil import c2_positivity_bound, chern2_defect, degree

__version__ = "0.1.0"
