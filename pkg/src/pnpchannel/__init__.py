"""Steady-state and transient ion flow through narrow tubular channels,
via the one-dimensional limiting Poisson-Nernst-Planck system.

The package provides the explicit singular-perturbation solution (boundary
layers, regular layer, closed-form limiting fluxes) together with
finite-parameter numerical solvers that cross-validate it.
"""

__version__ = "0.1.0"

from . import errors
from .geometry import (
    ChannelProfile,
    GeometrySummary,
    WallFunction,
    build_foliation,
    eval_h,
    geometry_factor,
    jacobian_products,
    normalize_volume,
)
from .steady import (
    BoundaryData,
    BoundaryLayerEndpoint,
    FluxPair,
    IonSpecies,
    LogRatioData,
    RegularLayer,
    Side,
    SingularOrbit,
    SteadyProblem,
    boundary_layer_endpoint,
    limiting_fluxes,
    log_ratios,
    regular_layer,
    singular_orbit,
)
from .fastlayer import (
    BoundaryManifoldPoint,
    EigenData,
    FastState,
    IntegralVector,
    LayerOrbit,
    boundary_point,
    eigen_normal,
    fast_field,
    integrals,
    integrate_layer,
    manifold_membership,
)
from .bvp import (
    DiscreteSolution,
    Mesh,
    MuStudyResult,
    MuStudyRow,
    SolverOptions,
    build_layer_mesh,
    extract_fluxes,
    mu_convergence_study,
    solve_steady_bvp,
)
from .transient import (
    InvariantRegionMonitor,
    LyapunovTrace,
    TransientOptions,
    TransientResult,
    TransientState,
    common_boundary_charge,
    invariant_region_bound,
    lyapunov,
    poisson_solve,
    run_transient,
    step,
)
from .cli import (
    RunConfig,
    RunReport,
    dispatch,
    parse_config,
    serialize_config,
    write_outputs,
)

__all__ = [name for name in dir() if not name.startswith("_")]
