"""Linear and nonlinear instability tools for steady Euler flows.

Shear-profile neutral modes and unstable Rayleigh branches, modal spectra of
the linearized Euler operator, bicharacteristic growth exponents, and local
unstable manifolds of Galerkin truncations by the Lyapunov-Perron method.
"""

from .bicharacteristics import (
    LambdaEstimate,
    RayState,
    estimate_lambda_m,
    estimate_mu0,
    integrate_ray,
    min_xi_norm,
    ray_rhs,
    shear_closed_form,
)
from .fields import (
    PeriodicGrid1D,
    PlanarField,
    ShearProfile,
    VectorField3D,
    abc_flow,
    constant_flow,
    custom_profile,
    leray_project,
    shear_flow,
    sin_beta_profile,
    sin_profile,
    sinusoidal_shear,
    spectral_derivative,
    velocity_from_vorticity,
    vorticity_and_momentum,
)
from .galerkin import galerkin_reduce
from .lyapunov_perron import (
    LPSystem,
    UnstableGraph,
    WeightedPath,
    apply_lp_map,
    solve_fixed_point,
    toy_system,
    unstable_graph,
    verify_local_invariance,
)
from .rayleigh import ComplexMode, continue_branch, find_unstable_mode, floquet_discriminant, integrate_fundamental
from .spectra2d import DichotomySplit, ModalOperator, assemble_planar, assemble_shear3d, dichotomy_split, real_form, unstable_spectrum
from .sturm_liouville import SLResult, build_K, lowest_eigenpair

__version__ = "0.1.0"
