"""Fractional powers of graph Dirichlet-form generators on fractal
approximations, realized spectrally and through a weighted product-space
extension, with a verification suite for the associated regularity theory."""

from .graphs import (
    FAMILIES,
    DoublingFit,
    FractalGraph,
    FractalSpec,
    ball,
    build_fractal,
    decimation_ratios,
    fit_doubling,
    metric_table,
    volume,
)
from .spectral import (
    GeneratorOperator,
    QuadratureSpec,
    SpectralDecomposition,
    balakrishnan_power,
    eigendecompose,
    fractional_apply,
    fractional_matrix,
    heat_matrix,
    jump_form_apply,
    jump_kernel,
    killed_decomposition,
    semigroup_apply,
    super_mean_value_check,
)
from .extension import (
    ExtendedOperator,
    ExtensionField,
    YGrid,
    assemble_extended_operator,
    bessel_k,
    build_ygrid,
    default_y_max,
    dtn,
    extended_killed_kernel,
    per_mode_profile,
    poisson_extend,
    solve_extension_bvp,
)
from .dirichlet import (
    BesovReport,
    DirichletProblem,
    besov_increment,
    besov_norm,
    equivalence_ratio,
    fractional_energy,
    solve_fractional_dirichlet,
    weak_solution_residual,
)
from .checks import (
    HarnackReport,
    HKEFitReport,
    LLEReport,
    OscillationReport,
    PHIReport,
    fit_on_diagonal,
    harnack_holder_main,
    lle_check,
    oscillation_check,
    phi_check,
)

__version__ = "0.1.0"
