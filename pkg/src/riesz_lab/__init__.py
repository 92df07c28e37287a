"""Weighted Riesz potential theory on compact sets in R^d, d > 2.

Equilibrium measures, weighted Fekete points, Bernstein-Markov probes, the
Gibbs ensemble of n repelling points and large-deviation diagnostics for
its empirical measures.
"""

__version__ = "0.1.0"

from .bernstein import (
    BMRecord,
    PnFunction,
    bernstein_exponent,
    bernstein_ratio_probe,
    bm_constant_probe,
    eval_pn,
    grad_pn,
    log_sup_floor,
    mass_density_probe,
    sup_norm_estimate,
)
from .equilibrium import (
    EquilibriumSolution,
    FrostmanReport,
    frostman_check,
    inverse_equilibrium,
    solve_equilibrium,
)
from .fekete import (
    Configuration,
    FeketeResult,
    fekete_empirical_convergence,
    log_vdm,
    normalized_energy,
    optimize_fekete,
    transfinite_diameter_sequence,
)
from .field import ExpressionField, FieldSyntaxError, GridField, parse_field
from .geometry import (
    Box,
    Circle,
    Mesh,
    PointCloud,
    Sphere,
    Union,
    box_counting_dimension,
    cantor_set,
    covering_radius,
    generate_mesh,
    local_dimension,
    project,
)
from .gibbs import (
    GibbsSpec,
    mcmc_sample,
    one_point_correlation,
    partition_function_ais,
    partition_function_quadrature,
    rare_event_probability,
    zn_scaling_check,
)
from .ldp import (
    MeasureBall,
    RateReport,
    empirical_measure,
    j_functional_estimate,
    ldp_scan,
    measure_distance,
    rate_function,
)
from .potential import (
    DiscreteMeasure,
    InfiniteEnergyError,
    RieszKernel,
    energy,
    kernel_matrix,
    potential,
    weighted_energy,
)
