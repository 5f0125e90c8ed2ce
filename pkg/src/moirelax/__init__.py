"""Mechanical relaxation of 2D-bilayer moire superlattices.

Continuum energy minimization on the moire torus (spectral elasticity +
stacking-fault misfit), a one-dimensional domain-wall solver, and
post-processing of wall widths from relaxed fields.
"""

from .lattice import (
    DegenerateConfigurationError,
    GRAPHENE_BOND_ANGSTROM,
    MoireCell,
    NoMoireError,
    StrainFamily,
    burgers_triplet,
    disregistry_12,
    disregistry_21,
    disregistry_matrix_12,
    disregistry_matrix_21,
    graphene_basis,
    layer_pair,
    moire_cell,
    oblique_basis,
    rotation,
)
from .gsfe import (
    ElasticModuli,
    GsfeModel,
    ModelInconsistencyError,
    WallPotential,
    gsfe_layer,
    gsfe_layer_grad,
    quartic_potential,
    sine_gordon_potential,
    stacking_energy,
    stacking_energy_grad,
    wall_potential,
)
from .domainwall import (
    KinkSolution,
    KinkSolverError,
    WallSpec,
    asymptotic_check,
    characteristic_width,
    fwhm_of_kink,
    solve_kink,
    solve_wall,
    wall_energy_per_length,
    wall_energy_parts,
    width_endpoints,
)
from .relax import (
    DisplacementField,
    EnergyBreakdown,
    LayerPair,
    RelaxOptions,
    RelaxResult,
    RelaxationAborted,
    auto_grid,
    energy_breakdown,
    inter_energy,
    inter_energy_terms,
    inter_grad,
    intra_energy,
    intra_grad,
    relax,
    resample_field,
    scaling_diagnostic,
    sobolev_norm,
    total_energy,
    total_grad,
)
from .analysis import (
    AmbiguousCutError,
    FwhmResult,
    GsfeMap,
    LineCut,
    OrderParameterProfile,
    UnresolvedWallError,
    WidthRow,
    cut_for_wall,
    fwhm,
    gsfe_map,
    measure_wall,
    order_parameter,
    theory_width_ratio,
    width_report,
)

__version__ = "0.1.0"
