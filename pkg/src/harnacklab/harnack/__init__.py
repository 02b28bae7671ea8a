"""Harnack inequality margins, identity residuals and their closed-form bounds."""

from .bounds import (
    algebraic_lemma_margin,
    algebraic_lemma_report,
    c7_constants,
    compact_bound_expr,
    elementary_inequality_report,
    hamilton_coefficient,
    li_yau_bound,
    li_yau_constants,
    matching_gamma,
    psi_derivative,
    psi_factor,
    sqrtk_coth,
    static_pre_reduction,
    static_reduction,
)
from .catalog import CATALOG, CheckInfo, describe
from .identities import (
    ResidualResult,
    bochner_residual,
    chain_margin,
    commutator_residual,
    companion_identity_residual,
    convergence_study,
    evolution_identity_residual,
    field_chain_margin,
    field_evolution_residual,
    li_yau_F_identity_residual,
    run_identity_case,
)
from .margins import (
    discretisation_tolerance,
    hamilton_margin,
    integrated_harnack_margin,
    laplacian_comparison_margin,
    li_yau_margin,
    parabolic_harnack_margin,
    random_node_pairs,
    random_space_time_pairs,
)
from .report import HarnackReport, write_margin_csv

__all__ = [name for name in dir() if not name.startswith("_")]
