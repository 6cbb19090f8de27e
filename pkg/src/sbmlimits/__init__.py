"""Detectability thresholds, contiguity certificates, and desk-scale
experiments for sparse stochastic block models."""

from .contiguity import (
    CouplingMatrix,
    PhiMaxResult,
    QResult,
    Regime,
    an_entropy_bound,
    an_inequality_check,
    hessian_ratio,
    kl_divergence,
    log_psi,
    nu_terms,
    phi,
    phi_max,
    psi,
    q_value,
    scaled_contrast,
    second_moment_product,
    small_subgraph_identity,
    sufficiency_verdict,
)
from .detection import (
    BayesOverlapReport,
    BirkhoffCheck,
    GoodnessCheck,
    OverlapMatrix,
    balanced_labelings,
    bayes_overlap_experiment,
    birkhoff_bound_check,
    exact_posterior,
    exhaustive_good_search,
    goodness,
    is_balanced,
    overlap,
    overlap_matrix,
    posterior_marginals,
)
from .errors import BudgetExceededError, NumericalError, ValidationError
from .graphs import (
    CycleStats,
    FixedEdgeSample,
    Graph,
    LabeledSample,
    count_cycles,
    cycle_poisson_check,
    read_edge_list,
    read_labels,
    sample_er,
    sample_sbm,
    sample_sbm_fixed_m,
    write_edge_list,
    write_labels,
)
from .model import (
    ModelParams,
    SymmetricParams,
    build_symmetric,
    params_from_json,
    spectrum,
    trace_power,
)
from .moments import (
    CountMatrix,
    SecondMomentRecord,
    exact_second_moment,
    p_omega,
    pair_weight,
)
from .thresholds import (
    ThresholdReport,
    asymptotic_ratio,
    beta_guarantee,
    d_lower,
    d_upper,
    kesten_stigum,
    lambda_star,
    threshold_report,
)

__version__ = "0.1.0"
