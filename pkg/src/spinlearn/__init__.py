"""spinlearn: samplers for spin models, their inverses, and low-degree
polynomial regression against concepts evaluated on sampled configurations,
with exhaustive audits at small scale."""

__version__ = "0.1.0"

from .analytics import (
    anticoncentration_profile,
    dobrushin_check,
    hs_field_sample,
    hs_mixture_audit,
    psd_shift,
    sliding_band,
    subgaussian_tail_audit,
)
from .concepts import (
    Circuit,
    Halfspace,
    MonotoneDNF,
    TableConcept,
    concept_from_dict,
    concept_to_dict,
    load_concept,
    majority,
    regularity_and_critical_index,
    save_concept,
)
from .harness import (
    FIXTURES,
    emit_report,
    fit_plan,
    fixture_model,
    run_experiment,
)
from .inference import (
    all_configs,
    conditional_prob,
    estimate_ssm,
    exact_distribution,
    glauber_gap,
    glauber_transition,
    tv_distance,
)
from .influence import (
    CliqueLaw,
    clique_majority_fixture,
    clique_majority_influence,
    influence_transfer_rhs,
    monotone_influence_bound,
    monotone_influence_formula,
    mu_influence,
    uniform_influence_of_composition,
)
from .inverter import (
    inv_samp,
    inverter_degree_audit,
    likelihood_ratio_audit,
    preimage_enumerate,
    preimage_uniformity_audit,
    pushforward_bound_audit,
)
from .learner import (
    best_weighted_error,
    degree_budget,
    feature_matrix,
    fit_l1,
    fit_l2,
    kkt_report,
    learn_and_test,
    LearnedPredictor,
    monomials_up_to,
)
from .models import (
    DependencyGraph,
    IsingModel,
    diagnostics,
    greedy_r_partition,
    load_model,
    model_from_dict,
    model_hash,
    model_to_dict,
    save_model,
    validate_model,
)
from .rng import StreamFamily, streams
from .samplers import (
    Seed,
    binary_fraction,
    build_local_tree_plan,
    build_ssm_plan,
    build_tree_plan,
    discretized_conditional,
    exact_iterative_sample,
    exact_sample_batch,
    glauber_chain,
    local_tree_samp,
    niceness_holds,
    sampler_output_distribution,
    seed_bit_chi,
    ssm_samp,
    static_dependency_sets,
    tree_output_distribution,
    tree_samp,
)
