"""Bayesian design of length-constrained tree-based adaptive screening tests."""

from .copula import (
    Condition,
    CopulaFactorParams,
    CopulaPosterior,
    EmpiricalMarginal,
    McmcConfig,
    fit_gcfm,
    sample_conditional,
    sample_predictive,
)
from .decision import (
    AdaptiveTest,
    UtilityDiffSample,
    UtilityWeights,
    build_full_test,
    build_short_test,
    compare_methods,
    delta_distribution,
    design_tree,
    empirical_sens_spec,
    evaluate_on_holdout,
    expected_utility,
    optimize_threshold,
    roc_points,
    utility_class_labels,
)
from .errors import TreescreenError
from .items import (
    ConditioningVar,
    Dataset,
    ItemBank,
    ItemDef,
    derive_outcome,
    load_dataset,
    load_item_bank,
    save_dataset,
    save_item_bank,
)
from .population import (
    PooledRows,
    SyntheticBlock,
    SyntheticPopulation,
    generate_population,
    generate_pruning_reservoir,
)
from .risk import (
    RiskConfig,
    RiskPosterior,
    TreeEnsembleDraw,
    fit_risk_model,
    posterior_mean_prob,
    predict_prob,
)
from .tree import (
    Constraint,
    RegressionTree,
    SubtreeSequence,
    default_prune_threshold,
    export_tree,
    grow,
    import_tree,
    predict,
    predict_one,
    prune,
    select_by_plateau,
    unique_items_per_path,
)

__version__ = "0.1.0"
