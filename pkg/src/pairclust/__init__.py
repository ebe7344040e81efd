"""Semi-supervised clustering from noisy must-link / cannot-link annotations.

Joint maximum-likelihood (or maximum-posterior) fitting of a hard-membership
spherical Gaussian mixture and two stochastic block models over annotation
graphs, solved by a hybrid genetic search.
"""

from .core import (
    AnnotationGraphs,
    Assignment,
    BlockRates,
    ClusterStats,
    ContractViolation,
    Dataset,
    EmptyClusterError,
    GaussianParams,
    PriorConfig,
    PriorRates,
    Solution,
    apply_relocation,
    evaluate_objective,
    gmm_loglik,
    relocation_delta,
    sbm_loglik,
)
from .datagen import (
    ExpertSpec,
    GroundTruth,
    MixtureSpec,
    generate_annotation_draws,
    generate_annotations,
    generate_mixture,
    graphs_from_draws,
)
from .estimation import (
    compute_prior_rates,
    estimate_block_rates,
    estimate_block_rates_with_priors,
    estimate_means,
    estimate_variances,
)
from .matching import min_cost_matching
from .metrics import (
    ContingencyTable,
    centroid_index,
    kl_mixtures_matched,
    kl_spherical_gaussian,
    nmi,
)
from .solver import (
    Population,
    RepetitionOutcome,
    SolverConfig,
    crossover,
    crossover_centers,
    fit_annotated,
    fit_unannotated,
    initialize_population,
    mutation,
    run,
    run_repetitions,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
