"""Gibbs measures on combinatorial configuration families.

Exact partition-function oracles, exact and MCMC Gibbs samplers, cluster
expansion diagnostics, and replicated experiments that test the
fixed-temperature limit laws (log-partition CLT, Poisson overlap, typical
weight CLT, Gibbs-average CLT).
"""

__version__ = "0.1.0"

from .cluster import (
    ClusterDiagnostics,
    ClusterErrorStat,
    cluster_diagnostics,
    cluster_error_stat,
    log_product,
    log_zhat_exact,
)
from .errors import (
    AllInfiniteError,
    CapExceededError,
    GibbsLabError,
    ModelMismatchError,
    NumericalLossError,
)
from .limits import (
    LimitLaw,
    gibbs_avg_clt,
    logz_limit,
    multipartite_logz_limit,
    overlap_lambda,
    typical_clt,
)
from .models import (
    Configuration,
    KFactor,
    MatchingBipartite,
    MatchingComplete,
    ProblemModel,
    SpanningTree,
    TravelingSalesman,
    cayley_extension_count,
    config_weight,
    containment_prob,
    count_configs,
    enumerate_configs,
    is_valid_config,
    model_constants,
    model_from_descriptor,
)
from .oracles import (
    PartitionResult,
    brute_force_log_partition,
    edge_marginal,
    edge_marginals,
    log_partition,
    permanent_log_deriv,
    tree_partition_matrix,
    tsp_partition_dp,
)
from .samplers import (
    ExactGibbsSampler,
    GibbsSample,
    MetropolisChain,
    mcmc_run,
    mcmc_samples,
    overlap,
    sample_exact,
    typical_weight_observable,
)
from .stats import (
    ExperimentReport,
    ExperimentSpec,
    ks_statistic,
    run_experiment,
    tv_distance_poisson,
    write_summary_json,
    write_values_csv,
)
from .weights import (
    Censored,
    CustomCGF,
    Exponential,
    Uniform,
    WeightDistribution,
    WeightVector,
    psi,
    psi_double_prime,
    psi_prime,
    sample_weights,
    v_squared,
    xi,
)
