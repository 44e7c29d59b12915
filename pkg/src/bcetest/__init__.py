"""bcetest: testing information orderings in discrete games.

Checks whether observed conditional choice probabilities are consistent
with players possessing at least a baseline amount of information, by
measuring their studentized distance to the convex set of Bayes
correlated equilibrium predictions and calibrating it with a
moment-selected bootstrap.
"""

from .bootstrap import (
    NullTestResult,
    SparseDataError,
    TestConfig,
    ThetaCSResult,
    ThetaDomain,
    ThetaTestResult,
    bootstrap_draws,
    confidence_set_theta,
    pvalue,
    resample,
    test_null,
)
from .data import MarketDataset, ParseError, dataset_from_counts, load_dataset
from .ego import (
    CIEndpoint,
    GPModel,
    ci_endpoint,
    expected_improvement,
    fit_gp,
    maximize_pvalue,
    predict,
)
from .games import (
    CapacityError,
    DiscretizedGame,
    DomainError,
    GameSpec,
    InfoPartition,
    PayoffSpec,
    PriorPMF,
    SolverError,
    ThetaMap,
    TypeDist,
    TypeGrid,
    baseline_partition,
    discretize,
    is_refinement,
    make_grid,
    payoff,
    prior_pmf,
)
from .mcsim import (
    PowerConfig,
    SignalDGP,
    ThresholdTable,
    build_signal_game,
    closed_form_incomplete_ccp,
    equilibrium_ccp,
    incomplete_info_ccp,
    posterior_rho,
    power_experiment,
    simulate_dataset,
    solve_thresholds,
    uniform_incomplete_bne,
    uniform_incomplete_ccp,
)
from .multitest import (
    BaselineChain,
    MarketCSResult,
    OrderingError,
    SequentialTestResult,
    bonferroni_select,
    holm_select,
    market_pvalues,
    sequential_test,
)
from .polytope import (
    BCEPolytope,
    VectorizationOrder,
    assemble,
    clear_cache,
    dump_debug,
    membership,
    outcome_bounds,
    support_fn,
    vertex_oracle,
)
from .statistic import (
    DualProgram,
    TStatResult,
    WeightMatrix,
    build_dual,
    gms_sup,
    solve_V,
    solve_V_cutting,
    statistic_T,
    studentized_sup,
    weight_matrix,
)

__version__ = "0.1.0"
