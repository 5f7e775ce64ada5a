"""Bootstrap mixture SPRT: nonparametric sequential tests for complex metrics.

Blocks of session data are summarized by a studentized plug-in statistic
whose likelihood is estimated with a block-wise studentized bootstrap and a
Gaussian KDE; a mixture sequential probability ratio test over those block
likelihoods yields an always-valid, nonincreasing p-value under continuous
monitoring.
"""

__version__ = "0.1.0"

from .abtest import AbBlockPair, AbTestResult, ab_summary, run_ab_test
from .baselines import (
    ChasingResult,
    MaxSprtConfig,
    calibrate_maxsprt_threshold,
    chasing_significance_trial,
    maxsprt_bernoulli_llr,
    maxsprt_sequential,
    z_test,
)
from .bootstrap import (
    BootstrapConfig,
    KdeDensity,
    bootstrap_studentized_samples,
    fit_kde,
    kde_eval,
    kde_log_eval,
    resample,
)
from .errors import (
    AllSamplesEqual,
    BootsprtError,
    CalibrationFailed,
    ConfigError,
    DegenerateBlock,
    MalformedRow,
    MissingHeader,
    ZeroSigma,
)
from .harness import (
    BernoulliSessions,
    BlockSizeReport,
    BootstrapSprtDriver,
    CompareSeeds,
    CorrelatedQueries,
    HarnessSeeds,
    MaxSprtDriver,
    PowerPoint,
    SyntheticConfig,
    TrialResult,
    ZeroInflatedRevenue,
    avg_duration,
    calibrate_prior_scale,
    choose_block_size,
    compare_with_maxsprt,
    generate_sessions,
    power_curve,
    qq_points,
    random_split,
    run_aa_trials,
    run_chasing_trials,
    sweep_block_sizes,
)
from .metrics import (
    MEAN_REVENUE,
    QUERY_SUCCESS_RATE,
    Block,
    MetricEstimate,
    MetricKind,
    SessionData,
    SessionRecord,
    compute_estimate,
    compute_metric,
    custom_metric,
    make_blocks,
    metric_by_name,
    stderr_delta_ratio,
    stderr_jackknife,
    studentize,
)
from .msprt import BlockSummary, Decision, MsprtState, NormalPrior, init_state, summarize_block
