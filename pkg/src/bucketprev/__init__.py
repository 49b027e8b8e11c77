"""Upper-bound prevalence estimation for rare classes from classifier scores and a small labeled sample."""

__version__ = "0.1.0"

from .bbb import (
    BBBConfig,
    BetaPosterior,
    bbb_estimate,
    bbb_posterior,
    bbb_prevalence,
    bbb_time_partitioned,
    bucketize_days,
    merge_days,
)
from .bootstrap import BootstrapConfig, bootstrap_estimate
from .core import (
    DEFAULT_SEED,
    BucketConfig,
    BucketSummary,
    IntervalEstimate,
    LabeledSample,
    PrevalencePosterior,
    ScoredPopulation,
    bucketize,
    interval_from_moments,
    interval_from_samples,
)
from .gp import GPConfig, LatentState, bucket_covariance, gp_estimate, gp_log_posterior, gp_sample, probit
from .simulate import (
    CalibrationCurve,
    ExperimentSpec,
    PopulationSpec,
    SamplingStrategy,
    draw_sample,
    generate_population,
    run_experiment,
)
