"""Parameter-exploring policy gradients with importance-weighted sample reuse.

A policy-search library built around a factorized Gaussian distribution over
the parameters of a deterministic linear controller.  Exploration happens in
parameter space: controller parameters are drawn once per episode, and the
distribution's means and deviations are updated along Monte Carlo gradient
estimates of the expected return.  Past batches can be reused through
per-record importance weights, optionally truncated, and estimator variance
can be reduced with a variance-optimal constant baseline.
"""

from .analysis import (
    AngleStudyResult,
    BoundReport,
    GradientStudyResult,
    angle_experiment,
    angle_study,
    bound_check,
    gradient_study,
    oracle_gradient,
)
from .envs import ENVIRONMENTS, MountainCarEnv, ToyEnv, act, make_env
from .estimators import (
    BoundInputs,
    EstimatorConfig,
    GradientEstimate,
    baselined_variance_upper_bound,
    estimate_gradient,
    excess_variance,
    optimal_baseline,
    total_precision,
    variance_reduction_bounds,
    variance_upper_bound,
)
from .methods import COMPARISON_METHODS, METHODS, Method, get_method
from .prior import (
    HyperParams,
    Score,
    importance_weight,
    log_density,
    log_weight,
    sample_params,
    score,
)
from .rollout import (
    Dataset,
    IterationBatch,
    SampleRecord,
    Trajectory,
    collect_batch,
    discounted_return,
    dump_dataset,
    generate_trajectory,
    load_dataset,
    reuse_window,
    rollout_batch,
    sample_returns,
)
from .trainer import (
    IterationRecord,
    TrainerConfig,
    TrainingError,
    TrainingHistory,
    evaluate_policy,
    run_training,
    update_hyperparams,
)

__version__ = "0.1.0"
