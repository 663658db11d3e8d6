"""Gradient estimators for the Gaussian search distribution, with baselines,
importance weighting, weight truncation, and the closed-form variance bounds.

Every estimator has the form

    d_rho = (1/n) * sum_n (R_n - b) * w_n * score(rho, theta_n)

where the weight w_n and the baseline b vary by configuration:

    weight_mode "on_policy"    w = 1, intended for current-iteration data
    weight_mode "niw"          w = 1 on reused data (biased; negative control)
    weight_mode "iw"           w = density ratio target / record's own behavior
    weight_mode "iw_truncated" w = min(density ratio, truncation_cap)

    baseline_mode "none"       b = 0
    baseline_mode "optimal"    b = variance-minimizing constant, estimated
                               from the same records and the same weights
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .prior import HyperParams, importance_weight, score
from .rollout import Dataset

WEIGHT_MODES = ("on_policy", "niw", "iw", "iw_truncated")
BASELINE_MODES = ("none", "optimal")


@dataclass(frozen=True)
class EstimatorConfig:
    """Which weights and which baseline an estimator uses."""

    weight_mode: str = "on_policy"
    baseline_mode: str = "none"
    truncation_cap: float = 2.0
    # Experimental: separate baselines for the mean and deviation blocks.
    per_block_baseline: bool = False

    def __post_init__(self):
        if self.weight_mode not in WEIGHT_MODES:
            raise ValueError(f"weight_mode must be one of {WEIGHT_MODES}")
        if self.baseline_mode not in BASELINE_MODES:
            raise ValueError(f"baseline_mode must be one of {BASELINE_MODES}")
        if self.truncation_cap <= 0.0:
            raise ValueError("truncation cap must be positive")


@dataclass(frozen=True)
class GradientEstimate:
    """A mean/deviation gradient pair with per-batch diagnostics."""

    d_eta: np.ndarray
    d_tau: np.ndarray
    baseline: float
    n_samples: int
    weight_min: float
    weight_max: float
    weight_mean: float
    ess: float
    baseline_degenerate: bool = False
    baseline_tau: float | None = None  # set only with per-block baselines

    def stacked(self) -> np.ndarray:
        """Concatenated (d_eta, d_tau) vector."""
        return np.concatenate([self.d_eta, self.d_tau])

    def norm(self) -> float:
        return float(np.linalg.norm(self.stacked()))


def _dataset_weights(dataset: Dataset, target: HyperParams, config: EstimatorConfig) -> np.ndarray:
    """Per-record weights in record order, already truncated if configured."""
    if config.weight_mode in ("on_policy", "niw"):
        return np.ones(dataset.n_records)
    parts = []
    for b in dataset.batches:
        try:
            parts.append(np.atleast_1d(importance_weight(target, b.behavior, b.thetas)))
        except ValueError as err:
            raise ValueError(f"iteration {b.iteration} batch: {err}") from err
    w = np.concatenate(parts)
    if config.weight_mode == "iw_truncated":
        w = np.minimum(w, config.truncation_cap)
    return w


def _baseline_from_parts(returns, weights, g) -> tuple[float, bool]:
    """Ratio of weighted-return to weight second moments; 0 when degenerate."""
    denom = float(np.sum(weights * weights * g))
    if denom <= np.finfo(float).tiny:
        return 0.0, True
    num = float(np.sum(returns * weights * weights * g))
    return num / denom, False


def optimal_baseline(dataset: Dataset, target: HyperParams, config: EstimatorConfig) -> float:
    """Variance-minimizing constant baseline, estimated from the dataset.

    The empirical plug-in of  E[R w^2 ||score||^2] / E[w^2 ||score||^2],
    with the squared score norm taken over the full stacked (eta, tau)
    vector and the weights exactly as the estimator will use them.
    Returns 0.0 when all score norms vanish.
    """
    if dataset.n_records == 0:
        raise ValueError("cannot estimate a baseline from an empty dataset")
    thetas = np.concatenate([b.thetas for b in dataset.batches])
    returns = np.concatenate([b.returns for b in dataset.batches])
    w = _dataset_weights(dataset, target, config)
    s = score(target, thetas)
    g = np.sum(s.d_eta**2, axis=-1) + np.sum(s.d_tau**2, axis=-1)
    b, _ = _baseline_from_parts(returns, w, g)
    return b


def estimate_gradient(dataset: Dataset, target: HyperParams, config: EstimatorConfig) -> GradientEstimate:
    """Estimate the expected-return gradient at ``target`` from a dataset view."""
    if dataset.n_records == 0:
        raise ValueError("cannot estimate a gradient from an empty dataset")
    for b in dataset.batches:
        if b.behavior.dim != target.dim:
            raise ValueError(
                f"iteration {b.iteration} batch dimension {b.behavior.dim} "
                f"does not match target dimension {target.dim}"
            )
    thetas = np.concatenate([b.thetas for b in dataset.batches])
    returns = np.concatenate([b.returns for b in dataset.batches])
    n = thetas.shape[0]
    w = _dataset_weights(dataset, target, config)

    s = score(target, thetas)
    baseline, degenerate, baseline_tau = 0.0, False, None
    if config.baseline_mode == "optimal":
        if config.per_block_baseline:
            g_eta = np.sum(s.d_eta**2, axis=-1)
            g_tau = np.sum(s.d_tau**2, axis=-1)
            baseline, d1 = _baseline_from_parts(returns, w, g_eta)
            baseline_tau, d2 = _baseline_from_parts(returns, w, g_tau)
            degenerate = d1 or d2
        else:
            g = np.sum(s.d_eta**2, axis=-1) + np.sum(s.d_tau**2, axis=-1)
            baseline, degenerate = _baseline_from_parts(returns, w, g)

    coef_eta = (returns - baseline) * w
    b_tau = baseline if baseline_tau is None else baseline_tau
    coef_tau = (returns - b_tau) * w
    d_eta = np.mean(coef_eta[:, None] * s.d_eta, axis=0)
    d_tau = np.mean(coef_tau[:, None] * s.d_tau, axis=0)

    wsum = float(np.sum(w))
    wsq = float(np.sum(w * w))
    ess = wsum * wsum / wsq if wsq > 0.0 else 0.0
    return GradientEstimate(
        d_eta=d_eta,
        d_tau=d_tau,
        baseline=float(baseline),
        n_samples=n,
        weight_min=float(np.min(w)),
        weight_max=float(np.max(w)),
        weight_mean=float(np.mean(w)),
        ess=ess,
        baseline_degenerate=degenerate,
        baseline_tau=baseline_tau,
    )


def excess_variance(b: float, b_star: float, n: int, second_moment: float) -> float:
    """Extra estimator variance incurred by using baseline b instead of b_star.

    (b - b_star)^2 * second_moment / n, where second_moment is
    E[w^2 ||score||^2] for the block in question.
    """
    if n < 1:
        raise ValueError("sample count must be at least 1")
    if second_moment < 0.0:
        raise ValueError("second moment cannot be negative")
    return (b - b_star) ** 2 * second_moment / n


def total_precision(rho: HyperParams) -> float:
    """Sum of inverse prior variances: the trace of the inverse covariance."""
    return float(np.sum(rho.tau**-2.0))


@dataclass(frozen=True)
class BoundInputs:
    """Quantities the closed-form variance bounds are evaluated at.

    ``reward_high`` bounds |r| from above; ``reward_low`` bounds r away from
    zero (used by the lower bounds only).  ``precision_total`` is the sum of
    inverse prior variances at the target, and weight_min / weight_max bound
    the importance weights in force.
    """

    reward_high: float
    gamma: float
    horizon: int
    n_samples: int
    precision_total: float
    weight_max: float = 1.0
    weight_min: float = 1.0
    reward_low: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if self.n_samples < 1 or self.horizon < 1:
            raise ValueError("horizon and sample count must be at least 1")
        if self.precision_total <= 0.0:
            raise ValueError("precision_total must be positive")

    def _scale(self) -> float:
        return (1.0 - self.gamma**self.horizon) ** 2 * self.precision_total / (
            self.n_samples * (1.0 - self.gamma) ** 2
        )


def _block_factor(block: str) -> float:
    if block == "eta":
        return 1.0
    if block == "tau":
        return 2.0
    raise ValueError('block must be "eta" or "tau"')


def variance_upper_bound(block: str, inputs: BoundInputs) -> float:
    """Upper bound on the trace-variance of the unbaselined weighted estimator.

    reward_high^2 * (1 - gamma^T)^2 * precision_total * weight_max
        / (n * (1 - gamma)^2),
    doubled for the deviation block.  With weight_max = 1 this is the plain
    on-policy bound.
    """
    return _block_factor(block) * inputs.reward_high**2 * inputs.weight_max * inputs._scale()


def variance_reduction_bounds(block: str, inputs: BoundInputs) -> tuple[float, float]:
    """Bounds on the variance removed by the optimal constant baseline.

    Lower bound uses (reward_low, weight_min), upper bound uses
    (reward_high, weight_max); both scale like the unbaselined bound.
    """
    if inputs.reward_low <= 0.0:
        raise ValueError("the lower bound needs a positive reward lower bound")
    if inputs.weight_min <= 0.0:
        raise ValueError("the lower bound needs a positive weight lower bound")
    factor = _block_factor(block)
    lower = factor * inputs.reward_low**2 * inputs.weight_min * inputs._scale()
    upper = factor * inputs.reward_high**2 * inputs.weight_max * inputs._scale()
    return lower, upper


def baselined_variance_upper_bound(block: str, inputs: BoundInputs) -> float:
    """Upper bound on the trace-variance of the optimally-baselined estimator.

    (1 - gamma^T)^2 * precision_total / (n * (1 - gamma)^2)
        * (reward_high^2 * weight_max - reward_low^2 * weight_min),
    doubled for the deviation block.  Strictly tighter than the unbaselined
    bound whenever reward_low^2 * weight_min > 0.
    """
    gap = inputs.reward_high**2 * inputs.weight_max - inputs.reward_low**2 * inputs.weight_min
    if gap < 0.0:
        raise ValueError(
            "reward_high^2 * weight_max must be at least reward_low^2 * weight_min"
        )
    return _block_factor(block) * gap * inputs._scale()
