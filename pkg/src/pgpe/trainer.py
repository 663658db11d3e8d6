"""The policy-update loop: collect, estimate, step, evaluate, record.

Updates use a normalized gradient step of fixed length ``step_size`` in the
stacked (eta, tau) space, followed by flooring each deviation at
``tau_floor``.  Evaluation draws fresh controller parameters from the current
prior, on a random stream disjoint from training.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .envs import make_env
from .estimators import EstimatorConfig, GradientEstimate, estimate_gradient
from .methods import get_method
from .prior import HyperParams
from .rollout import Dataset, collect_batch, reuse_window, sample_returns

DEFAULT_TAU_FLOOR = 0.05


@dataclass(frozen=True)
class TrainerConfig:
    """Everything one training run needs; unset fields fall back to
    environment defaults (horizon, gamma, step size) and method defaults
    (reuse window)."""

    env: str = "toy"
    method: str = "IW-PGPE_OB"
    iterations: int = 20
    n_per_iteration: int = 10
    horizon: int | None = None
    gamma: float | None = None
    step_size: float | None = None
    tau_floor: float = DEFAULT_TAU_FLOOR
    reuse_window: int | str | None = None
    truncation_cap: float | None = None
    n_test: int = 100
    seed: int = 0
    init_eta: tuple[float, ...] | None = None
    init_tau: float | tuple[float, ...] = 1.0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if self.n_per_iteration < 1:
            raise ValueError("n_per_iteration must be at least 1")
        if self.tau_floor <= 0.0:
            raise ValueError("tau_floor must be positive")
        if self.step_size is not None and self.step_size <= 0.0:
            raise ValueError("step_size must be positive")

    def resolved(self) -> "TrainerConfig":
        """Fill environment- and method-dependent defaults."""
        env = make_env(self.env)
        method = get_method(self.method)
        return replace(
            self,
            horizon=self.horizon if self.horizon is not None else env.default_horizon,
            gamma=self.gamma if self.gamma is not None else env.default_discount,
            step_size=self.step_size if self.step_size is not None else env.default_step_size,
            reuse_window=self.reuse_window if self.reuse_window is not None else method.reuse_window,
        )

    def estimator_config(self) -> EstimatorConfig:
        cfg = get_method(self.method).estimator
        if self.truncation_cap is not None:
            cfg = replace(cfg, truncation_cap=self.truncation_cap)
        return cfg


@dataclass(frozen=True)
class IterationRecord:
    """State of the run after one update."""

    iteration: int
    hyperparams: HyperParams
    gradient: GradientEstimate
    eval_mean: float
    eval_se: float
    zero_gradient: bool = False


@dataclass
class TrainingHistory:
    config: TrainerConfig
    records: list[IterationRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def eval_means(self) -> np.ndarray:
        return np.array([r.eval_mean for r in self.records])

    @property
    def max_weights(self) -> np.ndarray:
        return np.array([r.gradient.weight_max for r in self.records])


class TrainingError(RuntimeError):
    """A component failed mid-run; carries the iterations completed so far."""

    def __init__(self, message: str, history: TrainingHistory):
        super().__init__(message)
        self.history = history


def update_hyperparams(
    rho: HyperParams, grad: GradientEstimate, step_size: float, tau_floor: float = DEFAULT_TAU_FLOOR
) -> HyperParams:
    """Take a step of exact length ``step_size`` along the gradient direction.

    The normalization uses the stacked (eta, tau) gradient norm, so the
    effective learning rate is step_size / ||gradient||.  Deviations are
    floored afterwards.  A zero gradient leaves the prior unchanged.
    """
    stacked = grad.stacked()
    if not np.all(np.isfinite(stacked)):
        raise ValueError("gradient estimate is not finite")
    norm = float(np.linalg.norm(stacked))
    if norm == 0.0:
        return rho
    scale = step_size / norm
    eta = rho.eta + scale * grad.d_eta
    tau = np.maximum(rho.tau + scale * grad.d_tau, tau_floor)
    return HyperParams(eta, tau)


def evaluate_policy(
    env, rho: HyperParams, n_test: int, horizon: int, gamma: float, rng: np.random.Generator
) -> tuple[float, float]:
    """Mean and standard error of returns over fresh test episodes.

    Each episode draws its own controller parameters from the prior.  With a
    single test episode the standard error is reported as 0.0 by convention.
    """
    if n_test < 1:
        raise ValueError("n_test must be at least 1")
    _, returns = sample_returns(env, rho, n_test, horizon, gamma, rng)
    mean = float(np.mean(returns))
    se = float(np.std(returns, ddof=1) / np.sqrt(n_test)) if n_test > 1 else 0.0
    return mean, se


def initial_hyperparams(config: TrainerConfig, ell: int, rng: np.random.Generator) -> HyperParams:
    """Random standard-normal means (unless pinned) and unit deviations."""
    if config.init_eta is not None:
        eta = np.asarray(config.init_eta, dtype=float)
        if eta.shape != (ell,):
            raise ValueError(f"init_eta must have {ell} entries")
    else:
        eta = rng.standard_normal(ell)
    tau = np.broadcast_to(np.asarray(config.init_tau, dtype=float), (ell,)).copy()
    return HyperParams(eta, tau)


def run_training(config: TrainerConfig, env=None) -> TrainingHistory:
    """Run the full collect / estimate / update / evaluate loop.

    ``env`` overrides the registry lookup, for environments constructed with
    non-default parameters (noise hooks, action clips).
    """
    config = config.resolved()
    if env is None:
        env = make_env(config.env)
    est_config = config.estimator_config()
    init_rng, collect_rng, eval_rng = np.random.default_rng(config.seed).spawn(3)

    rho = initial_hyperparams(config, env.feature_dim, init_rng)
    dataset = Dataset()
    history = TrainingHistory(config)
    try:
        for iteration in range(1, config.iterations + 1):
            records = collect_batch(
                env, rho, config.n_per_iteration, config.horizon, config.gamma, iteration, collect_rng
            )
            dataset = dataset.with_records(records)
            view = reuse_window(dataset, iteration, config.reuse_window)
            grad = estimate_gradient(view, rho, est_config)
            zero = grad.norm() == 0.0
            rho = update_hyperparams(rho, grad, config.step_size, config.tau_floor)
            eval_mean, eval_se = evaluate_policy(
                env, rho, config.n_test, config.horizon, config.gamma, eval_rng
            )
            history.records.append(
                IterationRecord(iteration, rho, grad, eval_mean, eval_se, zero)
            )
    except Exception as err:
        raise TrainingError(
            f"training aborted at iteration {len(history.records) + 1}: {err}", history
        ) from err
    return history
