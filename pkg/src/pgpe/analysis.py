"""Measurement machinery: oracle gradients, variance/bias/MSE studies over
repeated trials, gradient-direction histograms, and numerical checks of the
closed-form variance bounds.

The study protocol holds the hyper-parameter path fixed across methods: the
path advances by a high-sample oracle gradient, never by any method's own
estimate, so every method is measured at identical hyper-parameters.
"""

from __future__ import annotations

import copy
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .estimators import (
    BoundInputs,
    EstimatorConfig,
    GradientEstimate,
    baselined_variance_upper_bound,
    estimate_gradient,
    total_precision,
    variance_reduction_bounds,
    variance_upper_bound,
)
from .methods import COMPARISON_METHODS, get_method
from .prior import HyperParams
from .rollout import Dataset, IterationBatch, reuse_window, sample_returns
from .trainer import DEFAULT_TAU_FLOOR, update_hyperparams

BLOCKS = ("eta", "tau")


def oracle_gradient(
    env,
    rho: HyperParams,
    n_oracle: int,
    horizon: int,
    gamma: float,
    rng: np.random.Generator,
) -> GradientEstimate:
    """High-sample on-policy estimate standing in for the true gradient.

    Plain estimator (unit weights, no baseline) over fresh samples drawn at
    ``rho``; ``n_oracle`` below 1000 is rejected as too noisy to serve as a
    reference.
    """
    if n_oracle < 1000:
        raise ValueError("oracle estimates need at least 1000 samples")
    thetas, returns = sample_returns(env, rho, n_oracle, horizon, gamma, rng)
    ds = Dataset([IterationBatch(1, rho, thetas, returns)])
    return estimate_gradient(ds, rho, EstimatorConfig("on_policy", "none"))


@dataclass(frozen=True)
class StudyCell:
    """Dispersion statistics of one method's estimates at one iteration."""

    iteration: int
    method: str
    block: str
    var: float
    bias2: float
    mse: float
    weight_max: float
    weight_min: float
    n_samples: int


@dataclass
class GradientStudyResult:
    trials: int
    n_per_iteration: int
    horizon: int
    gamma: float
    methods: tuple[str, ...]
    cells: list[StudyCell] = field(default_factory=list)
    rho_path: list[HyperParams] = field(default_factory=list)
    oracle_grads: list[GradientEstimate] = field(default_factory=list)

    def cell(self, iteration: int, method: str, block: str) -> StudyCell:
        for c in self.cells:
            if c.iteration == iteration and c.method == method and c.block == block:
                return c
        raise KeyError(f"no study cell for ({iteration}, {method}, {block})")


def _dispersion(estimates: np.ndarray, oracle: np.ndarray) -> tuple[float, float, float]:
    """Var, squared bias, and MSE of a set of vector estimates.

    Var is the mean squared distance to the trial mean, Bias^2 the squared
    distance of the trial mean to the oracle, MSE the mean squared distance
    to the oracle; the three satisfy Var + Bias^2 = MSE identically.
    """
    mean = estimates.mean(axis=0)
    var = float(np.mean(np.sum((estimates - mean) ** 2, axis=-1)))
    bias2 = float(np.sum((mean - oracle) ** 2))
    mse = float(np.mean(np.sum((estimates - oracle) ** 2, axis=-1)))
    return var, bias2, mse


def gradient_study(
    env,
    rho_init: HyperParams,
    rng: np.random.Generator,
    methods: tuple[str, ...] = COMPARISON_METHODS,
    iterations: int = 20,
    trials: int = 1000,
    n_per_iteration: int = 10,
    horizon: int | None = None,
    gamma: float | None = None,
    oracle_samples: int = 10_000,
    step_size: float | None = None,
    tau_floor: float = DEFAULT_TAU_FLOOR,
    threads: int = 1,
    identical_trial_streams: bool = False,
) -> GradientStudyResult:
    """Measure estimator dispersion for every method along a common path.

    Each trial maintains its own growing dataset: at every iteration each
    trial collects a fresh batch at the current hyper-parameters and every
    method re-estimates the gradient from that trial's data (restricted to
    the method's reuse window).  Var, Bias^2, and MSE against the oracle
    gradient are recorded per method, iteration, and parameter block, then
    the path advances by the oracle gradient.

    ``identical_trial_streams`` is a test hook that gives every trial the
    same random stream, collapsing the trial dispersion to zero.
    """
    if trials < 2:
        raise ValueError("a dispersion study needs at least 2 trials")
    horizon = horizon if horizon is not None else env.default_horizon
    gamma = gamma if gamma is not None else env.default_discount
    step_size = step_size if step_size is not None else env.default_step_size
    specs = [get_method(m) for m in methods]

    oracle_rng = rng.spawn(1)[0]
    if identical_trial_streams:
        base = rng.spawn(1)[0]
        trial_rngs = [copy.deepcopy(base) for _ in range(trials)]
    else:
        trial_rngs = rng.spawn(trials)

    result = GradientStudyResult(trials, n_per_iteration, horizon, gamma, tuple(methods))
    datasets = [Dataset() for _ in range(trials)]
    rho = rho_init
    n_methods = len(specs)
    for iteration in range(1, iterations + 1):
        d_eta = np.empty((n_methods, trials, env.feature_dim))
        d_tau = np.empty((n_methods, trials, env.feature_dim))
        w_max = np.empty((n_methods, trials))
        w_min = np.empty((n_methods, trials))
        n_used = np.empty((n_methods, trials), dtype=int)

        def run_trial(m: int, rho=rho, iteration=iteration):
            thetas, returns = sample_returns(
                env, rho, n_per_iteration, horizon, gamma, trial_rngs[m]
            )
            datasets[m] = datasets[m].with_batch(
                IterationBatch(iteration, rho, thetas, returns)
            )
            for j, spec in enumerate(specs):
                view = reuse_window(datasets[m], iteration, spec.reuse_window)
                est = estimate_gradient(view, rho, spec.estimator)
                d_eta[j, m] = est.d_eta
                d_tau[j, m] = est.d_tau
                w_max[j, m] = est.weight_max
                w_min[j, m] = est.weight_min
                n_used[j, m] = est.n_samples

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                list(pool.map(run_trial, range(trials)))
        else:
            for m in range(trials):
                run_trial(m)

        oracle = oracle_gradient(env, rho, oracle_samples, horizon, gamma, oracle_rng)
        result.rho_path.append(rho)
        result.oracle_grads.append(oracle)
        for j, spec in enumerate(specs):
            for block, est, ref in (
                ("eta", d_eta[j], oracle.d_eta),
                ("tau", d_tau[j], oracle.d_tau),
            ):
                var, bias2, mse = _dispersion(est, ref)
                result.cells.append(
                    StudyCell(
                        iteration,
                        spec.name,
                        block,
                        var,
                        bias2,
                        mse,
                        float(w_max[j].max()),
                        float(w_min[j].min()),
                        int(n_used[j, 0]),
                    )
                )
        rho = update_hyperparams(rho, oracle, step_size, tau_floor)
    return result


@dataclass(frozen=True)
class AngleStudyResult:
    """Signed angles between estimated and reference gradients, in degrees.

    Angles are measured in the (mean, deviation) plane; positive is
    counterclockwise from the reference direction, in (-180, 180].
    Zero-norm estimates have no direction; they are dropped and counted,
    and ``kept_indices`` maps each angle back to its input position.
    """

    angles: np.ndarray
    kept_indices: np.ndarray
    n_excluded: int
    hist_counts: np.ndarray
    hist_edges: np.ndarray


def angle_study(true_grad, estimates) -> AngleStudyResult:
    """Angles of estimated gradient directions relative to a reference.

    Both the reference and every estimate must be 2-vectors (the stacked
    gradient of a one-dimensional search distribution).  The histogram uses
    30-degree bins spanning [-180, 180].
    """
    t = np.asarray(true_grad, dtype=float)
    if t.shape != (2,):
        raise ValueError("the reference gradient must be a 2-vector")
    if np.linalg.norm(t) == 0.0:
        raise ValueError("the reference gradient must be nonzero")
    angles, kept = [], []
    excluded = 0
    for i, e in enumerate(estimates):
        e = np.asarray(e, dtype=float)
        if e.shape != (2,):
            raise ValueError("every estimate must be a 2-vector")
        if np.linalg.norm(e) == 0.0:
            excluded += 1
            continue
        cross = t[0] * e[1] - t[1] * e[0]
        angles.append(np.degrees(np.arctan2(cross, float(t @ e))))
        kept.append(i)
    angles = np.array(angles)
    counts, edges = np.histogram(angles, bins=np.arange(-180.0, 181.0, 30.0))
    return AngleStudyResult(angles, np.array(kept, dtype=int), excluded, counts, edges)


def angle_experiment(
    env,
    target: HyperParams,
    behavior: HyperParams,
    rng: np.random.Generator,
    methods: tuple[str, ...] = ("NIW-PGPE", "IW-PGPE", "IW-PGPE_OB"),
    n_samples: int = 10,
    trials: int = 20,
    horizon: int | None = None,
    gamma: float | None = None,
    oracle_samples: int = 10_000,
) -> dict[str, AngleStudyResult]:
    """Directions of data-reuse estimates against the on-policy oracle.

    Each trial draws a fresh batch from the behavior prior and every method
    estimates the gradient at the target prior from that single off-policy
    batch.  Only meaningful for one-dimensional search distributions, where
    gradients live in a plane.
    """
    if env.feature_dim != 1:
        raise ValueError("angle experiments need a one-dimensional controller")
    horizon = horizon if horizon is not None else env.default_horizon
    gamma = gamma if gamma is not None else env.default_discount
    oracle_rng = rng.spawn(1)[0]
    true = oracle_gradient(env, target, oracle_samples, horizon, gamma, oracle_rng)
    estimates: dict[str, list[np.ndarray]] = {m: [] for m in methods}
    for trial_rng in rng.spawn(trials):
        thetas, returns = sample_returns(env, behavior, n_samples, horizon, gamma, trial_rng)
        ds = Dataset([IterationBatch(1, behavior, thetas, returns)])
        for m in methods:
            est = estimate_gradient(ds, target, get_method(m).estimator)
            estimates[m].append(est.stacked())
    return {m: angle_study(true.stacked(), estimates[m]) for m in methods}


@dataclass(frozen=True)
class BoundCheckRow:
    iteration: int
    block: str
    check: str
    method: str
    empirical: float
    bound: float
    passed: bool


@dataclass
class BoundReport:
    rows: list[BoundCheckRow] = field(default_factory=list)

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def failures(self) -> list[BoundCheckRow]:
        return [r for r in self.rows if not r.passed]


# Methods whose measured variance the unbaselined upper bound applies to.
_UNBASELINED_BOUND_METHODS = ("PGPE", "IW-PGPE")


def bound_check(study: GradientStudyResult, reward_low: float, reward_high: float) -> BoundReport:
    """Compare the study's measured variances against the closed-form bounds.

    Per iteration and block: the unbaselined estimators' variance against
    their upper bound; the variance removed by the optimal baseline against
    its lower/upper bounds; and the baselined estimator's variance against
    its own (tighter) upper bound.  Weight extremes are the empirical batch
    extremes recorded by the study.
    """
    report = BoundReport()
    for i, rho in enumerate(study.rho_path, start=1):
        precision = total_precision(rho)

        def inputs(cell: StudyCell) -> BoundInputs:
            return BoundInputs(
                reward_high=reward_high,
                gamma=study.gamma,
                horizon=study.horizon,
                n_samples=cell.n_samples,
                precision_total=precision,
                weight_max=cell.weight_max,
                weight_min=cell.weight_min,
                reward_low=reward_low,
            )

        for block in BLOCKS:
            for method in _UNBASELINED_BOUND_METHODS:
                if method not in study.methods:
                    continue
                cell = study.cell(i, method, block)
                bound = variance_upper_bound(block, inputs(cell))
                report.rows.append(
                    BoundCheckRow(i, block, "variance_bound", method, cell.var, bound, cell.var <= bound)
                )
            if "IW-PGPE" in study.methods and "IW-PGPE_OB" in study.methods:
                iw = study.cell(i, "IW-PGPE", block)
                ob = study.cell(i, "IW-PGPE_OB", block)
                reduction = iw.var - ob.var
                lower, upper = variance_reduction_bounds(block, inputs(iw))
                report.rows.append(
                    BoundCheckRow(i, block, "reduction_lower", "IW-PGPE_OB", reduction, lower, reduction >= lower)
                )
                report.rows.append(
                    BoundCheckRow(i, block, "reduction_upper", "IW-PGPE_OB", reduction, upper, reduction <= upper)
                )
                ob_bound = baselined_variance_upper_bound(block, inputs(ob))
                report.rows.append(
                    BoundCheckRow(i, block, "baselined_variance_bound", "IW-PGPE_OB", ob.var, ob_bound, ob.var <= ob_bound)
                )
    return report


def return_surface(
    env,
    etas: np.ndarray,
    taus: np.ndarray,
    rng: np.random.Generator,
    n: int = 200,
    horizon: int | None = None,
    gamma: float | None = None,
) -> np.ndarray:
    """Coarse grid of mean returns over (eta, tau) pairs, for contour plots.

    Only supports one-dimensional controllers; entry [i, j] is the Monte
    Carlo mean return of the prior (etas[i], taus[j]).
    """
    if env.feature_dim != 1:
        raise ValueError("return surfaces are only computed for 1-d controllers")
    horizon = horizon if horizon is not None else env.default_horizon
    gamma = gamma if gamma is not None else env.default_discount
    out = np.empty((len(etas), len(taus)))
    for i, eta in enumerate(etas):
        for j, tau in enumerate(taus):
            rho = HyperParams(np.array([eta]), np.array([tau]))
            _, returns = sample_returns(env, rho, n, horizon, gamma, rng)
            out[i, j] = returns.mean()
    return out
