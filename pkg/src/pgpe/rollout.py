"""Trajectory generation, discounted returns, and the reusable sample store.

Gradient estimation only ever consumes ``(theta, return, behavior, iteration)``
tuples, so the :class:`Dataset` keeps those packed as arrays per collection
iteration; full step-by-step trajectories are carried alongside when available
but are never re-walked.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .prior import HyperParams, sample_params

DATASET_FORMAT_VERSION = 1
_DATASET_HEADER = "# pgpe dataset v1"
# One record per line, tab-separated:
#   iteration  theta  behavior_eta  behavior_tau  return
# where vector fields are comma-joined floats (repr round-trip precision).
_DATASET_FIELDS = "# fields: iteration\ttheta\tbehavior_eta\tbehavior_tau\treturn"


@dataclass(frozen=True)
class Trajectory:
    """A fixed-horizon episode with its discounted return cached."""

    states: np.ndarray       # (T, state_dim)
    actions: np.ndarray      # (T,)
    rewards: np.ndarray      # (T,)
    next_states: np.ndarray  # (T, state_dim)
    discounted_return: float

    def __len__(self) -> int:
        return self.rewards.shape[0]


@dataclass(frozen=True)
class SampleRecord:
    """One draw of controller parameters with its episode and provenance.

    ``discounted_return`` is cached at construction; deserialized records
    carry only the cached value (``trajectory`` is None).
    """

    theta: np.ndarray
    trajectory: Trajectory | None
    behavior: HyperParams
    iteration: int
    discounted_return: float | None = None

    def __post_init__(self):
        if self.iteration < 1:
            raise ValueError("iteration index starts at 1")
        if self.discounted_return is None:
            if self.trajectory is None:
                raise ValueError("a record without a trajectory needs an explicit return")
            object.__setattr__(self, "discounted_return", self.trajectory.discounted_return)


@dataclass(frozen=True)
class IterationBatch:
    """All samples collected in one iteration under one behavior prior."""

    iteration: int
    behavior: HyperParams
    thetas: np.ndarray   # (n, ell)
    returns: np.ndarray  # (n,)
    trajectories: tuple[Trajectory, ...] | None = None

    def __post_init__(self):
        if self.thetas.shape[0] != self.returns.shape[0]:
            raise ValueError("thetas and returns disagree on sample count")
        if self.thetas.shape[1] != self.behavior.dim:
            raise ValueError("theta dimension does not match behavior prior")

    @property
    def n(self) -> int:
        return self.returns.shape[0]


class Dataset:
    """Ordered, per-iteration-grouped sample store.

    Immutable: adding a batch returns a new Dataset sharing existing batches.
    """

    def __init__(self, batches: Sequence[IterationBatch] = ()):
        self.batches = tuple(batches)

    @classmethod
    def from_records(cls, records: Sequence[SampleRecord]) -> "Dataset":
        """Group records by iteration; each group must share one behavior."""
        batches = []
        for rec in records:
            if batches and batches[-1][0] == rec.iteration:
                if rec.behavior is not batches[-1][1] and not (
                    np.array_equal(rec.behavior.eta, batches[-1][1].eta)
                    and np.array_equal(rec.behavior.tau, batches[-1][1].tau)
                ):
                    raise ValueError(
                        f"records in iteration {rec.iteration} have differing behavior priors"
                    )
                batches[-1][2].append(rec)
            else:
                batches.append((rec.iteration, rec.behavior, [rec]))
        packed = []
        for iteration, behavior, recs in batches:
            thetas = np.stack([r.theta for r in recs])
            returns = np.array([r.discounted_return for r in recs])
            trajs = tuple(r.trajectory for r in recs)
            if any(t is None for t in trajs):
                trajs = None
            packed.append(IterationBatch(iteration, behavior, thetas, returns, trajs))
        return cls(packed)

    def with_batch(self, batch: IterationBatch) -> "Dataset":
        return Dataset(self.batches + (batch,))

    def with_records(self, records: Sequence[SampleRecord]) -> "Dataset":
        return Dataset(self.batches + Dataset.from_records(records).batches)

    @property
    def n_records(self) -> int:
        return sum(b.n for b in self.batches)

    def __len__(self) -> int:
        return self.n_records

    def records(self) -> Iterator[SampleRecord]:
        """Iterate records in collection order."""
        for b in self.batches:
            for i in range(b.n):
                traj = b.trajectories[i] if b.trajectories is not None else None
                yield SampleRecord(
                    b.thetas[i], traj, b.behavior, b.iteration, float(b.returns[i])
                )


def discounted_return(rewards, gamma: float) -> float:
    """Discounted reward sum over the episode, gamma in [0, 1)."""
    r = np.asarray(rewards, dtype=float)
    if r.size == 0:
        raise ValueError("cannot compute the return of an empty reward list")
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must lie in [0, 1)")
    return float(r @ gamma ** np.arange(r.size))


def rollout_batch(env, thetas: np.ndarray, horizon: int, gamma: float, rng: np.random.Generator):
    """Roll out one episode per parameter vector, all in lockstep.

    Returns (states, actions, rewards, next_states, returns) with shapes
    (n, T, state_dim), (n, T), (n, T), (n, T, state_dim), (n,).
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    n = thetas.shape[0]
    states = np.empty((n, horizon, env.state_dim))
    actions = np.empty((n, horizon))
    rewards = np.empty((n, horizon))
    next_states = np.empty((n, horizon, env.state_dim))
    s = env.initial_states(n, rng)
    for t in range(horizon):
        phi = env.features(s)
        a = np.sum(thetas * phi, axis=-1)
        s_next, r = env.step(s, a, rng)
        states[:, t] = s
        actions[:, t] = a
        rewards[:, t] = r
        next_states[:, t] = s_next
        s = s_next
    discounts = gamma ** np.arange(horizon)
    returns = rewards @ discounts
    return states, actions, rewards, next_states, returns


def generate_trajectory(env, theta, horizon: int, gamma: float, rng: np.random.Generator) -> Trajectory:
    """Roll out a single episode under a fixed parameter vector."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if theta.shape[0] != env.feature_dim:
        raise ValueError(
            f"theta has {theta.shape[0]} dimensions, environment needs {env.feature_dim}"
        )
    states, actions, rewards, next_states, returns = rollout_batch(
        env, theta[None, :], horizon, gamma, rng
    )
    return Trajectory(states[0], actions[0], rewards[0], next_states[0], float(returns[0]))


def collect_batch(
    env,
    rho: HyperParams,
    n: int,
    horizon: int,
    gamma: float,
    iteration: int,
    rng: np.random.Generator,
) -> list[SampleRecord]:
    """Sample n parameter vectors from the prior and roll out one episode each."""
    if n < 1:
        raise ValueError("batch size must be at least 1")
    thetas = sample_params(rho, rng, size=n)
    states, actions, rewards, next_states, returns = rollout_batch(env, thetas, horizon, gamma, rng)
    records = []
    for i in range(n):
        traj = Trajectory(states[i], actions[i], rewards[i], next_states[i], float(returns[i]))
        records.append(SampleRecord(thetas[i], traj, rho, iteration))
    return records


def sample_returns(
    env,
    rho: HyperParams,
    n: int,
    horizon: int,
    gamma: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Like collect_batch but keeps only (thetas, returns); used for large batches."""
    thetas = sample_params(rho, rng, size=n)
    _, _, _, _, returns = rollout_batch(env, thetas, horizon, gamma, rng)
    return thetas, returns


def reuse_window(dataset: Dataset, current_iteration: int, window) -> Dataset:
    """Restrict a dataset to the samples collected in the last ``window`` iterations.

    ``window="all"`` keeps everything; ``window=1`` keeps only the current
    iteration (on-policy).
    """
    if window == "all":
        return dataset
    if not isinstance(window, int) or window < 1:
        raise ValueError('reuse window must be a positive integer or "all"')
    kept = [b for b in dataset.batches if b.iteration > current_iteration - window]
    return Dataset(kept)


def _fmt_vec(v: np.ndarray) -> str:
    return ",".join(repr(float(x)) for x in v)


def _parse_vec(s: str) -> np.ndarray:
    return np.array([float(x) for x in s.split(",")])


def dump_dataset(dataset: Dataset, path) -> None:
    """Write a dataset in the line-oriented text format (format v1).

    One record per line with fields separated by tabs: iteration index,
    theta, behavior eta, behavior tau, discounted return.  Vector fields are
    comma-joined with full round-trip precision.  Trajectory steps are not
    serialized.
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_DATASET_HEADER + "\n")
        fh.write(_DATASET_FIELDS + "\n")
        for b in dataset.batches:
            eta, tau = _fmt_vec(b.behavior.eta), _fmt_vec(b.behavior.tau)
            for i in range(b.n):
                fh.write(
                    f"{b.iteration}\t{_fmt_vec(b.thetas[i])}\t{eta}\t{tau}\t"
                    f"{repr(float(b.returns[i]))}\n"
                )


def load_dataset(path) -> Dataset:
    """Read a dataset written by :func:`dump_dataset` (no trajectories)."""
    records = []
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().rstrip("\n")
        if first != _DATASET_HEADER:
            raise ValueError(f"unrecognized dataset header: {first!r}")
        behaviors: dict[tuple, HyperParams] = {}
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise ValueError(f"line {lineno}: expected 5 fields, got {len(parts)}")
            iteration = int(parts[0])
            theta = _parse_vec(parts[1])
            key = (parts[2], parts[3])
            if key not in behaviors:
                behaviors[key] = HyperParams(_parse_vec(parts[2]), _parse_vec(parts[3]))
            records.append(
                SampleRecord(theta, None, behaviors[key], iteration, float(parts[4]))
            )
    return Dataset.from_records(records)
