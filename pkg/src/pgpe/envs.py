"""The two benchmark environments and the deterministic linear controller.

Both environments run for a fixed horizon with no early termination and are
stepped in batches: states are arrays of shape ``(n, state_dim)``, actions of
shape ``(n,)``.  Policies are deterministic and linear in a feature map,
``a = theta . phi(s)``; all stochasticity comes from the environment itself
and from sampling theta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def act(theta, features) -> float | np.ndarray:
    """Deterministic linear controller: the inner product theta . phi(s).

    Accepts a single feature vector ``(ell,)`` or a batch ``(n, ell)`` with a
    matching batch of parameter vectors.
    """
    theta = np.asarray(theta, dtype=float)
    features = np.asarray(features, dtype=float)
    if theta.shape[-1] != features.shape[-1]:
        raise ValueError(
            f"theta has {theta.shape[-1]} dimensions, features have {features.shape[-1]}"
        )
    out = np.sum(theta * features, axis=-1)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ToyEnv:
    """One-dimensional random-walk control problem.

    Dynamics: s' = s + a + noise, noise ~ Normal(0, noise_std^2).
    Reward:   exp(-s^2/2 - a^2/2) + 1, bounded in (1, 2]; it depends only on
    the current state and action.  The initial state is standard normal.

    ``noise_std=0`` and ``fixed_initial_state`` are test hooks that make
    rollouts deterministic.
    """

    noise_std: float = 0.5
    fixed_initial_state: float | None = None

    name = "toy"
    state_dim = 1
    feature_dim = 1
    default_horizon = 10
    default_discount = 0.9
    default_step_size = 0.1
    # Reward range (low, high); the low end is an open bound.
    reward_low = 1.0
    reward_high = 2.0

    def initial_states(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.fixed_initial_state is not None:
            return np.full((n, 1), float(self.fixed_initial_state))
        return rng.standard_normal((n, 1))

    def features(self, states: np.ndarray) -> np.ndarray:
        """Identity features: phi(s) = s."""
        return states

    def step(self, states, actions, rng: np.random.Generator):
        """Advance one step; returns (next_states, rewards)."""
        s = np.asarray(states, dtype=float).reshape(-1, 1)
        a = np.asarray(actions, dtype=float).reshape(-1)
        rewards = np.exp(-0.5 * s[:, 0] ** 2 - 0.5 * a**2) + 1.0
        noise = 0.0
        if self.noise_std > 0.0:
            noise = self.noise_std * rng.standard_normal(s.shape[0])
        next_states = (s[:, 0] + a + noise).reshape(-1, 1)
        return next_states, rewards


def _kernel_centers() -> np.ndarray:
    # Row-major over the written grid: position centers outer, velocity inner.
    xs = [-1.2, -0.35, 0.5]
    vs = [-1.5, -0.5, 0.5, 1.5]
    centers = np.array([(x, v) for x in xs for v in vs])
    centers.setflags(write=False)
    return centers


@dataclass(frozen=True)
class MountainCarEnv:
    """Under-powered car in a sin(3x) valley, continuous state and action.

    State is (position x, velocity v) with x in [-1.2, 0.5] and v in
    [-1.5, 1.5]; excursions are clamped back to the box.  The velocity is
    updated first and the position update uses the new velocity:

        v' = v + (-9.8 * mass * cos(3x) + a / mass - friction * v) * dt
        x' = x + v' * dt

    Reward is +1 when the updated position reaches 0.45, else -1.  Episodes
    run the full horizon; reaching the goal does not terminate them.
    Features are 12 unit-width Gaussian kernels on a 3 x 4 grid of centers.
    """

    mass: float = 0.2
    friction: float = 0.3
    dt: float = 0.1
    action_clip: float | None = None

    name = "mountain_car"
    state_dim = 2
    feature_dim = 12
    default_horizon = 40
    default_discount = 0.95
    default_step_size = 1.0
    reward_low = -1.0
    reward_high = 1.0

    x_min, x_max = -1.2, 0.5
    v_min, v_max = -1.5, 1.5
    goal_x = 0.45
    # Valley bottom of the sin(3x) landscape on the admissible range.
    start_x = -math.pi / 6.0

    kernel_centers = _kernel_centers()

    def initial_states(self, n: int, rng: np.random.Generator) -> np.ndarray:
        out = np.zeros((n, 2))
        out[:, 0] = self.start_x
        return out

    def features(self, states: np.ndarray) -> np.ndarray:
        """Gaussian kernel activations, each in (0, 1]."""
        s = np.asarray(states, dtype=float).reshape(-1, 2)
        d2 = np.sum((s[:, None, :] - self.kernel_centers[None, :, :]) ** 2, axis=-1)
        phi = np.exp(-0.5 * d2)
        return phi if np.asarray(states).ndim == 2 else phi[0]

    def step(self, states, actions, rng: np.random.Generator | None = None):
        """Advance one step; returns (next_states, rewards).  Deterministic."""
        s = np.asarray(states, dtype=float).reshape(-1, 2)
        a = np.asarray(actions, dtype=float).reshape(-1)
        if self.action_clip is not None:
            a = np.clip(a, -self.action_clip, self.action_clip)
        x, v = s[:, 0], s[:, 1]
        v_next = v + (-9.8 * self.mass * np.cos(3.0 * x) + a / self.mass - self.friction * v) * self.dt
        x_next = x + v_next * self.dt
        x_next = np.clip(x_next, self.x_min, self.x_max)
        v_next = np.clip(v_next, self.v_min, self.v_max)
        rewards = np.where(x_next >= self.goal_x, 1.0, -1.0)
        return np.stack([x_next, v_next], axis=1), rewards


ENVIRONMENTS = {"toy": ToyEnv, "mountain_car": MountainCarEnv}


def make_env(name: str, **kwargs):
    """Instantiate a registered environment by name."""
    if name not in ENVIRONMENTS:
        known = ", ".join(sorted(ENVIRONMENTS))
        raise ValueError(f"unknown environment {name!r} (known: {known})")
    return ENVIRONMENTS[name](**kwargs)
