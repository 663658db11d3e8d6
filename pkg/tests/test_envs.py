"""Dynamics, rewards, features, and the linear controller."""

import math

import numpy as np
import pytest

from pgpe import MountainCarEnv, ToyEnv, act, make_env


class TestToyEnv:
    def test_initial_state_distribution(self):
        env = ToyEnv()
        s = env.initial_states(100_000, np.random.default_rng(2))
        assert abs(s.mean()) < 0.02
        assert abs(s.var() - 1.0) < 0.05

    def test_initial_state_determinism(self):
        env = ToyEnv()
        a = env.initial_states(5, np.random.default_rng(9))
        b = env.initial_states(5, np.random.default_rng(9))
        np.testing.assert_array_equal(a, b)

    def test_reward_at_origin(self):
        env = ToyEnv()
        _, r = env.step(np.array([[0.0]]), np.array([0.0]), np.random.default_rng(0))
        assert r[0] == 2.0

    def test_reward_off_origin(self):
        env = ToyEnv()
        _, r = env.step(np.array([[1.0]]), np.array([-1.0]), np.random.default_rng(0))
        assert r[0] == pytest.approx(math.exp(-1.0) + 1.0, rel=1e-12)

    def test_noise_free_transition(self):
        env = ToyEnv(noise_std=0.0)
        s_next, _ = env.step(np.array([[0.3]]), np.array([0.2]), np.random.default_rng(0))
        assert s_next[0, 0] == pytest.approx(0.5, abs=1e-15)

    def test_reward_range(self):
        env = ToyEnv()
        rng = np.random.default_rng(13)
        # Strictly inside (1, 2] where the Gaussian factor is representable.
        s = rng.uniform(-4, 4, size=(1000, 1))
        a = rng.uniform(-4, 4, size=1000)
        _, r = env.step(s, a, rng)
        assert np.all(r > 1.0)
        assert np.all(r <= 2.0)
        # Extreme states: the factor underflows below double precision and
        # the reward rounds to its open lower bound.
        _, r = env.step(np.array([[50.0]]), np.array([0.0]), rng)
        assert r[0] == 1.0

    def test_fixed_initial_state_hook(self):
        env = ToyEnv(fixed_initial_state=0.0)
        s = env.initial_states(4, np.random.default_rng(0))
        np.testing.assert_array_equal(s, np.zeros((4, 1)))


class TestMountainCar:
    def test_equilibrium_at_valley(self):
        # cos(3x) = 0 at the valley, so gravity vanishes.
        env = MountainCarEnv()
        x0 = -math.pi / 6
        s_next, _ = env.step(np.array([[x0, 0.0]]), np.array([0.0]))
        assert s_next[0, 0] == pytest.approx(x0, abs=1e-12)
        assert s_next[0, 1] == pytest.approx(0.0, abs=1e-12)

    def test_step_from_origin(self):
        # Hand evaluation: v' = (-9.8 * 0.2 * cos 0) * 0.1 = -0.196,
        # then x' = v' * 0.1 = -0.0196.
        env = MountainCarEnv()
        s_next, r = env.step(np.array([[0.0, 0.0]]), np.array([0.0]))
        assert s_next[0, 1] == pytest.approx(-0.196, rel=1e-12)
        assert s_next[0, 0] == pytest.approx(-0.0196, rel=1e-12)
        assert r[0] == -1.0

    def test_velocity_updates_before_position(self):
        # The position update must use the new velocity, not the old one.
        env = MountainCarEnv()
        s = np.array([[0.1, 0.5]])
        a = np.array([0.3])
        v_new = 0.5 + (-9.8 * 0.2 * math.cos(0.3) + 0.3 / 0.2 - 0.3 * 0.5) * 0.1
        s_next, _ = env.step(s, a)
        assert s_next[0, 1] == pytest.approx(v_new, rel=1e-12)
        assert s_next[0, 0] == pytest.approx(0.1 + v_new * 0.1, rel=1e-12)

    def test_goal_boundary_inclusive(self):
        env = MountainCarEnv()
        # Pick velocity so that x lands exactly on the goal line.
        v_needed = None
        x0 = 0.40
        # v' solves x0 + v' * dt = 0.45 -> v' = 0.5; invert the velocity update.
        v_prime = 0.5
        v0 = (v_prime + (9.8 * 0.2 * math.cos(3 * x0)) * 0.1) / (1 - 0.3 * 0.1)
        s_next, r = env.step(np.array([[x0, v0]]), np.array([0.0]))
        assert s_next[0, 0] == pytest.approx(0.45, abs=1e-12)
        assert r[0] == 1.0
        del v_needed

    def test_rewards_are_binary(self):
        env = MountainCarEnv()
        rng = np.random.default_rng(3)
        s = np.column_stack([rng.uniform(-1.2, 0.5, 500), rng.uniform(-1.5, 1.5, 500)])
        _, r = env.step(s, rng.normal(size=500) * 2)
        assert set(np.unique(r)) <= {-1.0, 1.0}

    def test_state_clamped_to_bounds(self):
        env = MountainCarEnv()
        rng = np.random.default_rng(5)
        s = np.column_stack([rng.uniform(-1.2, 0.5, 1000), rng.uniform(-1.5, 1.5, 1000)])
        s_next, _ = env.step(s, rng.normal(size=1000) * 10)
        assert np.all(s_next[:, 0] >= env.x_min) and np.all(s_next[:, 0] <= env.x_max)
        assert np.all(s_next[:, 1] >= env.v_min) and np.all(s_next[:, 1] <= env.v_max)

    def test_action_clip_hook(self):
        env = MountainCarEnv(action_clip=0.5)
        clipped, _ = env.step(np.array([[0.0, 0.0]]), np.array([10.0]))
        unclipped, _ = MountainCarEnv().step(np.array([[0.0, 0.0]]), np.array([0.5]))
        np.testing.assert_allclose(clipped, unclipped)

    def test_initial_state_is_valley(self):
        env = MountainCarEnv()
        s = env.initial_states(3, np.random.default_rng(0))
        np.testing.assert_allclose(s[:, 0], -math.pi / 6)
        np.testing.assert_array_equal(s[:, 1], 0.0)


class TestCarFeatures:
    def test_kernel_at_own_center(self):
        env = MountainCarEnv()
        phi = env.features(np.array([-1.2, -1.5]))
        assert phi.shape == (12,)
        assert phi[0] == 1.0  # first center in row-major order

    def test_kernel_at_far_center(self):
        # Distance from (-1.2, -1.5) to center (0.5, 1.5): sqrt(1.7^2 + 3^2).
        env = MountainCarEnv()
        phi = env.features(np.array([-1.2, -1.5]))
        far = list(map(tuple, env.kernel_centers)).index((0.5, 1.5))
        assert phi[far] == pytest.approx(math.exp(-(1.7**2 + 3.0**2) / 2), rel=1e-12)

    def test_center_grid_ordering(self):
        env = MountainCarEnv()
        expected = [(x, v) for x in (-1.2, -0.35, 0.5) for v in (-1.5, -0.5, 0.5, 1.5)]
        assert list(map(tuple, env.kernel_centers)) == expected

    def test_range(self):
        env = MountainCarEnv()
        rng = np.random.default_rng(7)
        s = np.column_stack([rng.uniform(-1.2, 0.5, 1000), rng.uniform(-1.5, 1.5, 1000)])
        phi = env.features(s)
        assert np.all(phi > 0.0) and np.all(phi <= 1.0)


class TestController:
    def test_zero_parameters(self):
        assert act(np.zeros(12), np.random.default_rng(0).uniform(size=12)) == 0.0

    def test_scalar_product(self):
        assert act(np.array([0.5]), np.array([-2.0])) == -1.0

    def test_unit_vector_selects_feature(self):
        env = MountainCarEnv()
        phi = env.features(np.array([-0.3, 0.4]))
        for j in range(12):
            e = np.zeros(12)
            e[j] = 1.0
            assert act(e, phi) == phi[j]

    def test_linearity(self):
        rng = np.random.default_rng(19)
        t1, t2, phi = rng.normal(size=(3, 12))
        a, b = 0.7, -1.3
        lhs = act(a * t1 + b * t2, phi)
        rhs = a * act(t1, phi) + b * act(t2, phi)
        assert abs(lhs - rhs) < 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimensions"):
            act(np.zeros(3), np.zeros(2))


def test_registry():
    assert isinstance(make_env("toy"), ToyEnv)
    assert isinstance(make_env("mountain_car"), MountainCarEnv)
    with pytest.raises(ValueError, match="unknown environment"):
        make_env("cartpole")
