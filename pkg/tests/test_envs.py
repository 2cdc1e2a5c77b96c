import math

import numpy as np
import pytest

from oaktd.envs import (
    Acrobot,
    CartPole,
    MountainCar,
    PuddleWorld,
    grid_states,
    make_env,
    puddle_penalty,
)


@pytest.fixture
def rng():
    return np.random.default_rng(123)


def test_specs():
    expected = {
        "mountain-car": (2, 3, 0.99),
        "acrobot": (4, 3, 0.99),
        "cartpole": (4, 2, 1.0),
        "puddle-world": (2, 5, 0.999),
    }
    for env_id, (dim, actions, gamma) in expected.items():
        spec = make_env(env_id).spec
        assert (spec.state_dim, spec.action_count, spec.gamma) == (dim, actions, gamma)
        assert len(spec.state_bounds) == dim


def test_unknown_env():
    with pytest.raises(ValueError, match="unknown env"):
        make_env("pendulum")


def test_resets(rng):
    for _ in range(100):
        x, v = MountainCar().reset(rng)
        assert -0.6 <= x < -0.4 and v == 0.0
    np.testing.assert_array_equal(Acrobot().reset(rng), np.zeros(4))
    np.testing.assert_array_equal(PuddleWorld().reset(rng), [0.2, 0.4])
    s = CartPole().reset(rng)
    assert s.shape == (4,) and np.all(np.abs(s) <= 0.05)


def test_mountain_car_zero_throttle(rng):
    out = MountainCar().step(np.array([-0.5, 0.0]), 1, rng)
    v = -0.0025 * math.cos(-1.5)
    assert out.next_state[1] == pytest.approx(-0.000176843, abs=1e-9)
    assert out.next_state[0] == pytest.approx(-0.5 + v, abs=1e-15)
    assert out.reward == -1.0 and not out.terminal


def test_mountain_car_goal(rng):
    out = MountainCar().step(np.array([0.499, 0.07]), 2, rng)
    assert out.terminal and out.reward == 0.0
    assert out.next_state[0] == 0.5


def test_mountain_car_left_wall(rng):
    out = MountainCar().step(np.array([-1.19, -0.07]), 0, rng)
    assert out.next_state[0] == -1.2 and out.next_state[1] == 0.0


def test_mountain_car_bounds_long_run():
    env = MountainCar()
    rng = np.random.default_rng(0)
    actions = rng.integers(3, size=200_000)
    s = env.reset(rng)
    for a in actions:
        out = env.step(s, int(a), rng)
        x, v = out.next_state
        assert -1.2 <= x <= 0.5 and -0.07 <= v <= 0.07
        if x == -1.2:
            assert v == 0.0
        assert out.reward in (-1.0, 0.0)
        s = env.reset(rng) if out.terminal else out.next_state


def test_invalid_action(rng):
    with pytest.raises(ValueError):
        MountainCar().step(np.array([-0.5, 0.0]), 3, rng)
    with pytest.raises(ValueError):
        PuddleWorld().lookahead(np.array([0.5, 0.5]), 5)


def test_puddle_rewards():
    assert -1.0 - puddle_penalty((0.3, 0.75)) == pytest.approx(-41.0)
    assert puddle_penalty((0.3, 0.9)) == 0.0
    # on the vertical capsule's axis
    assert puddle_penalty((0.45, 0.6)) == pytest.approx(40.0)
    # half a radius away from the first capsule
    assert puddle_penalty((0.3, 0.8)) == pytest.approx(20.0)


def test_puddle_penalty_geometry():
    rng = np.random.default_rng(5)
    for p in rng.random((2000, 2)):
        pen = puddle_penalty(p)
        assert 0.0 <= pen <= 40.0
        # continuity: a tiny move changes the penalty by at most 400 * move length
        q = p + 1e-6
        assert abs(puddle_penalty(q) - pen) <= 400 * 1.5e-6


def test_puddle_lookahead_and_step(rng):
    env = PuddleWorld()
    out = env.lookahead(np.array([0.5, 0.5]), 0)
    np.testing.assert_array_equal(out.next_state, [0.5, 0.55])
    out = env.lookahead(np.array([0.3, 0.7]), 0)
    assert out.reward == pytest.approx(-41.0)
    out = env.lookahead(np.array([0.96, 0.92]), 0)
    assert out.terminal and out.reward == 0.0
    for _ in range(200):
        out = env.step(rng.random(2), int(rng.integers(5)), rng)
        assert np.all((0 <= out.next_state) & (out.next_state <= 1))
        assert -41.0 <= out.reward <= -1.0 or (out.terminal and out.reward == 0.0)


def test_lookahead_matches_step_for_deterministic_envs(rng):
    for env in (MountainCar(), Acrobot(), CartPole()):
        s = env.reset(rng)
        for a in range(env.spec.action_count):
            o1, o2 = env.lookahead(s, a), env.step(s, a, rng)
            np.testing.assert_array_equal(o1.next_state, o2.next_state)
            assert (o1.reward, o1.terminal) == (o2.reward, o2.terminal)


@pytest.mark.parametrize("env_id", ["mountain-car", "acrobot", "cartpole", "puddle-world"])
def test_determinism_and_bounds(env_id):
    env = make_env(env_id)
    bounds = env.spec.bounds_array

    def rollout(seed):
        rng = np.random.default_rng(seed)
        actions = np.random.default_rng(99).integers(env.spec.action_count, size=3000)
        s = env.reset(rng)
        states = []
        for a in actions:
            out = env.step(s, int(a), rng)
            assert np.all(out.next_state >= bounds[:, 0]) and np.all(out.next_state <= bounds[:, 1])
            states.append(out.next_state)
            s = env.reset(rng) if out.terminal else out.next_state
        return np.array(states)

    a, b = rollout(7), rollout(7)
    assert a.tobytes() == b.tobytes()


def test_acrobot_energy_free_swing():
    env = Acrobot()
    s = env.reset(None)
    # no torque from rest in the downward position: stays put
    out = env.lookahead(s, 1)
    np.testing.assert_allclose(out.next_state, 0.0, atol=1e-12)
    # torque makes it move and the velocities respect their bounds
    for _ in range(500):
        out = env.lookahead(s, 2)
        assert abs(out.next_state[2]) <= 4 * math.pi and abs(out.next_state[3]) <= 9 * math.pi
        if out.terminal:
            assert out.reward == 0.0
            break
        s = out.next_state


def test_cartpole_terminates():
    env = CartPole()
    s = np.zeros(4)
    for t in range(200):
        out = env.lookahead(s, 1)
        assert out.reward == 1.0
        if out.terminal:
            break
        s = out.next_state
    assert out.terminal


def test_grid_states():
    g = grid_states(MountainCar())
    assert len(g) == 24111
    np.testing.assert_allclose(g[0], [-1.2, -0.07])
    np.testing.assert_allclose(g[-1], [0.5, 0.07])
    np.testing.assert_allclose(g[1], [-1.2, -0.069])
    np.testing.assert_allclose(g[141], [-1.19, -0.07])
    with pytest.raises(ValueError):
        grid_states(PuddleWorld())
