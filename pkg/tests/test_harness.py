import numpy as np
import pytest

from oaktd import harness
from oaktd.config import default_config
from oaktd.envs import MountainCar, grid_states, make_env
from oaktd.features import normalize
from oaktd.learners import StepSchedule
from oaktd.vfa import Plain, ValueApproximator, gradient_overlap

PROBE_STATES = ((-1.0, -0.07), (0.0, 0.0), (0.5, 0.07))


class ConstantV:
    def __init__(self, c=0.0):
        self.c = c

    def value(self, s):
        return self.c

    def values(self, S):
        return np.full(len(S), self.c)


class VelocityV:
    """Value increasing in normalized velocity."""

    def value(self, u):
        return 100.0 * u[1]

    def values(self, U):
        return 100.0 * np.asarray(U)[:, 1]


def test_stream_independence_and_reproducibility():
    a = harness.stream(3, "env").random(5)
    np.testing.assert_array_equal(a, harness.stream(3, "env").random(5))
    assert not np.array_equal(a, harness.stream(3, "policy").random(5))
    assert not np.array_equal(a, harness.stream(4, "env").random(5))
    assert not np.array_equal(harness.stream(3, "eval", 1000).random(5), harness.stream(3, "eval", 2000).random(5))


def test_epsilon_one_is_uniform():
    env = MountainCar()
    rng = np.random.default_rng(0)
    n = 10_000
    counts = np.bincount([harness.epsilon_greedy_action(env, VelocityV(), np.array([-0.5, 0.0]), 1.0, rng)
                          for _ in range(n)], minlength=3)
    sd = np.sqrt(n * (1 / 3) * (2 / 3))
    assert np.all(np.abs(counts - n / 3) < 3 * sd)


def test_greedy_ties_broken_uniformly():
    env = MountainCar()
    rng = np.random.default_rng(1)
    s = np.array([-0.5, 0.0])
    np.testing.assert_array_equal(harness.lookahead_values(env, ConstantV(), s), [-1.0, -1.0, -1.0])
    n = 6000
    counts = np.bincount([harness.epsilon_greedy_action(env, ConstantV(), s, 0.0, rng) for _ in range(n)],
                         minlength=3)
    sd = np.sqrt(n * (1 / 3) * (2 / 3))
    assert np.all(np.abs(counts - n / 3) < 3 * sd)


def test_greedy_prefers_goal_step():
    env = MountainCar()
    # one forward step reaches x >= 0.5 only with the forward action
    s = np.array([0.49, 0.0097])
    q = harness.lookahead_values(env, ConstantV(-10.0), s)
    assert q[2] == 0.0 and q[0] < 0 and q[1] < 0
    rng = np.random.default_rng(0)
    assert {harness.greedy_action(env, ConstantV(-10.0), s, rng) for _ in range(50)} == {2}


def test_greedy_deterministic_argmax_matches_brute_force():
    env = MountainCar()
    bounds = env.spec.bounds_array
    rng = np.random.default_rng(2)
    V = VelocityV()
    for _ in range(100):
        s = np.array([rng.uniform(-1.1, 0.3), rng.uniform(-0.06, 0.06)])
        brute = []
        for a in range(3):
            out = env.lookahead(s, a)
            brute.append(out.reward + (0.0 if out.terminal else env.spec.gamma * V.value(normalize(out.next_state, bounds))))
        expected = int(np.argmax(brute))
        assert sorted(brute)[-1] > sorted(brute)[-2]
        assert all(harness.epsilon_greedy_action(env, V, s, 0.0, rng) == expected for _ in range(5))


def test_epsilon_out_of_range():
    with pytest.raises(ValueError):
        harness.epsilon_greedy_action(MountainCar(), ConstantV(), np.zeros(2), 1.5, np.random.default_rng(0))


def test_evaluate_zero_value_mountain_car():
    env = MountainCar()
    rec = harness.evaluate(env, ConstantV(), 5, 200, np.random.default_rng(0))
    assert rec.mean_return == -200.0 and rec.std_return == 0.0 and rec.episodes == 5
    rec = harness.evaluate(env, ConstantV(), 1, 50, np.random.default_rng(1), step=7)
    assert rec.std_return == 0.0 and rec.step == 7
    with pytest.raises(ValueError):
        harness.evaluate(env, ConstantV(), 1, 0, np.random.default_rng(0))


def test_evaluate_cartpole_bounded_by_cap():
    rec = harness.evaluate(make_env("cartpole"), ConstantV(), 5, 500, np.random.default_rng(0))
    assert 0 < rec.mean_return <= 500


def test_run_episode_terminal_start():
    env = MountainCar()
    assert harness.run_episode(env, ConstantV(), np.array([0.5, 0.0]), 100, np.random.default_rng(0)) == 0.0


def small_config(env="mountain-car", algo="oaktd", **kw):
    base = dict(total_steps=600, eval_every=200, eval_episodes=2, eval_cap=100)
    base.update(kw)
    return default_config(env, algo=algo, **base)


def test_train_zero_steps():
    res = harness.train(small_config(total_steps=0), seed=0)
    assert res.log == []
    L = res.learner.state
    assert len(L.theta) == 0 and np.all(L.w == 0) and res.episodes == 0


@pytest.mark.parametrize("algo", ["oaktd", "oktd", "osktd", "tiletd"])
def test_train_deterministic(algo):
    a = harness.train(small_config(algo=algo), seed=5)
    b = harness.train(small_config(algo=algo), seed=5)
    assert a.log == b.log and len(a.log) == 3
    assert [r.step for r in a.log] == [200, 400, 600]
    np.testing.assert_array_equal(a.learner.theta, b.learner.theta)
    if algo != "tiletd":
        np.testing.assert_array_equal(a.learner.dictionary.prototypes, b.learner.dictionary.prototypes)
    c = harness.train(small_config(algo=algo), seed=6)
    assert not np.array_equal(a.learner.theta, c.learner.theta) or a.log != c.log


def test_evaluation_isolation():
    # the evaluation cadence must not change anything the learner sees
    sparse = harness.train(small_config(total_steps=900, eval_every=900), seed=2)
    dense = harness.train(small_config(total_steps=900, eval_every=100), seed=2)
    assert len(dense.log) == 9 and len(sparse.log) == 1
    for name in ("theta", "theta_bar", "w"):
        np.testing.assert_array_equal(getattr(sparse.learner.state, name), getattr(dense.learner.state, name))
    np.testing.assert_array_equal(sparse.learner.dictionary.prototypes, dense.learner.dictionary.prototypes)
    assert sparse.learner.dictionary.add_steps == dense.learner.dictionary.add_steps
    assert sparse.episodes == dense.episodes
    assert sparse.log[-1] == dense.log[-1]


def test_train_trace_and_projection():
    res = harness.train(small_config(), seed=0)
    assert res.dictionary_trace.size == len(res.learner.dictionary) >= 1
    assert 0 <= res.dictionary_trace.convergence_pct <= 100
    assert res.projection.trigger_count == 0
    assert harness.train(small_config(algo="tiletd"), seed=0).dictionary_trace is None


def test_cartpole_training_cap():
    cfg = default_config("cartpole", total_steps=1200, eval_every=1200, eval_episodes=1, train_cap=3)
    assert harness.train(cfg, seed=0).episodes >= 400


def test_schedules_consumed_per_step():
    cfg = small_config()
    assert cfg.alpha.value(123) == StepSchedule(0.05, 0.99999).value(123)
    assert cfg.epsilon.value(10**4) == 0.9999**10**4


def test_grid_eval_shape_and_goal_column():
    env = MountainCar()
    R = harness.grid_eval(env, ConstantV(), cap=1)
    assert R.shape == (171, 141)
    np.testing.assert_array_equal(R[-1], 0.0)
    assert np.all(R[:-1] >= -1)


def test_grid_eval_cap_bound():
    env = MountainCar()
    # a coarse slice of the grid keeps the test quick while exercising long episodes
    rng = np.random.default_rng(0)
    for s in grid_states(env)[::997]:
        r = harness.run_episode(env, ConstantV(), s, 100, rng)
        assert -100 <= r <= 0


def test_interference_probe():
    rng = np.random.default_rng(0)
    protos = rng.random((10, 2))
    V = ValueApproximator(rng.normal(size=10), 0.3, Plain(), protos)
    s = rng.random(2)
    rec = harness.interference_probe(V, [(s, s)])[0]
    assert rec.overlap == pytest.approx(np.sum(V.features(s) ** 2)) and rec.overlap > 0
    assert rec.distance == 0.0
    pairs = [(rng.random(2), rng.random(2)) for _ in range(200)]
    for rec, (a, b) in zip(harness.interference_probe(V, pairs), pairs):
        assert abs(rec.overlap - sum(x * y for x, y in zip(V.features(a), V.features(b)))) <= 1e-12
        assert rec.distance == pytest.approx(np.linalg.norm(a - b))


def test_plain_overlap_decays_with_distance():
    rng = np.random.default_rng(1)
    protos = rng.random((40, 2))
    V = ValueApproximator(np.ones(40), 0.15, Plain(), protos)
    near, far = [], []
    while len(near) < 100 or len(far) < 100:
        a, b = rng.random(2), rng.random(2)
        dist = np.linalg.norm(a - b)
        if dist < 0.2:
            near.append(gradient_overlap(V, a, b))
        elif dist > 0.8:
            far.append(gradient_overlap(V, a, b))
    assert np.mean(far) < np.mean(near)


def test_attention_dump():
    rng = np.random.default_rng(0)
    protos = rng.random((7, 2))
    states = [rng.random(2) for _ in range(4)]
    np.testing.assert_allclose(harness.attention_dump(np.zeros(2), protos, states), 1 / 7, rtol=1e-14)
    bounds = MountainCar.spec.bounds_array
    probe = [normalize(s, bounds) for s in PROBE_STATES]
    A = harness.attention_dump(np.array([-0.13, -0.04]), protos, probe)
    assert A.shape == (3, 7)
    assert np.all(A > 0)
    np.testing.assert_allclose(A.sum(axis=1), 1.0, atol=1e-12)
    with pytest.raises(ValueError):
        harness.attention_dump(np.zeros(2), np.empty((0, 2)), probe)


def test_dictionary_stats():
    T = harness.DictionaryTrace
    st = harness.dictionary_stats([T(80, 5900, 10**6)])
    assert (st.size_mean, st.size_std, st.convergence_fraction_std) == (80.0, 0.0, 0.0)
    assert st.convergence_fraction_mean == pytest.approx(0.59)
    st = harness.dictionary_stats([T(80, 10, 100), T(82, 30, 100)])
    assert (st.size_mean, st.size_std) == (81.0, 1.0)
    assert (st.convergence_fraction_mean, st.convergence_fraction_std) == (20.0, 10.0)
    st = harness.dictionary_stats([T(5, 1, 10)] * 3)
    assert st.size_std == 0.0 and st.runs == 3
    with pytest.raises(ValueError):
        harness.dictionary_stats([])


def test_write_csv(tmp_path):
    path = tmp_path / "sub" / "x.csv"
    harness.write_csv(path, ("a", "b"), [(1, 0.1), (2, -200.0)])
    assert path.read_text() == "a,b\n1,0.1\n2,-200.0\n"
