"""Training loop, greedy evaluation and the analysis probes.

Control uses an epsilon-greedy policy over a one-step lookahead with the
task's mean model: the greedy action maximizes r(s, a) + gamma * V(s').
All randomness is derived from one master seed per run (see ``stream``).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .dictionary import Dictionary
from .envs import Env, grid_states, make_env
from .features import Normalizer, attention
from .learners import (
    KernelTDLearner,
    NumericalDivergence,
    OAKTDLearner,
    ProjectionSet,
    TileTDLearner,
    Transition,
    mstde,
)
from .vfa import gradient_overlap

# Fixed indices for the per-run random streams; new streams get new indices so
# existing ones never shift.
STREAMS = {"env": 0, "policy": 1, "dropout": 2, "eval": 3, "probe": 4}


def stream(seed: int, name: str, *extra: int) -> np.random.Generator:
    """Independent generator for one component of run ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(STREAMS[name], *extra)))


@dataclass(frozen=True)
class EvalRecord:
    step: int
    mean_return: float
    std_return: float
    episodes: int


@dataclass(frozen=True)
class DictionaryTrace:
    size: int
    last_add_step: int
    total_steps: int

    @property
    def convergence_pct(self) -> float:
        return 100.0 * self.last_add_step / self.total_steps if self.total_steps else 0.0


@dataclass(frozen=True)
class DictionaryStats:
    runs: int
    size_mean: float
    size_std: float
    convergence_fraction_mean: float
    convergence_fraction_std: float


@dataclass(frozen=True)
class InterferenceRecord:
    """Gradient overlap of a state pair; the value-error factor of interference is not computed."""

    state_pair: tuple
    overlap: float
    distance: float


@dataclass
class TrainResult:
    config: ExperimentConfig
    seed: int
    log: list[EvalRecord]
    learner: object
    projection: ProjectionSet | None = None
    dictionary_trace: DictionaryTrace | None = None
    episodes: int = 0


def make_learner(config: ExperimentConfig, env: Env):
    dim = env.spec.state_dim
    if config.algo == "tiletd":
        return TileTDLearner(config.tile_spec(dim), config.beta), None
    dictionary = Dictionary(dim, config.mu1, config.sigma1)
    if config.algo == "oaktd":
        W = ProjectionSet(config.radius)
        return OAKTDLearner(dictionary, config.sigma2, config.alpha, config.beta, W), W
    mu2 = config.mu2 if config.algo == "osktd" else None
    return KernelTDLearner(dictionary, config.sigma2, config.beta, mu2=mu2), None


_NORMALIZERS: dict[str, Normalizer] = {}


def _normalizer(env: Env) -> Normalizer:
    norm = _NORMALIZERS.get(env.spec.env_id)
    if norm is None:
        norm = _NORMALIZERS[env.spec.env_id] = Normalizer(env.spec.state_bounds)
    return norm


def lookahead_values(env: Env, V, s) -> np.ndarray:
    """r(s, a) + gamma * V(s') for every action under the mean model."""
    norm = _normalizer(env)
    outcomes = [env.lookahead(s, a) for a in range(env.spec.action_count)]
    q = np.array([o.reward for o in outcomes])
    live = [i for i, o in enumerate(outcomes) if not o.terminal]
    if live and V is not None:
        succ = norm(np.array([outcomes[i].next_state for i in live]))
        q[live] += env.spec.gamma * V.values(succ)
    return q


def greedy_action(env: Env, V, s, rng: np.random.Generator) -> int:
    q = lookahead_values(env, V, s)
    best = np.flatnonzero(q == q.max())
    if len(best) == 1:
        return int(best[0])
    return int(best[rng.integers(len(best))])


def epsilon_greedy_action(env: Env, V, s, epsilon: float, rng: np.random.Generator) -> int:
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    if rng.random() < epsilon:
        return int(rng.integers(env.spec.action_count))
    return greedy_action(env, V, s, rng)


def run_episode(env: Env, V, s, cap: int, rng: np.random.Generator) -> float:
    """Undiscounted return of one greedy episode from ``s``, truncated after ``cap`` steps."""
    if env.is_terminal(s):
        return 0.0
    total = 0.0
    for _ in range(cap):
        out = env.step(s, greedy_action(env, V, s, rng), rng)
        total += out.reward
        if out.terminal:
            break
        s = out.next_state
    return total


def evaluate(env: Env, V, episodes: int, cap: int, rng: np.random.Generator, step: int = 0) -> EvalRecord:
    if cap <= 0:
        raise ValueError("evaluation cap must be positive")
    returns = [run_episode(env, V, env.reset(rng), cap, rng) for _ in range(episodes)]
    return EvalRecord(step, float(np.mean(returns)), float(np.std(returns)), episodes)


def train(config: ExperimentConfig, seed: int, progress=None) -> TrainResult:
    """Run ``config.total_steps`` environment steps of learning and periodic evaluation."""
    env = make_env(config.env)
    spec = env.spec
    normalize = _normalizer(env)
    env_rng, policy_rng = stream(seed, "env"), stream(seed, "policy")
    learner, W = make_learner(config, env)
    cap = config.train_cap
    log: list[EvalRecord] = []
    episodes = 0

    s = env.reset(env_rng)
    u = normalize(s)
    ep_len = 0
    for t in range(config.total_steps):
        V = learner.value_approximator() if not learner.uses_dictionary or len(learner.dictionary) else None
        a = epsilon_greedy_action(env, V, s, config.epsilon.value(t), policy_rng)
        out = env.step(s, a, env_rng)
        u_next = normalize(out.next_state)
        learner.observe(Transition(u, out.reward, u_next, out.terminal, spec.gamma), t)
        ep_len += 1
        if out.terminal or (cap and ep_len >= cap):
            episodes += 1
            s = env.reset(env_rng)
            u = normalize(s)
            ep_len = 0
        else:
            s, u = out.next_state, u_next
        if (t + 1) % config.eval_every == 0:
            if not learner.is_finite():
                raise NumericalDivergence(t, "learner parameters")
            rec = evaluate(env, learner.snapshot(), config.eval_episodes, config.eval_cap,
                           stream(seed, "eval", t + 1), step=t + 1)
            log.append(rec)
            if progress is not None:
                progress(rec)
    if not learner.is_finite():
        raise NumericalDivergence(config.total_steps, "learner parameters")

    trace = None
    if learner.uses_dictionary:
        d = learner.dictionary
        trace = DictionaryTrace(len(d), d.last_add_step or 0, config.total_steps)
    return TrainResult(config, seed, log, learner, W, trace, episodes)


def grid_eval(env: Env, V, cap: int, rng: np.random.Generator | None = None) -> np.ndarray:
    """Greedy return from every Mountain Car grid state, shape (171, 141)."""
    rng = rng if rng is not None else np.random.default_rng(0)
    states = grid_states(env)
    returns = np.array([run_episode(env, V, s, cap, rng) for s in states])
    return returns.reshape(171, 141)


def interference_probe(V, state_pairs) -> list[InterferenceRecord]:
    records = []
    for s, s_hat in state_pairs:
        s, s_hat = np.asarray(s, dtype=float), np.asarray(s_hat, dtype=float)
        records.append(InterferenceRecord((s, s_hat), gradient_overlap(V, s, s_hat), float(np.linalg.norm(s - s_hat))))
    return records


def attention_dump(w, prototypes, states) -> np.ndarray:
    """Attention of each (normalized) state over the dictionary, one row per state."""
    prototypes = np.atleast_2d(prototypes)
    if len(prototypes) == 0:
        raise ValueError("attention over an empty dictionary")
    return np.array([attention(w, s, prototypes) for s in states])


def dictionary_stats(traces) -> DictionaryStats:
    """Mean and population std of final size and last-insertion percentage."""
    traces = list(traces)
    if not traces:
        raise ValueError("dictionary_stats needs at least one run")
    sizes = np.array([tr.size for tr in traces], dtype=float)
    pct = np.array([tr.convergence_pct for tr in traces])
    return DictionaryStats(len(traces), float(sizes.mean()), float(sizes.std()), float(pct.mean()), float(pct.std()))


def mstde_estimate(V, transitions) -> float:
    return mstde(V, transitions)


# CSV output


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


def learning_curve_rows(results):
    for res in results:
        for rec in res.log:
            yield (res.config.algo, res.config.env, res.seed, rec.step, rec.mean_return, rec.std_return)


LEARNING_CURVE_HEADER = ("algo", "env", "seed", "step", "mean_return", "std_return")
DICT_STATS_HEADER = ("env", "runs", "size_mean", "size_std", "conv_pct_mean", "conv_pct_std")


def mean_final_return(result: TrainResult) -> float:
    return result.log[-1].mean_return if result.log else math.nan
