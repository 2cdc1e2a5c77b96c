"""Command-line entry point.

    oaktd train --env mountain-car --algo oaktd --seeds 0..9 --steps 100000 --out-dir runs/mc
    oaktd dict-stats --out-dir runs/mc
    oaktd grid-eval --out-dir runs/mc --seed 0

Exit codes: 0 success, 1 numeric failure (non-finite parameters), 2 configuration error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import harness
from .config import ALGOS, ConfigError, ExperimentConfig, parse_config, serialize
from .envs import ENV_IDS, grid_states, make_env
from .features import normalize
from .learners import NumericalDivergence
from .vfa import Attentive, Plain, Selective, TileValueApproximator, ValueApproximator

MC_PROBE_STATES = ((-1.0, -0.07), (0.0, 0.0), (0.5, 0.07))


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--env", choices=ENV_IDS)
    p.add_argument("--algo", choices=ALGOS)
    p.add_argument("--seeds", help="seed list '0,1,2' or inclusive range '0..9'")
    p.add_argument("--steps", type=int, dest="total_steps")
    p.add_argument("--eval-every", type=int)
    p.add_argument("--config", dest="config_file", help="flat 'key = value' file")
    p.add_argument("--out-dir", default="out")
    p.add_argument("overrides", nargs="*", metavar="KEY=VALUE")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oaktd", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one or more seeds and write learning_curve.csv")
    _common(p)

    p = sub.add_parser("eval", help="greedy evaluation of trained runs (eval.csv)")
    _common(p)

    p = sub.add_parser("grid-eval", help="Mountain Car returns over the 171x141 grid")
    _common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--cap", type=int)

    p = sub.add_parser("dump-attention", help="attention of probe states over the dictionary")
    _common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--states", help="raw states 'x,v;x,v;...' (default: the Mountain Car probe states)")
    p.add_argument("--w", help="attention weights, e.g. --w=-0.13,-0.04 (default: the learned w)")

    p = sub.add_parser("probe-interference", help="gradient overlap over random state pairs")
    _common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--pairs", type=int, default=1000)

    p = sub.add_parser("dict-stats", help="dictionary size / convergence statistics over runs")
    _common(p)

    p = sub.add_parser("sweep", help="train every env x algo combination into sub-directories")
    _common(p)
    p.add_argument("--envs", default=",".join(ENV_IDS))
    p.add_argument("--algos", default=",".join(ALGOS))
    return parser


def _resolve(args, **extra) -> ExperimentConfig:
    out = Path(args.out_dir)
    flags = dict(env=args.env, algo=args.algo, seeds=args.seeds, total_steps=args.total_steps,
                 eval_every=args.eval_every, **extra)
    path = args.config_file
    if path is None and args.command not in ("train", "sweep") and (out / "config.txt").exists():
        path = out / "config.txt"
    return parse_config(path, args.overrides, **flags)


def _threads(n_jobs: int) -> int:
    limit = os.environ.get("OAKTD_THREADS")
    cap = int(limit) if limit else (os.cpu_count() or 1)
    return max(1, min(cap, n_jobs))


def _train_one(job):
    config, seed = job
    try:
        return harness.train(config, seed)
    except NumericalDivergence as exc:
        return exc


def run_seeds(config: ExperimentConfig):
    jobs = [(config, seed) for seed in config.seeds]
    workers = _threads(len(jobs))
    if workers == 1:
        return [_train_one(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_train_one, jobs))


def save_run(result: harness.TrainResult, out: Path) -> None:
    run_dir = out / "runs" / f"seed_{result.seed}"
    run_dir.mkdir(parents=True, exist_ok=True)
    learner = result.learner
    arrays = {}
    if result.config.algo == "oaktd":
        L = learner.state
        arrays.update(theta=L.theta, theta_bar=L.theta_bar, w=L.w)
    else:
        arrays.update(theta=learner.theta)
    if learner.uses_dictionary:
        arrays["prototypes"] = learner.dictionary.prototypes
        learner.dictionary.to_csv(run_dir / "dictionary.csv")
    # plain .npy files: np.savez embeds zip timestamps and would break byte-identical reruns
    for name, arr in arrays.items():
        np.save(run_dir / f"{name}.npy", arr)
    meta = {
        "seed": result.seed,
        "total_steps": result.config.total_steps,
        "episodes": result.episodes,
        "final_mean_return": harness.mean_final_return(result) if result.log else None,
    }
    if result.dictionary_trace is not None:
        meta.update(dict_size=result.dictionary_trace.size, last_add_step=result.dictionary_trace.last_add_step)
    if result.projection is not None:
        meta["projection_triggers"] = result.projection.trigger_count
    (run_dir / "run.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")


def load_model(config: ExperimentConfig, out: Path, seed: int):
    run_dir = out / "runs" / f"seed_{seed}"
    if not (run_dir / "theta.npy").exists():
        raise ConfigError(f"no trained model for seed {seed} under {out} (run 'train' first)", "seeds")
    data = {p.stem: np.load(p) for p in run_dir.glob("*.npy")}
    if config.algo == "tiletd":
        return TileValueApproximator(data["theta"], config.tile_spec(make_env(config.env).spec.state_dim)), data
    sparsifier = {"oaktd": lambda: Attentive(data["w"]), "oktd": Plain, "osktd": lambda: Selective(config.mu2)}
    V = ValueApproximator(data["theta"], config.sigma2, sparsifier[config.algo](), data["prototypes"])
    return V, data


def _summary(result) -> str:
    parts = [f"seed={result.seed}", f"env={result.config.env}", f"algo={result.config.algo}"]
    if result.log:
        parts.append(f"final_return={result.log[-1].mean_return:.2f}")
    if result.dictionary_trace is not None:
        parts.append(f"dict_size={result.dictionary_trace.size}")
        parts.append(f"last_add={result.dictionary_trace.last_add_step}")
    if result.projection is not None:
        parts.append(f"projections={result.projection.trigger_count}")
    return " ".join(parts)


def cmd_train(config: ExperimentConfig, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(serialize(config))
    results = run_seeds(config)
    failed = [r for r in results if isinstance(r, NumericalDivergence)]
    ok = [r for r in results if not isinstance(r, NumericalDivergence)]
    for seed, res in zip(config.seeds, results):
        if isinstance(res, NumericalDivergence):
            print(f"seed={seed} FAILED: {res}")
        else:
            save_run(res, out)
            print(_summary(res))
    harness.write_csv(out / "learning_curve.csv", harness.LEARNING_CURVE_HEADER, harness.learning_curve_rows(ok))
    return 1 if failed else 0


def cmd_eval(config: ExperimentConfig, out: Path) -> int:
    env = make_env(config.env)
    rows = []
    for seed in config.seeds:
        V, _ = load_model(config, out, seed)
        rec = harness.evaluate(env, V, config.eval_episodes, config.eval_cap,
                               harness.stream(seed, "eval", config.total_steps), step=config.total_steps)
        rows.append((config.algo, config.env, seed, rec.step, rec.mean_return, rec.std_return))
        print(f"seed={seed} mean_return={rec.mean_return:.2f} std_return={rec.std_return:.2f}")
    harness.write_csv(out / "eval.csv", harness.LEARNING_CURVE_HEADER, rows)
    return 0


def cmd_grid_eval(config: ExperimentConfig, out: Path, seed: int | None, cap: int | None) -> int:
    if config.env != "mountain-car":
        raise ConfigError("grid-eval supports mountain-car only", "env")
    env = make_env(config.env)
    seed = config.seeds[0] if seed is None else seed
    V, _ = load_model(config, out, seed)
    returns = harness.grid_eval(env, V, cap or config.eval_cap, harness.stream(seed, "probe", 0))
    states = grid_states(env)
    harness.write_csv(out / "grid_eval.csv", ("position", "velocity", "return"),
                      ((float(x), float(v), float(r)) for (x, v), r in zip(states, returns.ravel())))
    print(f"seed={seed} grid mean_return={returns.mean():.2f}")
    return 0


def _floats(text: str, key: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",")]
    except ValueError:
        raise ConfigError(f"cannot parse {key} {text!r}", key) from None


def cmd_dump_attention(config, out: Path, seed, states_text, w_text) -> int:
    if config.algo != "oaktd":
        raise ConfigError("dump-attention needs an oaktd run", "algo")
    env = make_env(config.env)
    seed = config.seeds[0] if seed is None else seed
    _, data = load_model(config, out, seed)
    w = np.array(_floats(w_text, "w")) if w_text else data["w"]
    if len(w) != env.spec.state_dim:
        raise ConfigError(f"--w needs {env.spec.state_dim} components", "w")
    if states_text:
        raw = [_floats(chunk, "states") for chunk in states_text.split(";")]
    elif config.env == "mountain-car":
        raw = MC_PROBE_STATES
    else:
        raise ConfigError("--states is required outside mountain-car", "states")
    bounds = env.spec.bounds_array
    states = [normalize(s, bounds) for s in raw]
    A = harness.attention_dump(w, data["prototypes"], states)
    harness.write_csv(out / "attention.csv", ("state_index", "dict_index", "weight"),
                      ((i, j, float(A[i, j])) for i in range(A.shape[0]) for j in range(A.shape[1])))
    print(f"seed={seed} attention rows={A.shape[0]} dictionary={A.shape[1]}")
    return 0


def cmd_probe(config, out: Path, seed, n_pairs: int) -> int:
    env = make_env(config.env)
    seed = config.seeds[0] if seed is None else seed
    V, _ = load_model(config, out, seed)
    rng = harness.stream(seed, "probe", 1)
    dim = env.spec.state_dim
    pairs = [(rng.random(dim), rng.random(dim)) for _ in range(n_pairs)]
    records = harness.interference_probe(V, pairs)
    harness.write_csv(out / "interference.csv", ("distance", "overlap"), ((r.distance, r.overlap) for r in records))
    print(f"seed={seed} pairs={len(records)} mean_overlap={np.mean([r.overlap for r in records]):.6g}")
    return 0


def cmd_dict_stats(config, out: Path) -> int:
    if config.algo == "tiletd":
        raise ConfigError("tile coding has no dictionary", "algo")
    traces = []
    for seed in config.seeds:
        path = out / "runs" / f"seed_{seed}" / "run.json"
        if not path.exists():
            raise ConfigError(f"no run for seed {seed} under {out}", "seeds")
        meta = json.loads(path.read_text())
        traces.append(harness.DictionaryTrace(meta["dict_size"], meta["last_add_step"], meta["total_steps"]))
    st = harness.dictionary_stats(traces)
    harness.write_csv(out / "dict_stats.csv", harness.DICT_STATS_HEADER,
                      [(config.env, st.runs, st.size_mean, st.size_std,
                        st.convergence_fraction_mean, st.convergence_fraction_std)])
    print(f"env={config.env} runs={st.runs} size={st.size_mean:.2f}+-{st.size_std:.2f} "
          f"conv_pct={st.convergence_fraction_mean:.3f}+-{st.convergence_fraction_std:.3f}")
    return 0


def cmd_sweep(args) -> int:
    status = 0
    envs = [e.strip() for e in args.envs.split(",") if e.strip()]
    algos = [a.strip() for a in args.algos.split(",") if a.strip()]
    for env in envs:
        for algo in algos:
            flags = dict(env=env, algo=algo, seeds=args.seeds, total_steps=args.total_steps,
                         eval_every=args.eval_every)
            config = parse_config(args.config_file, args.overrides, **flags)
            out = Path(args.out_dir) / env / algo
            status = max(status, cmd_train(config, out))
            if algo != "tiletd" and status == 0:
                cmd_dict_stats(config, out)
    return status


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    out = Path(args.out_dir)
    try:
        if args.command == "sweep":
            return cmd_sweep(args)
        config = _resolve(args)
        if args.command == "train":
            return cmd_train(config, out)
        if args.command == "eval":
            return cmd_eval(config, out)
        if args.command == "grid-eval":
            return cmd_grid_eval(config, out, args.seed, args.cap)
        if args.command == "dump-attention":
            return cmd_dump_attention(config, out, args.seed, args.states, args.w)
        if args.command == "probe-interference":
            return cmd_probe(config, out, args.seed, args.pairs)
        if args.command == "dict-stats":
            return cmd_dict_stats(config, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalDivergence as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 1
    parser.error(f"unknown command {args.command}")


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
