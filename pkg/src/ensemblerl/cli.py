"""Command-line front end.

Subcommands: train, eval, adapt, sweep-epsilon. Runs are driven by a JSON
config file; --seed/--out/--workers override the matching top-level fields,
and ENSEMBLERL_WORKERS overrides --workers. Every run writes its CSV tables,
rendered PNG figures, and a metadata file sufficient to reproduce it.

Exit codes: 0 success, 2 config error, 1 runtime error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import figures, reports
from . import trainer as trainer_mod
from .adaptation import AdaptConfig, TargetDomain, adapt_loop
from .core import ModelParams, SourceDistribution
from .envs import make_env
from .errors import ConfigError, EnsembleRlError
from .evaluation import (
    GridAxis,
    GridSpec,
    ReturnStats,
    grid_evaluate,
    return_statistics,
)
from .optimizers import PolOptConfig
from .trainer import TrainConfig

WORKERS_ENV_VAR = "ENSEMBLERL_WORKERS"


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

def _require(section: dict, key: str, path: str):
    if key not in section:
        raise ConfigError(f"{path}.{key}" if path else key, "missing required field")
    return section[key]


def _check_keys(section: dict, allowed, path: str):
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(f"{path}.{sorted(unknown)[0]}", "unknown field")


def load_config(path: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError("config", f"file not found: {path}")
    try:
        config = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON: {exc}") from exc
    if not isinstance(config, dict):
        raise ConfigError("config", "top level must be an object")
    return config


def parse_polopt(section: dict, path: str) -> PolOptConfig:
    allowed = ("method", "learning_rate", "kl_step", "cg_iters", "cg_damping",
               "backtrack_ratio", "max_backtracks", "fvp_subsample",
               "use_baseline", "normalize_advantages")
    _check_keys(section, allowed, path)
    try:
        cfg = PolOptConfig(**section)
        cfg.validate()
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from exc
    return cfg


def parse_train(section: dict, path: str, seed: int) -> TrainConfig:
    allowed = ("niter", "epsilon", "n_trajectories", "warmup_iters", "gamma",
               "horizon", "polopt", "checkpoint_every")
    _check_keys(section, allowed, path)
    niter = _require(section, "niter", path)
    epsilon = _require(section, "epsilon", path)
    polopt = parse_polopt(section.get("polopt", {}), f"{path}.polopt")
    try:
        cfg = TrainConfig(
            niter=int(niter),
            epsilon=float(epsilon),
            n_trajectories=int(section.get("n_trajectories", 240)),
            warmup_iters=(None if section.get("warmup_iters") is None
                          else int(section["warmup_iters"])),
            gamma=float(section.get("gamma", 0.99)),
            horizon=(None if section.get("horizon") is None
                     else int(section["horizon"])),
            seed=seed,
            polopt=polopt,
        )
        cfg.validate()
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from exc
    return cfg


def parse_grid(section: dict, path: str) -> GridSpec:
    _check_keys(section, ("axes", "fixed", "episodes"), path)
    axes_raw = _require(section, "axes", path)
    if not isinstance(axes_raw, list) or not axes_raw:
        raise ConfigError(f"{path}.axes", "must be a non-empty list")
    axes = []
    for i, a in enumerate(axes_raw):
        _check_keys(a, ("name", "low", "high", "points"), f"{path}.axes[{i}]")
        axes.append(GridAxis(
            name=_require(a, "name", f"{path}.axes[{i}]"),
            low=float(_require(a, "low", f"{path}.axes[{i}]")),
            high=float(_require(a, "high", f"{path}.axes[{i}]")),
            points=int(_require(a, "points", f"{path}.axes[{i}]")),
        ))
    return GridSpec(axes=axes, fixed=dict(section.get("fixed", {})),
                    episodes=int(section.get("episodes", 20)))


def resolve_env(config: dict):
    name = _require(config, "env", "")
    try:
        return make_env(name)
    except ValueError as exc:
        raise ConfigError("env", str(exc)) from exc


def resolve_source(config: dict, env) -> SourceDistribution:
    raw = config.get("source", "default")
    if raw == "default":
        return env.default_source()
    try:
        return SourceDistribution.from_dict(raw)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError("source", str(exc)) from exc


def resolve_common(config: dict, args):
    seed = args.seed if args.seed is not None else int(config.get("seed", 0))
    out = args.out if args.out is not None else config.get("out_dir")
    if out is None:
        raise ConfigError("out_dir", "missing (set out_dir or pass --out)")
    if os.environ.get(WORKERS_ENV_VAR):
        workers = int(os.environ[WORKERS_ENV_VAR])
    elif args.workers is not None:
        workers = args.workers
    elif config.get("workers") is not None:
        workers = int(config["workers"])
    else:
        workers = os.cpu_count() or 1
    out_path = Path(out)
    out_path.mkdir(parents=True, exist_ok=True)
    return seed, out_path, workers


def _progress(every: int = 20):
    def hook(record, policy):
        if record.iteration % every == 0:
            print(f"  iter {record.iteration:4d}  mean_return "
                  f"{record.mean_return:10.2f}  subset {record.subset_size}",
                  file=sys.stderr)
    return hook


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_train(config: dict, args) -> int:
    env = resolve_env(config)
    seed, out, workers = resolve_common(config, args)
    source = resolve_source(config, env)
    section = _require(config, "train", "")
    train_cfg = parse_train(section, "train", seed)
    checkpoint_every = int(section.get("checkpoint_every", 0))
    progress = _progress()

    def on_iteration(record, policy):
        progress(record, policy)
        if checkpoint_every > 0 and (record.iteration + 1) % checkpoint_every == 0:
            reports.save_checkpoint(out / f"policy_iter_{record.iteration:05d}.json",
                                    policy, env.name)

    policy, records = trainer_mod.train(env, source, train_cfg,
                                        workers=workers,
                                        on_iteration=on_iteration)
    reports.write_records_csv(out / "learning_curve.csv", records)
    reports.save_checkpoint(out / "policy.json", policy, env.name)
    reports.write_metadata(out / "metadata.json", config, seed,
                           extra={"command": "train", "workers": workers,
                                  "total_seconds": sum(r.seconds for r in records)})
    figures.save_learning_curve(records, out / "learning_curve.png")
    print(f"train: {len(records)} iterations -> {out}", file=sys.stderr)
    return 0


def cmd_eval(config: dict, args) -> int:
    seed, out, workers = resolve_common(config, args)
    section = _require(config, "eval", "")
    _check_keys(section, ("checkpoint", "grid", "gamma"), "eval")
    checkpoint = _require(section, "checkpoint", "eval")
    try:
        env_name, policy = reports.load_checkpoint(checkpoint)
    except (OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
        raise ConfigError("eval.checkpoint", str(exc)) from exc
    env = make_env(env_name)
    grid = parse_grid(_require(section, "grid", "eval"), "eval.grid")
    try:
        grid.validate(env)
    except ValueError as exc:
        raise ConfigError("eval.grid", str(exc)) from exc

    gamma = float(section.get("gamma", 1.0))
    rows, per_cell = grid_evaluate(policy, env, grid, gamma=gamma, seed=seed,
                                   workers=workers)
    stats = return_statistics(np.concatenate(per_cell))
    reports.write_grid_csv(out / "grid_returns.csv", grid, rows)
    reports.write_csv(out / "return_stats.csv", ReturnStats.CSV_COLUMNS,
                      [stats.csv_row()])
    reports.write_metadata(out / "metadata.json", config, seed,
                           extra={"command": "eval", "workers": workers})
    figures.save_grid_figure(rows, [a.name for a in grid.axes],
                             out / "grid_returns.png")
    print(f"eval: {len(rows)} grid cells -> {out}", file=sys.stderr)
    return 0


def cmd_adapt(config: dict, args) -> int:
    env = resolve_env(config)
    seed, out, workers = resolve_common(config, args)
    source = resolve_source(config, env)
    section = _require(config, "adapt", "")
    allowed = ("rounds", "n_samples", "sampling", "sigma_lik",
               "sigma_floor_frac", "target_params", "disclose_target", "train")
    _check_keys(section, allowed, "adapt")
    target_raw = _require(section, "target_params", "adapt")
    try:
        target_params = ModelParams.from_dict(target_raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError("adapt.target_params", str(exc)) from exc
    train_cfg = parse_train(_require(section, "train", "adapt"),
                            "adapt.train", seed)
    try:
        adapt_cfg = AdaptConfig(
            rounds=int(_require(section, "rounds", "adapt")),
            train=train_cfg,
            n_samples=int(section.get("n_samples", 1000)),
            sampling=section.get("sampling", "prior"),
            sigma_lik=section.get("sigma_lik"),
            sigma_floor_frac=float(section.get("sigma_floor_frac", 0.01)),
            seed=seed,
        )
        adapt_cfg.validate()
    except (TypeError, ValueError) as exc:
        raise ConfigError("adapt", str(exc)) from exc

    target = TargetDomain(env, target_params)
    result = adapt_loop(target, env, source, adapt_cfg, workers=workers)

    round_dicts = [{"round": 0, "source": source.as_dict()}]
    for rec in result.round_records:
        round_dicts.append({
            "round": rec.round_index + 1,
            "source": rec.source.as_dict(),
            "posterior_ess": rec.ess,
            "target_return": rec.target_return,
        })
    (out / "rounds.json").write_text(json.dumps(round_dicts, indent=2) + "\n",
                                     encoding="utf-8")
    reports.write_csv(out / "round_returns.csv", ("round", "target_return"),
                      [(rec.round_index + 1, rec.target_return)
                       for rec in result.round_records])
    if result.policy is not None:
        reports.save_checkpoint(out / "policy.json", result.policy, env.name)
    extra = {"command": "adapt", "workers": workers,
             "target_episodes": target.episodes_run}
    if section.get("disclose_target", False):
        extra["target_params"] = target_params.as_dict()
    reports.write_metadata(out / "metadata.json", config, seed, extra=extra)
    figures.save_adaptation_figure(
        result.sources, result.target_returns, out / "adaptation.png",
        true_params=target_params.as_dict() if section.get("disclose_target")
        else None)
    print(f"adapt: {adapt_cfg.rounds} rounds -> {out}", file=sys.stderr)
    return 0


def cmd_sweep_epsilon(config: dict, args) -> int:
    env = resolve_env(config)
    seed, out, workers = resolve_common(config, args)
    source = resolve_source(config, env)
    section = _require(config, "sweep", "")
    _check_keys(section, ("epsilons", "include_max_likelihood", "train", "grid"),
                "sweep")
    epsilons = _require(section, "epsilons", "sweep")
    if not isinstance(epsilons, list) or not epsilons:
        raise ConfigError("sweep.epsilons", "must be a non-empty list")
    base_cfg = parse_train(dict(_require(section, "train", "sweep"), epsilon=1.0),
                           "sweep.train", seed)
    grid = parse_grid(_require(section, "grid", "sweep"), "sweep.grid")
    try:
        grid.validate(env)
    except ValueError as exc:
        raise ConfigError("sweep.grid", str(exc)) from exc

    # All settings share the warm-up phase (effective epsilon is 1 there),
    # so it is trained once and each epsilon branches off the snapshot.
    warmup = base_cfg.effective_warmup
    warmup_cfg = _with_overrides(base_cfg, niter=warmup, warmup_iters=warmup)
    warm_policy = None
    if warmup > 0:
        print(f"sweep: warm-up phase ({warmup} iterations)", file=sys.stderr)
        warm_policy, _ = trainer_mod.train(env, source, warmup_cfg,
                                           workers=workers)

    def evaluate(policy) -> ReturnStats:
        _, per_cell = grid_evaluate(policy, env, grid, seed=seed, workers=workers)
        return return_statistics(np.concatenate(per_cell))

    rows = []
    for eps in epsilons:
        branch_cfg = _with_overrides(base_cfg, epsilon=float(eps),
                                     warmup_iters=warmup)
        print(f"sweep: epsilon={eps}", file=sys.stderr)
        policy, _ = trainer_mod.train(env, source, branch_cfg,
                                      initial_policy=warm_policy,
                                      start_iteration=warmup, workers=workers)
        reports.save_checkpoint(out / f"policy_eps_{eps}.json", policy, env.name)
        rows.append({"epsilon": eps, **_stats_dict(evaluate(policy))})

    if section.get("include_max_likelihood", False):
        print("sweep: max-likelihood single-model baseline", file=sys.stderr)
        ml_cfg = _with_overrides(base_cfg, epsilon=1.0,
                                 warmup_iters=base_cfg.niter)
        ml_policy, _ = trainer_mod.train(env, source.point(), ml_cfg,
                                         workers=workers)
        reports.save_checkpoint(out / "policy_max_lik.json", ml_policy, env.name)
        rows.append({"epsilon": "max_lik", **_stats_dict(evaluate(ml_policy))})

    columns = ("epsilon",) + ReturnStats.CSV_COLUMNS
    reports.write_csv(out / "epsilon_sweep.csv", columns,
                      [tuple(row[c] for c in columns) for row in rows])
    reports.write_metadata(out / "metadata.json", config, seed,
                           extra={"command": "sweep-epsilon", "workers": workers})
    figures.save_sweep_figure(rows, out / "epsilon_sweep.png")
    print(f"sweep-epsilon: {len(rows)} rows -> {out}", file=sys.stderr)
    return 0


def _stats_dict(stats: ReturnStats) -> dict:
    d = {"mean": stats.mean, "std": stats.std}
    d.update({f"p{q}": v for q, v in stats.percentiles.items()})
    return d


def _with_overrides(cfg: TrainConfig, **overrides) -> TrainConfig:
    fields = dict(
        niter=cfg.niter, epsilon=cfg.epsilon,
        n_trajectories=cfg.n_trajectories, warmup_iters=cfg.warmup_iters,
        gamma=cfg.gamma, horizon=cfg.horizon, seed=cfg.seed, polopt=cfg.polopt,
    )
    fields.update(overrides)
    return TrainConfig(**fields)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "adapt": cmd_adapt,
    "sweep-epsilon": cmd_sweep_epsilon,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ensemblerl",
        description="Train, evaluate, and adapt ensemble-robust policies.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to JSON run config")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--out", default=None, help="override the output directory")
        p.add_argument("--workers", type=int, default=None,
                       help=f"rollout parallelism (env {WORKERS_ENV_VAR} overrides)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        return COMMANDS[args.command](config, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except EnsembleRlError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
