"""End-to-end smoke runs on both environments."""

import numpy as np

from ensemblerl import (
    GridAxis,
    GridSpec,
    TrainConfig,
    grid_evaluate,
    make_env,
    train,
)
from ensemblerl.optimizers import PolOptConfig


def test_hopper_trains_and_evaluates():
    env = make_env("spring_hopper")
    src = env.default_source()
    cfg = TrainConfig(niter=3, epsilon=0.5, n_trajectories=8, warmup_iters=1,
                      gamma=0.99, horizon=80, seed=0,
                      polopt=PolOptConfig(method="natural", fvp_subsample=8))
    policy, records = train(env, src, cfg)
    assert len(records) == 3
    assert all(np.isfinite(r.mean_return) for r in records)
    # hopper returns are non-negative by construction
    assert all(r.mean_return >= 0.0 for r in records)

    grid = GridSpec(axes=[GridAxis("k", 40.0, 60.0, 3)],
                    fixed={"m": 1.0, "c": 1.0}, episodes=3)
    rows, _ = grid_evaluate(policy, env, grid, seed=1)
    assert len(rows) == 3
    assert all(np.isfinite(r["mean_return"]) for r in rows)


def test_hopper_crash_terminates_episodes():
    env = make_env("spring_hopper")
    src = env.default_source()
    # heavy body on the softest spring: sampled rollouts should include
    # crash terminations under a random initial policy
    from ensemblerl.core import ModelParams, rollout, substream
    from ensemblerl.policy import init_policy

    heavy = ModelParams(("m", "k", "c"), np.array([1.5, 30.0, 0.2]))
    policy = init_policy(2, 1, substream(0, 0), hidden=(8, 8))
    lengths = []
    for k in range(20):
        tau = rollout(env, heavy, policy, 500, substream(0, 2, 0, k))
        lengths.append(len(tau))
    assert min(lengths) < 500  # at least one crash
