"""Ensemble training loop: sample models from the source distribution, roll
out one trajectory per model, keep the worst epsilon-fraction by discounted
return (CVaR subsampling), and feed only that subset to the baseline fit and
the policy update. A warm-up phase runs with the full batch before the
adversarial subsampling switches on.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import baseline as baseline_mod
from . import policy as policy_mod
from .core import (
    STREAM_MODELS,
    STREAM_POLICY_INIT,
    STREAM_ROLLOUT,
    ceil_percentile,
    discounted_return,
    rollout_batch,
    sample_params,
    substream,
    undiscounted_return,
)
from .errors import TrainingError
from .optimizers import PolOptConfig, advantages, policy_step


@dataclass
class TrainConfig:
    niter: int
    epsilon: float
    n_trajectories: int = 240
    warmup_iters: int | None = None   # None -> niter // 2
    gamma: float = 0.99
    horizon: int | None = None        # None -> env default
    seed: int = 0
    polopt: PolOptConfig = field(default_factory=PolOptConfig)

    def validate(self):
        if self.niter < 0:
            raise ValueError("niter must be non-negative")
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError("epsilon must be in (0, 1]")
        if self.n_trajectories < 1:
            raise ValueError("need at least one trajectory per iteration")
        if math.ceil(self.epsilon * self.n_trajectories) < 1:
            raise ValueError("epsilon * n_trajectories must select >= 1 trajectory")
        if self.warmup_iters is not None and self.warmup_iters > self.niter:
            raise ValueError("warmup_iters must not exceed niter")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must be in [0, 1]")
        self.polopt.validate()

    @property
    def effective_warmup(self) -> int:
        return self.niter // 2 if self.warmup_iters is None else self.warmup_iters


@dataclass
class IterationRecord:
    """Per-iteration learning-curve entry.

    mean_return is the undiscounted average over the full batch;
    cvar_threshold is the selection threshold in discounted units. seconds
    stays out of the CSV so repeated runs are byte-identical.
    """

    iteration: int
    mean_return: float
    cvar_threshold: float
    subset_size: int
    policy_kl: float
    seconds: float

    CSV_COLUMNS = ("iteration", "mean_return", "cvar_threshold",
                   "subset_size", "policy_kl")

    def csv_row(self) -> tuple:
        return (self.iteration, self.mean_return, self.cvar_threshold,
                self.subset_size, self.policy_kl)


def percentile_threshold(returns, epsilon: float) -> float:
    """Selection threshold: the k-th smallest return, k = ceil(epsilon * N)."""
    return ceil_percentile(returns, epsilon)


def select_worst(trajectories, returns, threshold: float):
    """All and only trajectories with return <= threshold, original order."""
    return [tau for tau, r in zip(trajectories, returns) if r <= threshold]


def effective_epsilon(config: TrainConfig, iteration: int) -> float:
    """Step schedule: 1 during warm-up, the configured epsilon afterwards."""
    return 1.0 if iteration < config.effective_warmup else config.epsilon


def init_policy_for(env, config: TrainConfig):
    return policy_mod.init_policy(
        env.spec.state_dim, env.spec.action_dim,
        substream(config.seed, STREAM_POLICY_INIT),
    )


def train(env, source, config: TrainConfig, *, initial_policy=None,
          start_iteration: int = 0, workers: int = 1,
          on_iteration=None, on_baseline_fit=None):
    """Run iterations [start_iteration, niter) and return (policy, records).

    Random streams are keyed by absolute iteration index, so a run resumed
    from a snapshot is bit-identical to the same span of a continuous run.
    """
    config.validate()
    horizon = env.spec.default_horizon if config.horizon is None else config.horizon
    policy = initial_policy if initial_policy is not None else init_policy_for(env, config)
    n = config.n_trajectories
    records = []

    for i in range(start_iteration, config.niter):
        t0 = time.perf_counter()
        try:
            eps = effective_epsilon(config, i)
            models = [sample_params(source, substream(config.seed, STREAM_MODELS, i, k))
                      for k in range(n)]
            rngs = [substream(config.seed, STREAM_ROLLOUT, i, k) for k in range(n)]
            trajectories = rollout_batch(env, models, policy, horizon, rngs,
                                         workers=workers)
            disc_returns = [discounted_return(tau, config.gamma)
                            for tau in trajectories]

            threshold = percentile_threshold(disc_returns, eps)
            worst = select_worst(trajectories, disc_returns, threshold)

            if config.polopt.use_baseline:
                if on_baseline_fit is not None:
                    on_baseline_fit(i, worst)
                value_fn = baseline_mod.fit(worst, config.gamma, horizon)
            else:
                value_fn = baseline_mod.LinearBaseline()
            advs = advantages(worst, value_fn, config.gamma, horizon,
                              normalize=config.polopt.normalize_advantages)
            policy, info = policy_step(policy, worst, advs, config.polopt)
        except Exception as exc:
            raise TrainingError(i, str(exc)) from exc

        record = IterationRecord(
            iteration=i,
            mean_return=float(np.mean([undiscounted_return(tau)
                                       for tau in trajectories])),
            cvar_threshold=threshold,
            subset_size=len(worst),
            policy_kl=info.kl,
            seconds=time.perf_counter() - t0,
        )
        records.append(record)
        if on_iteration is not None:
            on_iteration(record, policy)
    return policy, records
