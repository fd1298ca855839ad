"""Adapting the source distribution to a target domain.

One round = train on the current source, run a single episode on the target,
weight candidate parameter vectors by trajectory likelihood times
prior-over-sampling density (importance sampling), and refit the truncated
Gaussian to the weighted sample. The target's true parameters stay hidden
from this whole path.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import trainer as trainer_mod
from .core import (
    LOG_SQRT_2PI,
    STREAM_POSTERIOR,
    STREAM_TARGET,
    ModelParams,
    SourceDistribution,
    Trajectory,
    log_density,
    rollout,
    sample_params,
    stack_params,
    substream,
    undiscounted_return,
)
from .errors import DegeneratePosteriorError, PosteriorCollapseWarning
from .trainer import TrainConfig

ESS_WARN_THRESHOLD = 5.0


@dataclass(frozen=True)
class WeightedSample:
    params: ModelParams
    log_weight: float

    @property
    def weight(self) -> float:
        return math.exp(self.log_weight)


@dataclass
class AdaptConfig:
    rounds: int
    train: TrainConfig
    n_samples: int = 1000
    sampling: str = "prior"          # "prior" | "uniform" over the bounds
    sigma_lik: float | np.ndarray | None = None  # None -> 0.05 * env state_scale
    sigma_floor_frac: float = 0.01   # of the initial per-dimension sigma
    seed: int = 0

    def validate(self):
        if self.rounds < 0:
            raise ValueError("rounds must be non-negative")
        if self.n_samples < 2:
            raise ValueError("need at least 2 posterior samples")
        if self.sampling not in ("prior", "uniform"):
            raise ValueError(f"unknown sampling distribution '{self.sampling}'")
        if self.sigma_lik is not None and np.any(np.asarray(self.sigma_lik) <= 0):
            raise ValueError("sigma_lik must be positive")
        self.train.validate()


class TargetDomain:
    """The deployment system: a known environment with unknown parameters.

    Algorithm code may only run episodes; the true parameters are private
    and surface only through observed trajectories.
    """

    def __init__(self, env, true_params: ModelParams):
        self.env = env
        self._true_params = true_params
        self.episodes_run = 0

    def run_episode(self, policy, horizon: int, rng) -> Trajectory:
        self.episodes_run += 1
        return rollout(self.env, self._true_params, policy, horizon, rng)


def resolve_sigma_lik(env, sigma_lik) -> np.ndarray:
    if sigma_lik is None:
        return 0.05 * np.asarray(env.state_scale, dtype=float)
    return np.broadcast_to(np.asarray(sigma_lik, dtype=float),
                           (env.spec.state_dim,)).copy()


def trajectory_log_likelihood(tau: Trajectory, params: ModelParams, env,
                              sigma_lik) -> float:
    """Score observed transitions against the model-p one-step predictions,
    treating transition stochasticity (and sensor error) as independent
    Gaussian noise per state dimension."""
    return float(_batch_log_likelihood(tau, [params], env, sigma_lik)[0])


def _batch_log_likelihood(tau: Trajectory, params_list, env,
                          sigma_lik) -> np.ndarray:
    sigma = resolve_sigma_lik(env, sigma_lik)
    if np.any(sigma <= 0):
        raise ValueError("sigma_lik must be positive")
    t = len(tau)
    d = env.spec.state_dim
    const_per_step = -d * LOG_SQRT_2PI - float(np.sum(np.log(sigma)))
    if t == 0:
        return np.zeros(len(params_list))

    from .envs import _with_defaults
    stacked = stack_params([_with_defaults(env, p) for p in params_list])
    b = len(params_list)
    total = np.full(b, t * const_per_step)
    for step in range(t):
        states = np.broadcast_to(tau.states[step], (b, d))
        actions = np.broadcast_to(tau.actions[step], (b, env.spec.action_dim))
        predicted, _, _ = env.step_many(states, actions, stacked)
        resid = (tau.next_states[step] - predicted) / sigma
        total -= 0.5 * np.sum(resid ** 2, axis=1)
    return total


def draw_candidates(source: SourceDistribution, sampling: str, n: int, rng):
    """n parameter vectors from the stated sampling distribution."""
    if sampling == "prior":
        return [sample_params(source, rng) for _ in range(n)]
    if sampling == "uniform":
        out = []
        for _ in range(n):
            values = np.where(
                source.sigma == 0.0, source.mu,
                rng.uniform(source.low, source.high),
            )
            out.append(ModelParams(source.names, values))
        return out
    raise ValueError(f"unknown sampling distribution '{sampling}'")


def sampling_log_density(source: SourceDistribution, sampling: str,
                         params: ModelParams) -> float:
    """Log-density of the sampling distribution; frozen dims contribute 0."""
    if sampling == "prior":
        return log_density(source, params)
    if sampling == "uniform":
        total = 0.0
        for i in range(source.dim):
            if source.sigma[i] == 0.0:
                continue
            x = params.values[i]
            if x < source.low[i] or x > source.high[i]:
                return -math.inf
            total -= math.log(source.high[i] - source.low[i])
        return total
    raise ValueError(f"unknown sampling distribution '{sampling}'")


def importance_weights(samples, tau: Trajectory, prior: SourceDistribution,
                       sampling: str, env, sigma_lik):
    """Normalized posterior weights: likelihood times prior over sampling
    density, log-sum-exp normalized so the weights sum to 1."""
    logliks = _batch_log_likelihood(tau, samples, env, sigma_lik)
    log_w = np.array([
        ll + log_density(prior, p) - sampling_log_density(prior, sampling, p)
        for ll, p in zip(logliks, samples)
    ])
    finite = np.isfinite(log_w)
    if not np.any(finite):
        raise DegeneratePosteriorError(
            "no candidate model explains the trajectory; widen the sampling "
            "distribution or increase sigma_lik"
        )
    peak = np.max(log_w[finite])
    norm = peak + math.log(np.sum(np.exp(log_w[finite] - peak)))
    return [WeightedSample(p, lw - norm) for p, lw in zip(samples, log_w)]


def effective_sample_size(weighted) -> float:
    w = np.array([ws.weight for ws in weighted])
    return float(1.0 / np.sum(w ** 2))


def refit_distribution(weighted, old: SourceDistribution,
                       sigma_floor) -> SourceDistribution:
    """Diagonal-Gaussian refit of the weighted posterior sample.

    New bounds are mu +/- 3 sigma clipped into the old bounds (bounds only
    shrink or persist). Emits PosteriorCollapseWarning when the effective
    sample size is below 5.
    """
    w = np.array([ws.weight for ws in weighted])
    if abs(float(np.sum(w)) - 1.0) > 1e-9:
        raise ValueError("weights must be normalized")
    values = np.stack([ws.params.values for ws in weighted])
    floor = np.broadcast_to(np.asarray(sigma_floor, dtype=float),
                            (old.dim,))

    ess = effective_sample_size(weighted)
    if ess < ESS_WARN_THRESHOLD:
        warnings.warn(
            f"posterior effective sample size {ess:.2f} < {ESS_WARN_THRESHOLD}; "
            "the refit distribution may have collapsed",
            PosteriorCollapseWarning,
        )

    mu = w @ values
    var = w @ (values - mu) ** 2
    sigma = np.maximum(np.sqrt(var), floor)
    # frozen dimensions stay frozen
    sigma = np.where(old.sigma == 0.0, 0.0, sigma)
    low = np.maximum(old.low, mu - 3.0 * sigma)
    high = np.minimum(old.high, mu + 3.0 * sigma)
    low = np.where(old.sigma == 0.0, old.low, low)
    high = np.where(old.sigma == 0.0, old.high, high)
    return SourceDistribution(old.names, mu, sigma, low, high)


@dataclass
class RoundRecord:
    round_index: int
    source: SourceDistribution
    ess: float
    target_return: float


@dataclass
class AdaptResult:
    policy: object
    sources: list          # initial distribution plus one refit per round
    round_records: list = field(default_factory=list)

    @property
    def target_returns(self):
        return [r.target_return for r in self.round_records]


def adapt_loop(target: TargetDomain, env_model, initial_source: SourceDistribution,
               config: AdaptConfig, *, workers: int = 1,
               on_round=None) -> AdaptResult:
    """Round-based interaction: train, run one target episode, update the
    source distribution from that single trajectory, repeat."""
    config.validate()
    sources = [initial_source]
    records = []
    policy = None
    horizon = (config.train.horizon if config.train.horizon is not None
               else env_model.spec.default_horizon)
    sigma_lik = resolve_sigma_lik(env_model, config.sigma_lik)
    sigma_floor = config.sigma_floor_frac * initial_source.sigma

    for r in range(config.rounds):
        try:
            policy, _ = trainer_mod.train(
                env_model, sources[-1], _round_train_config(config, r),
                initial_policy=policy, workers=workers,
            )
            episode = target.run_episode(
                policy, horizon, substream(config.seed, STREAM_TARGET, r))
            candidates = draw_candidates(
                sources[-1], config.sampling, config.n_samples,
                substream(config.seed, STREAM_POSTERIOR, r))
            weighted = importance_weights(candidates, episode, sources[-1],
                                          config.sampling, env_model, sigma_lik)
            new_source = refit_distribution(weighted, sources[-1], sigma_floor)
        except DegeneratePosteriorError as exc:
            raise DegeneratePosteriorError(f"round {r}: {exc}") from exc

        sources.append(new_source)
        record = RoundRecord(r, new_source, effective_sample_size(weighted),
                             undiscounted_return(episode))
        records.append(record)
        if on_round is not None:
            on_round(record)
    return AdaptResult(policy=policy, sources=sources, round_records=records)


def _round_train_config(config: AdaptConfig, round_index: int) -> TrainConfig:
    """Per-round training config with a round-specific seed."""
    base = config.train
    return TrainConfig(
        niter=base.niter, epsilon=base.epsilon,
        n_trajectories=base.n_trajectories, warmup_iters=base.warmup_iters,
        gamma=base.gamma, horizon=base.horizon,
        seed=base.seed + 100_003 * (round_index + 1),
        polopt=base.polopt,
    )
