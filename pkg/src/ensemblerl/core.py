"""Parametrized-MDP primitives.

Model parameter vectors, the truncated-Gaussian distribution over them,
trajectories, discounted returns, and the batched rollout machinery that
everything else is built on.

An environment is any object with::

    spec: EnvSpec
    state_scale: np.ndarray            # typical magnitude per state dim
    reset(rng, params) -> state
    step(state, action, params) -> (next_state, reward, terminated)
    step_many(states, actions, stacked) -> (next_states, rewards, terminated)

where ``stacked`` maps parameter name -> per-row array. step/step_many are
deterministic and clip actions internally; recorded actions stay unclipped.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import NumericalBlowupError, TruncationError

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

# Rollout batches are processed in fixed-size row tiles. Tile boundaries
# depend only on the batch size, never on the worker count, so the floating
# point result is bitwise identical for any number of workers.
ROLLOUT_TILE = 64

# Random sub-stream tags. Every random draw in the package comes from a
# generator keyed by (seed, tag, *indices), which makes parallel and serial
# execution produce identical results.
STREAM_POLICY_INIT = 0
STREAM_MODELS = 1
STREAM_ROLLOUT = 2
STREAM_EVAL = 3
STREAM_POSTERIOR = 4
STREAM_TARGET = 5


def substream(seed: int, tag: int, *indices: int) -> np.random.Generator:
    """Independent generator for (seed, tag, *indices), order-free and stable."""
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence((seed, tag, *indices)))
    )


@dataclass(frozen=True)
class ModelParams:
    """Named vector of physical parameters (mass, stiffness, damping, ...)."""

    names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise ValueError("values must be a 1-D vector")
        if len(self.names) != values.shape[0]:
            raise ValueError(
                f"{len(self.names)} names but {values.shape[0]} values"
            )
        if values.shape[0] < 1:
            raise ValueError("at least one parameter is required")
        if not np.all(np.isfinite(values)):
            raise ValueError("parameter values must be finite")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", tuple(self.names))

    @classmethod
    def from_dict(cls, mapping: dict) -> "ModelParams":
        names = tuple(mapping)
        return cls(names, np.array([mapping[n] for n in names], dtype=float))

    def get(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def as_dict(self) -> dict:
        return {n: float(v) for n, v in zip(self.names, self.values)}

    def replace(self, **updates: float) -> "ModelParams":
        d = self.as_dict()
        d.update(updates)
        return ModelParams(self.names, np.array([d[n] for n in self.names]))


def stack_params(params_list) -> dict:
    """Stack a list of ModelParams into name -> per-row array."""
    names = params_list[0].names
    for p in params_list[1:]:
        if p.names != names:
            raise ValueError("parameter name sets differ across the batch")
    mat = np.stack([p.values for p in params_list])
    return {n: mat[:, j] for j, n in enumerate(names)}


@dataclass(frozen=True)
class SourceDistribution:
    """Per-dimension truncated Gaussian over model parameters.

    sigma == 0 freezes a dimension: sampling returns mu exactly and the
    log-density is 0 at mu and -inf anywhere else.
    """

    names: tuple[str, ...]
    mu: np.ndarray
    sigma: np.ndarray
    low: np.ndarray
    high: np.ndarray

    def __post_init__(self):
        arrays = {}
        for f in ("mu", "sigma", "low", "high"):
            a = np.asarray(getattr(self, f), dtype=float)
            a.flags.writeable = False
            arrays[f] = a
        n = len(self.names)
        if not all(a.shape == (n,) for a in arrays.values()):
            raise ValueError("mu/sigma/low/high must all match the name count")
        if not np.all(arrays["low"] < arrays["high"]):
            raise ValueError("low must be strictly below high")
        if np.any(arrays["mu"] < arrays["low"]) or np.any(arrays["mu"] > arrays["high"]):
            raise ValueError("mu must lie within [low, high]")
        if np.any(arrays["sigma"] < 0):
            raise ValueError("sigma must be non-negative")
        for f, a in arrays.items():
            object.__setattr__(self, f, a)
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def dim(self) -> int:
        return len(self.names)

    @classmethod
    def from_dict(cls, mapping: dict) -> "SourceDistribution":
        """Build from {name: {"mu": .., "sigma": .., "low": .., "high": ..}}."""
        names = tuple(mapping)
        cols = {f: np.array([mapping[n][f] for n in names], dtype=float)
                for f in ("mu", "sigma", "low", "high")}
        return cls(names, cols["mu"], cols["sigma"], cols["low"], cols["high"])

    def as_dict(self) -> dict:
        return {
            n: {"mu": float(self.mu[i]), "sigma": float(self.sigma[i]),
                "low": float(self.low[i]), "high": float(self.high[i])}
            for i, n in enumerate(self.names)
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SourceDistribution":
        return cls.from_dict(json.loads(text))

    def nominal_params(self) -> ModelParams:
        return ModelParams(self.names, self.mu.copy())

    def freeze(self, name: str) -> "SourceDistribution":
        """Pin one dimension at its mu (sigma -> 0); bounds are kept."""
        if name not in self.names:
            raise ValueError(f"unknown parameter '{name}'")
        sigma = self.sigma.copy()
        sigma[self.names.index(name)] = 0.0
        return SourceDistribution(self.names, self.mu, sigma, self.low, self.high)

    def point(self) -> "SourceDistribution":
        """All dimensions pinned at mu (the single mean-parameter model)."""
        return SourceDistribution(
            self.names, self.mu, np.zeros(self.dim), self.low, self.high
        )


def _norm_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def sample_params(dist: SourceDistribution, rng: np.random.Generator,
                  max_attempts: int = 10_000) -> ModelParams:
    """Draw one parameter vector, each dimension rejection-sampled into bounds."""
    values = np.empty(dist.dim)
    for i in range(dist.dim):
        if dist.sigma[i] == 0.0:
            values[i] = dist.mu[i]
            continue
        for _ in range(max_attempts):
            x = rng.normal(dist.mu[i], dist.sigma[i])
            if dist.low[i] <= x <= dist.high[i]:
                values[i] = x
                break
        else:
            raise TruncationError(
                f"dimension '{dist.names[i]}': no draw landed in "
                f"[{dist.low[i]}, {dist.high[i]}] after {max_attempts} attempts"
            )
    return ModelParams(dist.names, values)


def log_density(dist: SourceDistribution, params: ModelParams) -> float:
    """Joint log-density of a parameter vector; -inf outside the bounds."""
    if params.names != dist.names:
        raise ValueError("parameter names do not match the distribution")
    total = 0.0
    for i in range(dist.dim):
        x = params.values[i]
        if x < dist.low[i] or x > dist.high[i]:
            return -math.inf
        if dist.sigma[i] == 0.0:
            if x != dist.mu[i]:
                return -math.inf
            continue  # frozen dimension contributes nothing
        z = (x - dist.mu[i]) / dist.sigma[i]
        mass = (_norm_cdf((dist.high[i] - dist.mu[i]) / dist.sigma[i])
                - _norm_cdf((dist.low[i] - dist.mu[i]) / dist.sigma[i]))
        total += -0.5 * z * z - math.log(dist.sigma[i]) - LOG_SQRT_2PI - math.log(mass)
    return total


@dataclass(frozen=True)
class EnvSpec:
    """Dimensions, action bounds, horizon, and expected parameter names."""

    state_dim: int
    action_dim: int
    action_low: np.ndarray
    action_high: np.ndarray
    default_horizon: int
    param_names: tuple[str, ...]
    param_defaults: dict  # optional parameters with fallback values

    def __post_init__(self):
        if self.state_dim < 1 or self.action_dim < 1:
            raise ValueError("dimensions must be >= 1")
        low = np.asarray(self.action_low, dtype=float)
        high = np.asarray(self.action_high, dtype=float)
        if not np.all(low < high):
            raise ValueError("action lower bound must be below upper bound")
        object.__setattr__(self, "action_low", low)
        object.__setattr__(self, "action_high", high)

    @property
    def all_param_names(self) -> tuple[str, ...]:
        return self.param_names + tuple(self.param_defaults)


@dataclass(frozen=True)
class Trajectory:
    """One episode: aligned per-step records plus the model that produced it."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    log_probs: np.ndarray
    next_states: np.ndarray
    terminated: bool
    model: ModelParams

    def __post_init__(self):
        t = self.states.shape[0]
        if not (self.actions.shape[0] == self.rewards.shape[0]
                == self.log_probs.shape[0] == self.next_states.shape[0] == t):
            raise ValueError("per-step arrays must share one length")
        if t > 1 and not np.array_equal(self.states[1:], self.next_states[:-1]):
            raise ValueError("states[t+1] must equal next_states[t]")

    def __len__(self) -> int:
        return self.states.shape[0]


def discounted_return(tau: Trajectory, gamma: float) -> float:
    """Discounted reward sum; 0 for an empty trajectory."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must be in [0, 1]")
    t = len(tau)
    if t == 0:
        return 0.0
    return float(np.dot(tau.rewards, gamma ** np.arange(t)))


def undiscounted_return(tau: Trajectory) -> float:
    return float(np.sum(tau.rewards))


def returns_to_go(rewards: np.ndarray, gamma: float) -> np.ndarray:
    """Backward recursion G_t = r_t + gamma * G_{t+1}."""
    out = np.empty(len(rewards))
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def _resolve_params(env, params: ModelParams) -> ModelParams:
    """Check required names and fill optional ones with env defaults."""
    missing = [n for n in env.spec.param_names if n not in params.names]
    if missing:
        raise ValueError(f"model parameters missing {missing} required by the env")
    extra = {n: v for n, v in env.spec.param_defaults.items()
             if n not in params.names}
    if not extra:
        return params
    names = params.names + tuple(extra)
    values = np.concatenate([params.values, np.array(list(extra.values()))])
    return ModelParams(names, values)


def _rollout_tile(env, params_list, policy, horizon, rngs):
    """Advance a tile of rollouts in lockstep; one rng per trajectory.

    Per-stream draw order is fixed: env.reset first, then one
    standard_normal((horizon, action_dim)) block of action noise.
    """
    b = len(params_list)
    spec = env.spec
    ns, na = spec.state_dim, spec.action_dim
    resolved = [_resolve_params(env, p) for p in params_list]

    if horizon == 0:
        return [
            Trajectory(np.empty((0, ns)), np.empty((0, na)), np.empty(0),
                       np.empty(0), np.empty((0, ns)), False, params_list[k])
            for k in range(b)
        ]

    states = np.stack([env.reset(rngs[k], resolved[k]) for k in range(b)])
    noise = np.stack([rngs[k].standard_normal((horizon, na)) for k in range(b)])
    stacked = stack_params(resolved)

    log_sigma = np.asarray(policy.log_std, dtype=float)
    sigma = np.exp(log_sigma)
    logp_const = -na * LOG_SQRT_2PI - float(np.sum(log_sigma))

    s_buf = np.zeros((b, horizon, ns))
    a_buf = np.zeros((b, horizon, na))
    r_buf = np.zeros((b, horizon))
    lp_buf = np.zeros((b, horizon))
    sn_buf = np.zeros((b, horizon, ns))
    lengths = np.zeros(b, dtype=int)
    done = np.zeros(b, dtype=bool)

    for t in range(horizon):
        means = policy.mean(states)
        actions = means + sigma * noise[:, t, :]
        log_probs = logp_const - 0.5 * np.sum(noise[:, t, :] ** 2, axis=1)
        next_states, rewards, terminated = env.step_many(states, actions, stacked)

        live = ~done
        bad = live & ~(np.all(np.isfinite(next_states), axis=1)
                       & np.all(np.isfinite(actions), axis=1))
        if np.any(bad):
            raise NumericalBlowupError(
                f"non-finite state or action at step {t}", step=t
            )

        s_buf[live, t] = states[live]
        a_buf[live, t] = actions[live]
        r_buf[live, t] = rewards[live]
        lp_buf[live, t] = log_probs[live]
        sn_buf[live, t] = next_states[live]
        lengths[live] += 1
        done = done | (live & terminated)
        states = np.where(live[:, None], next_states, states)
        if done.all():
            break

    out = []
    for k in range(b):
        t_k = lengths[k]
        out.append(Trajectory(
            s_buf[k, :t_k].copy(), a_buf[k, :t_k].copy(), r_buf[k, :t_k].copy(),
            lp_buf[k, :t_k].copy(), sn_buf[k, :t_k].copy(),
            bool(done[k]), params_list[k],
        ))
    return out


def rollout(env, params: ModelParams, policy, horizon: int,
            rng: np.random.Generator) -> Trajectory:
    """Sample one trajectory from the env under the given model parameters."""
    return _rollout_tile(env, [params], policy, horizon, [rng])[0]


def rollout_batch(env, params_list, policy, horizon: int, rngs,
                  workers: int = 1):
    """Roll out one trajectory per parameter vector, ordered by index.

    Work is split into fixed-size tiles so the result is bitwise independent
    of the worker count.
    """
    n = len(params_list)
    tiles = [slice(i, min(i + ROLLOUT_TILE, n)) for i in range(0, n, ROLLOUT_TILE)]

    def run(tile):
        return _rollout_tile(env, params_list[tile], policy, horizon, rngs[tile])

    if workers <= 1 or len(tiles) == 1:
        chunks = [run(t) for t in tiles]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(run, tiles))
    return [tau for chunk in chunks for tau in chunk]


def ceil_percentile(values, fraction: float) -> float:
    """k-th smallest value with k = ceil(fraction * n); ties allowed."""
    if len(values) == 0:
        raise ValueError("empty value list")
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must be in (0, 1]")
    ordered = np.sort(np.asarray(values, dtype=float))
    k = math.ceil(fraction * len(ordered))
    return float(ordered[k - 1])
