"""Batch policy-update methods: REINFORCE with baseline and a natural-gradient
step with conjugate gradients, KL trust region, and backtracking line search.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import baseline as baseline_mod
from . import policy as policy_mod
from .core import returns_to_go


@dataclass
class PolOptConfig:
    method: str = "natural"          # "natural" | "reinforce"
    learning_rate: float = 0.05      # reinforce only
    kl_step: float = 0.01            # natural: trust-region radius
    cg_iters: int = 10
    cg_damping: float = 1e-5
    backtrack_ratio: float = 0.5
    max_backtracks: int = 10
    fvp_subsample: int = 1           # state stride for the Fisher estimate
    use_baseline: bool = True        # ablation switches both of these off
    normalize_advantages: bool = True

    def validate(self):
        if self.method not in ("natural", "reinforce"):
            raise ValueError(f"unknown method '{self.method}'")
        if self.kl_step <= 0 or self.learning_rate <= 0:
            raise ValueError("step sizes must be positive")
        if self.fvp_subsample < 1:
            raise ValueError("fvp_subsample must be >= 1")


@dataclass
class StepInfo:
    kl: float = 0.0
    backtracks: int = 0
    no_step: bool = False
    cg_fallback: bool = False


def advantages(trajectories, baseline, gamma: float, horizon: int,
               normalize: bool = True):
    """Per-step advantage lists: return-to-go minus the baseline prediction,
    optionally normalized to zero mean / unit variance across the batch."""
    advs = []
    for tau in trajectories:
        g = returns_to_go(tau.rewards, gamma)
        b = baseline_mod.predict_many(baseline, tau.states,
                                      np.arange(len(tau)), horizon)
        advs.append(g - b)
    if normalize and advs:
        flat = np.concatenate(advs)
        if flat.size > 0:
            std = flat.std()
            mean = flat.mean()
            if std > 1e-12:  # zero-variance batch: leave unnormalized
                advs = [(a - mean) / std for a in advs]
    return advs


def _concat_batch(trajectories, advs):
    states = np.concatenate([tau.states for tau in trajectories])
    actions = np.concatenate([tau.actions for tau in trajectories])
    old_log_probs = np.concatenate([tau.log_probs for tau in trajectories])
    adv = np.concatenate(advs)
    return states, actions, old_log_probs, adv


def reinforce_gradient(trajectories, advs, policy) -> np.ndarray:
    """Average over all steps of grad log pi(a_t | s_t) * A_t."""
    states, actions, _, adv = _concat_batch(trajectories, advs)
    return policy_mod.score_sum(policy, states, actions, adv) / len(adv)


def surrogate(policy, states, actions, old_log_probs, adv) -> float:
    """Importance-ratio objective; equals mean(adv) at the data-collecting
    policy and has the REINFORCE gradient there."""
    lp = policy_mod.log_prob(policy, states, actions)
    return float(np.mean(np.exp(lp - old_log_probs) * adv))


def conjugate_gradient(apply_a, b, iters: int, residual_tol: float = 1e-10):
    """Solve A x = b for symmetric positive definite A given only x -> A x.

    Returns (x, healthy); healthy flips to False on non-positive curvature.
    """
    x = np.zeros_like(b)
    r = b.copy()
    p = b.copy()
    rdotr = float(r @ r)
    for _ in range(iters):
        if rdotr < residual_tol:
            break
        ap = apply_a(p)
        curvature = float(p @ ap)
        if curvature <= 0.0:
            return x, False
        alpha = rdotr / curvature
        x += alpha * p
        r -= alpha * ap
        new_rdotr = float(r @ r)
        p = r + (new_rdotr / rdotr) * p
        rdotr = new_rdotr
    return x, True


def reinforce_step(policy, trajectories, advs, config: PolOptConfig):
    """Plain ascent step along the REINFORCE gradient."""
    if not trajectories:
        return policy, StepInfo(no_step=True)
    states, _, _, _ = _concat_batch(trajectories, advs)
    ref = policy_mod.stats(policy, states)
    grad = reinforce_gradient(trajectories, advs, policy)
    theta = policy_mod.flatten_params(policy) + config.learning_rate * grad
    new_policy = policy_mod.apply_update(policy, theta)
    return new_policy, StepInfo(kl=policy_mod.kl_mean(ref, new_policy, states))


def natural_step(policy, trajectories, advs, gradient, config: PolOptConfig):
    """Trust-region natural-gradient step.

    Solves F x = g by conjugate gradients on exact Fisher-vector products,
    scales to the KL radius, then halves the step until the KL constraint
    holds and the surrogate does not get worse. Returns the unchanged policy
    when every backtrack fails.
    """
    if not trajectories:
        return policy, StepInfo(no_step=True)
    states, actions, old_log_probs, adv = _concat_batch(trajectories, advs)
    if not np.all(np.isfinite(gradient)):
        raise ValueError("non-finite policy gradient")
    if not np.any(gradient):
        return policy, StepInfo(no_step=True)

    ref = policy_mod.stats(policy, states)
    fvp = policy_mod.make_fvp(policy, states[::config.fvp_subsample],
                              damping=config.cg_damping)

    direction, healthy = conjugate_gradient(fvp, gradient, config.cg_iters)
    fallback = not healthy or not np.any(direction)
    if fallback:
        direction = gradient
    quad = float(direction @ fvp(direction))
    if quad <= 0.0:
        return policy, StepInfo(no_step=True, cg_fallback=fallback)

    step = np.sqrt(2.0 * config.kl_step / quad) * direction
    theta0 = policy_mod.flatten_params(policy)
    base = surrogate(policy, states, actions, old_log_probs, adv)

    scale = 1.0
    for backtracks in range(config.max_backtracks + 1):
        candidate = policy_mod.apply_update(policy, theta0 + scale * step)
        kl = policy_mod.kl_mean(ref, candidate, states)
        improvement = surrogate(candidate, states, actions,
                                old_log_probs, adv) - base
        if kl <= config.kl_step and improvement >= 0.0:
            return candidate, StepInfo(kl=kl, backtracks=backtracks,
                                       cg_fallback=fallback)
        scale *= config.backtrack_ratio
    return policy, StepInfo(no_step=True, backtracks=config.max_backtracks + 1,
                            cg_fallback=fallback)


def policy_step(policy, trajectories, advs, config: PolOptConfig):
    """Dispatch one update of the configured method."""
    if config.method == "reinforce":
        return reinforce_step(policy, trajectories, advs, config)
    if not trajectories:
        return policy, StepInfo(no_step=True)
    gradient = reinforce_gradient(trajectories, advs, policy)
    return natural_step(policy, trajectories, advs, gradient, config)
