"""Diagonal-Gaussian policy: tanh MLP mean network, learned per-dimension
log standard deviations, and exact hand-backpropagated gradients.

All trainable parameters live in one flat vector with layout
[W1, b1, W2, b2, ..., Wout, bout, log_std], weights row-major.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

# Optimizer updates clamp log_std here; direct construction does not, so
# deliberately near-deterministic policies (log_std -20) remain expressible.
LOG_STD_FLOOR = -10.0


def _read_only(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class GaussianMlpPolicy:
    weights: tuple
    biases: tuple
    log_std: np.ndarray

    def __post_init__(self):
        ws = tuple(_read_only(w) for w in self.weights)
        bs = tuple(_read_only(b) for b in self.biases)
        if len(ws) != len(bs):
            raise ValueError("one bias vector per weight matrix")
        for i, (w, b) in enumerate(zip(ws, bs)):
            if w.shape[1] != b.shape[0]:
                raise ValueError(f"layer {i}: bias length {b.shape[0]} != {w.shape[1]}")
            if i > 0 and ws[i - 1].shape[1] != w.shape[0]:
                raise ValueError(f"layer {i} input does not chain from layer {i - 1}")
        ls = _read_only(self.log_std)
        if ls.shape != (ws[-1].shape[1],):
            raise ValueError("log_std length must equal the action dimension")
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)
        object.__setattr__(self, "log_std", ls)

    @property
    def state_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def action_dim(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def hidden_sizes(self) -> tuple:
        return tuple(w.shape[1] for w in self.weights[:-1])

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases)) \
            + self.log_std.size

    def mean(self, states: np.ndarray) -> np.ndarray:
        return forward(self, states)


def _orthogonal(rng: np.random.Generator, rows: int, cols: int,
                scale: float) -> np.ndarray:
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))  # fix QR sign ambiguity for reproducibility
    if rows < cols:
        q = q.T
    return scale * q[:rows, :cols]


def init_policy(state_dim: int, action_dim: int, rng: np.random.Generator,
                hidden=(64, 64), output_scale: float = 0.01) -> GaussianMlpPolicy:
    """Orthogonal-ish init; the output layer is shrunk so initial actions are
    small, and log_std starts at 0."""
    sizes = (state_dim, *hidden, action_dim)
    weights, biases = [], []
    for i in range(len(sizes) - 1):
        scale = output_scale if i == len(sizes) - 2 else 1.0
        weights.append(_orthogonal(rng, sizes[i], sizes[i + 1], scale))
        biases.append(np.zeros(sizes[i + 1]))
    return GaussianMlpPolicy(tuple(weights), tuple(biases), np.zeros(action_dim))


def flatten_params(policy: GaussianMlpPolicy) -> np.ndarray:
    parts = []
    for w, b in zip(policy.weights, policy.biases):
        parts.append(w.ravel())
        parts.append(b)
    parts.append(policy.log_std)
    return np.concatenate(parts)


def with_params(policy: GaussianMlpPolicy, theta: np.ndarray) -> GaussianMlpPolicy:
    """Rebuild the policy from a flat vector (exact inverse of flatten_params)."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (policy.n_params,):
        raise ValueError(f"expected {policy.n_params} parameters, got {theta.shape}")
    weights, biases = [], []
    pos = 0
    for w, b in zip(policy.weights, policy.biases):
        weights.append(theta[pos:pos + w.size].reshape(w.shape))
        pos += w.size
        biases.append(theta[pos:pos + b.size])
        pos += b.size
    log_std = theta[pos:]
    return GaussianMlpPolicy(tuple(weights), tuple(biases), log_std)


def apply_update(policy: GaussianMlpPolicy, theta: np.ndarray) -> GaussianMlpPolicy:
    """Optimizer entry point: like with_params but clamps log_std at the floor."""
    new = with_params(policy, theta)
    if np.any(new.log_std < LOG_STD_FLOOR):
        clamped = np.maximum(new.log_std, LOG_STD_FLOOR)
        new = GaussianMlpPolicy(new.weights, new.biases, clamped)
    return new


def forward(policy: GaussianMlpPolicy, states: np.ndarray) -> np.ndarray:
    """Mean-network output; accepts a single state or a (B, state_dim) batch."""
    single = np.ndim(states) == 1
    h = np.atleast_2d(np.asarray(states, dtype=float))
    for w, b in zip(policy.weights[:-1], policy.biases[:-1]):
        h = np.tanh(h @ w + b)
    mu = h @ policy.weights[-1] + policy.biases[-1]
    return mu[0] if single else mu


def _forward_cached(policy, states):
    h = np.atleast_2d(np.asarray(states, dtype=float))
    hiddens = [h]
    for w, b in zip(policy.weights[:-1], policy.biases[:-1]):
        h = np.tanh(h @ w + b)
        hiddens.append(h)
    mu = h @ policy.weights[-1] + policy.biases[-1]
    return mu, hiddens


def _mean_vjp(policy, hiddens, upstream) -> np.ndarray:
    """Flat gradient of sum_t <upstream_t, mu(s_t)> w.r.t. all parameters.

    The log_std slot of the returned vector is zero; callers add their own
    analytic log_std term.
    """
    grads_w = [None] * len(policy.weights)
    grads_b = [None] * len(policy.biases)
    g = upstream
    for i in range(len(policy.weights) - 1, -1, -1):
        grads_w[i] = hiddens[i].T @ g
        grads_b[i] = g.sum(axis=0)
        if i > 0:
            g = (g @ policy.weights[i].T) * (1.0 - hiddens[i] ** 2)
    parts = []
    for gw, gb in zip(grads_w, grads_b):
        parts.append(gw.ravel())
        parts.append(gb)
    parts.append(np.zeros_like(policy.log_std))
    return np.concatenate(parts)


def _mean_jvp(policy, hiddens, v: np.ndarray) -> np.ndarray:
    """Directional derivative of mu(s) along the flat direction v, batched."""
    pos = 0
    dirs = []
    for w, b in zip(policy.weights, policy.biases):
        dw = v[pos:pos + w.size].reshape(w.shape)
        pos += w.size
        db = v[pos:pos + b.size]
        pos += b.size
        dirs.append((dw, db))
    d = np.zeros_like(hiddens[0])
    for i, (dw, db) in enumerate(dirs[:-1]):
        d = (hiddens[i] @ dw + d @ policy.weights[i] + db) * (1.0 - hiddens[i + 1] ** 2)
    dw, db = dirs[-1]
    return hiddens[-1] @ dw + d @ policy.weights[-1] + db


def act(policy: GaussianMlpPolicy, state: np.ndarray, rng: np.random.Generator):
    """Sample an action and return it with its exact Gaussian log-density."""
    mu = forward(policy, state)
    if not np.all(np.isfinite(mu)):
        raise FloatingPointError("non-finite policy mean")
    noise = rng.standard_normal(policy.action_dim)
    action = mu + np.exp(policy.log_std) * noise
    log_prob = float(-policy.action_dim * LOG_SQRT_2PI
                     - np.sum(policy.log_std) - 0.5 * np.sum(noise ** 2))
    return action, log_prob


def log_prob(policy: GaussianMlpPolicy, states, actions) -> np.ndarray:
    """Exact log-density of given actions at given states, batched."""
    mu = forward(policy, np.atleast_2d(states))
    a = np.atleast_2d(actions)
    sigma = np.exp(policy.log_std)
    z = (a - mu) / sigma
    return (-policy.action_dim * LOG_SQRT_2PI - np.sum(policy.log_std)
            - 0.5 * np.sum(z ** 2, axis=1))


def log_prob_grad(policy: GaussianMlpPolicy, state, action) -> np.ndarray:
    """Exact gradient of log pi(action | state) w.r.t. the flat parameters."""
    return score_sum(policy, np.atleast_2d(state), np.atleast_2d(action),
                     np.ones(1))


def score_sum(policy: GaussianMlpPolicy, states, actions,
              coeffs: np.ndarray) -> np.ndarray:
    """sum_t coeffs_t * grad log pi(a_t | s_t), computed in one batched pass."""
    mu, hiddens = _forward_cached(policy, states)
    a = np.atleast_2d(actions)
    var = np.exp(2.0 * policy.log_std)
    upstream = ((a - mu) / var) * coeffs[:, None]
    grad = _mean_vjp(policy, hiddens, upstream)
    z2 = (a - mu) ** 2 / var
    grad[-policy.action_dim:] = np.sum((z2 - 1.0) * coeffs[:, None], axis=0)
    return grad


@dataclass(frozen=True)
class PolicyStats:
    """Frozen (mean, log_std) snapshot of a policy at a batch of states."""

    means: np.ndarray
    log_std: np.ndarray


def stats(policy: GaussianMlpPolicy, states) -> PolicyStats:
    return PolicyStats(forward(policy, np.atleast_2d(states)),
                       np.array(policy.log_std))


def kl_mean(ref: PolicyStats, policy: GaussianMlpPolicy, states) -> float:
    """Mean over states of KL(ref || policy) for diagonal Gaussians."""
    mu_q = forward(policy, np.atleast_2d(states))
    var_p = np.exp(2.0 * ref.log_std)
    var_q = np.exp(2.0 * policy.log_std)
    per_dim = (policy.log_std - ref.log_std
               + (var_p + (ref.means - mu_q) ** 2) / (2.0 * var_q) - 0.5)
    return float(np.mean(np.sum(per_dim, axis=1)))


def kl_grad(ref: PolicyStats, policy: GaussianMlpPolicy, states) -> np.ndarray:
    """Exact gradient of kl_mean w.r.t. the current policy's flat parameters."""
    mu_q, hiddens = _forward_cached(policy, states)
    b = mu_q.shape[0]
    var_p = np.exp(2.0 * ref.log_std)
    var_q = np.exp(2.0 * policy.log_std)
    upstream = (mu_q - ref.means) / var_q / b
    grad = _mean_vjp(policy, hiddens, upstream)
    d_log_std = 1.0 - (var_p + (ref.means - mu_q) ** 2) / var_q
    grad[-policy.action_dim:] = np.mean(d_log_std, axis=0)
    return grad


def make_fvp(policy: GaussianMlpPolicy, states, damping: float = 0.0):
    """Fisher-vector product closure with the forward pass cached.

    F is the exact KL Hessian at the current policy averaged over the given
    states. For a diagonal Gaussian with state-independent log_std the block
    structure is: mean network J^T diag(1/sigma^2) J, log_std entries 2, and
    no cross terms.
    """
    mu, hiddens = _forward_cached(policy, states)
    b = mu.shape[0]
    inv_var_b = 1.0 / np.exp(2.0 * policy.log_std) / b
    na = policy.action_dim

    def fvp(v: np.ndarray) -> np.ndarray:
        d_mu = _mean_jvp(policy, hiddens, v)
        out = _mean_vjp(policy, hiddens, d_mu * inv_var_b)
        out[-na:] = 2.0 * v[-na:]
        return out + damping * v

    return fvp


def fisher_vector_product(policy: GaussianMlpPolicy, states, v: np.ndarray,
                          damping: float = 0.0) -> np.ndarray:
    """(F + damping I) v; see make_fvp for the block structure."""
    return make_fvp(policy, states, damping)(v)


def to_checkpoint_dict(policy: GaussianMlpPolicy) -> dict:
    return {
        "format": "gaussian-mlp-policy/1",
        "state_dim": policy.state_dim,
        "action_dim": policy.action_dim,
        "hidden": list(policy.hidden_sizes),
        "params": [float(x) for x in flatten_params(policy)],
    }


def from_checkpoint_dict(d: dict) -> GaussianMlpPolicy:
    if d.get("format") != "gaussian-mlp-policy/1":
        raise ValueError(f"unknown checkpoint format {d.get('format')!r}")
    skeleton = init_policy(d["state_dim"], d["action_dim"],
                           np.random.default_rng(0), hidden=tuple(d["hidden"]))
    return with_params(skeleton, np.array(d["params"], dtype=float))
