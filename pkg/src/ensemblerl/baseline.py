"""Linear value baseline with time-varying features, refit every iteration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import returns_to_go


@dataclass(frozen=True)
class LinearBaseline:
    """Ridge-regression weights over the feature map; unfit predicts 0."""

    weights: np.ndarray | None = None
    lam: float = 1e-5


def features(state, t: int, horizon: int) -> np.ndarray:
    """[s, s*s, u, u^2, u^3, 1] with u = t / horizon."""
    if not 0 <= t < horizon:
        raise ValueError(f"t={t} outside [0, {horizon})")
    s = np.asarray(state, dtype=float)
    u = t / horizon
    return np.concatenate([s, s * s, [u, u ** 2, u ** 3, 1.0]])


def _feature_matrix(states, ts, horizon):
    s = np.asarray(states, dtype=float)
    u = np.asarray(ts, dtype=float)[:, None] / horizon
    return np.concatenate([s, s * s, u, u ** 2, u ** 3, np.ones_like(u)], axis=1)


def fit(trajectories, gamma: float, horizon: int,
        lam: float = 1e-5) -> LinearBaseline:
    """Ridge least squares from features to empirical discounted return-to-go."""
    xs, ys = [], []
    for tau in trajectories:
        if len(tau) == 0:
            continue
        xs.append(_feature_matrix(tau.states, np.arange(len(tau)), horizon))
        ys.append(returns_to_go(tau.rewards, gamma))
    if not xs:
        raise ValueError("no transitions to fit")
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    if lam > 0:
        w = np.linalg.solve(x.T @ x + lam * np.eye(x.shape[1]), x.T @ y)
    else:
        w = np.linalg.lstsq(x, y, rcond=None)[0]
    return LinearBaseline(weights=w, lam=lam)


def predict(baseline: LinearBaseline, state, t: int, horizon: int) -> float:
    if baseline.weights is None:
        return 0.0
    return float(features(state, t, horizon) @ baseline.weights)


def predict_many(baseline: LinearBaseline, states, ts, horizon: int) -> np.ndarray:
    if baseline.weights is None:
        return np.zeros(len(states))
    return _feature_matrix(states, ts, horizon) @ baseline.weights
