"""Desk-scale parametrized dynamical systems.

Two environments with the hard parts of the bigger locomotion benchmarks
kept intact: a torque-limited pendulum (underactuation, strong parameter
sensitivity) and a one-dimensional spring-leg hopper (contact discontinuity,
crash termination). Both use semi-implicit Euler and are pure functions of
(state, action, params).
"""

from __future__ import annotations

import numpy as np

from .core import EnvSpec, ModelParams, SourceDistribution, stack_params
from .errors import NumericalBlowupError


def _wrap_angle(theta):
    """Wrap to (-pi, pi]."""
    return np.pi - np.mod(np.pi - theta, 2.0 * np.pi)


class PendulumEnv:
    """Inverted pendulum with direct torque control, angle 0 = upright.

    Dynamics: theta_dd = (g / l) sin(theta) + (a - c * theta_d) / (m l^2),
    stepped with semi-implicit Euler. The torque limit is far below the
    gravity torque of the heavier models, so getting upright requires
    pumping energy over several swings.

    Reward is the negative quadratic cost
    -(wrap(theta)^2 + 0.1 theta_d^2 + 0.001 a^2); episodes never terminate
    early.
    """

    name = "pendulum"

    def __init__(self, gravity=9.81, dt=0.05, max_torque=6.0, horizon=200,
                 init_state=None):
        self.gravity = gravity
        self.dt = dt
        self.max_torque = max_torque
        self.init_state = None if init_state is None else np.asarray(init_state, float)
        self.spec = EnvSpec(
            state_dim=2,
            action_dim=1,
            action_low=np.array([-max_torque]),
            action_high=np.array([max_torque]),
            default_horizon=horizon,
            param_names=("m", "l", "c"),
            param_defaults={},
        )
        self.state_scale = np.array([np.pi, 5.0])

    def reset(self, rng, params):
        if self.init_state is not None:
            return self.init_state.copy()
        # hanging start with a small perturbation band: episode difficulty is
        # then driven by the model parameters, not by the draw of the start
        theta = np.pi + rng.uniform(-0.3, 0.3)
        return np.array([theta, rng.uniform(-0.5, 0.5)])

    def step_many(self, states, actions, stacked):
        theta = states[:, 0]
        omega = states[:, 1]
        torque = np.clip(actions[:, 0], -self.max_torque, self.max_torque)
        m, l, c = stacked["m"], stacked["l"], stacked["c"]

        accel = (self.gravity / l) * np.sin(theta) + (torque - c * omega) / (m * l ** 2)
        omega_next = omega + self.dt * accel
        theta_next = theta + self.dt * omega_next

        wrapped = _wrap_angle(theta_next)
        reward = -(wrapped ** 2 + 0.1 * omega_next ** 2 + 0.001 * torque ** 2)
        next_states = np.stack([theta_next, omega_next], axis=1)
        terminated = np.zeros(states.shape[0], dtype=bool)
        return next_states, reward, terminated

    def step(self, state, action, params):
        next_states, rewards, terminated = self.step_many(
            np.asarray(state, float)[None, :],
            np.asarray(action, float).reshape(1, -1),
            stack_params([params]),
        )
        if not np.all(np.isfinite(next_states)):
            raise NumericalBlowupError("non-finite pendulum state")
        return next_states[0], float(rewards[0]), bool(terminated[0])

    def default_source(self) -> SourceDistribution:
        return SourceDistribution(
            names=("m", "l", "c"),
            mu=np.array([1.0, 1.0, 0.1]),
            sigma=np.array([0.3, 0.15, 0.05]),
            low=np.array([0.4, 0.7, 0.0]),
            high=np.array([1.6, 1.3, 0.25]),
        )

    def energy(self, state, params):
        """Total mechanical energy, potential measured from the pivot."""
        theta, omega = state
        m, l = params.get("m"), params.get("l")
        return 0.5 * m * l ** 2 * omega ** 2 + m * self.gravity * l * np.cos(theta)


class SpringHopperEnv:
    """One-dimensional hopper: a body on a massless spring leg.

    Flight (z > l0): ballistic, thrust is ignored. Stance (z <= l0):
    z_dd = (k (l0 - z) + a - c z_d) / m - g. The mode switch at z = l0 is
    the only discontinuity source (spring force vanishes at the boundary).

    Reward is upward velocity clamped at 0 plus an alive bonus of 1; the
    bonus is withheld on the crash step. Crash when height drops below
    0.3 * l0.
    """

    name = "spring_hopper"

    CRASH_FRACTION = 0.3
    ALIVE_BONUS = 1.0

    def __init__(self, gravity=9.81, dt=0.01, max_thrust=5.0, horizon=500,
                 init_state=None):
        self.gravity = gravity
        self.dt = dt
        self.max_thrust = max_thrust
        self.init_state = None if init_state is None else np.asarray(init_state, float)
        self.spec = EnvSpec(
            state_dim=2,
            action_dim=1,
            action_low=np.array([-max_thrust]),
            action_high=np.array([max_thrust]),
            default_horizon=horizon,
            param_names=("m", "k", "c"),
            param_defaults={"l0": 1.0},
        )
        self.state_scale = np.array([1.0, 3.0])

    def reset(self, rng, params):
        if self.init_state is not None:
            return self.init_state.copy()
        l0 = params.get("l0")
        return np.array([l0 * rng.uniform(1.05, 1.35), 0.0])

    def step_many(self, states, actions, stacked):
        z = states[:, 0]
        zd = states[:, 1]
        thrust = np.clip(actions[:, 0], -self.max_thrust, self.max_thrust)
        m, k, c = stacked["m"], stacked["k"], stacked["c"]
        l0 = stacked["l0"]

        if np.any(m <= 0) or np.any(k <= 0) or np.any(l0 <= 0):
            raise ValueError("hopper requires m > 0, k > 0, l0 > 0")

        stance = z <= l0
        accel = np.where(
            stance,
            (k * (l0 - z) + thrust - c * zd) / m - self.gravity,
            -self.gravity,
        )
        zd_next = zd + self.dt * accel
        z_next = z + self.dt * zd_next

        crashed = (z < self.CRASH_FRACTION * l0) | (z_next < self.CRASH_FRACTION * l0)
        reward = np.maximum(zd_next, 0.0) + np.where(crashed, 0.0, self.ALIVE_BONUS)
        next_states = np.stack([z_next, zd_next], axis=1)
        return next_states, reward, crashed

    def step(self, state, action, params):
        next_states, rewards, terminated = self.step_many(
            np.asarray(state, float)[None, :],
            np.asarray(action, float).reshape(1, -1),
            stack_params([_with_defaults(self, params)]),
        )
        if not np.all(np.isfinite(next_states)):
            raise NumericalBlowupError("non-finite hopper state")
        return next_states[0], float(rewards[0]), bool(terminated[0])

    def default_source(self) -> SourceDistribution:
        return SourceDistribution(
            names=("m", "k", "c"),
            mu=np.array([1.0, 50.0, 1.0]),
            sigma=np.array([0.25, 10.0, 0.4]),
            low=np.array([0.5, 30.0, 0.2]),
            high=np.array([1.5, 70.0, 2.0]),
        )


def _with_defaults(env, params: ModelParams) -> ModelParams:
    extra = {n: v for n, v in env.spec.param_defaults.items()
             if n not in params.names}
    if not extra:
        return params
    names = params.names + tuple(extra)
    values = np.concatenate([params.values, np.array(list(extra.values()))])
    return ModelParams(names, values)


ENV_REGISTRY = {
    PendulumEnv.name: PendulumEnv,
    SpringHopperEnv.name: SpringHopperEnv,
}


def make_env(name: str, **kwargs):
    if name not in ENV_REGISTRY:
        raise ValueError(
            f"unknown environment '{name}'; expected one of {sorted(ENV_REGISTRY)}"
        )
    return ENV_REGISTRY[name](**kwargs)


def default_source(env) -> SourceDistribution:
    """The shipped prior over an environment's physical parameters."""
    return env.default_source()
