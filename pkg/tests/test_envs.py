import json

import numpy as np
import pytest

from ensemblerl.core import ModelParams, SourceDistribution, sample_params, substream
from ensemblerl.envs import PendulumEnv, SpringHopperEnv, default_source, make_env


def pparams(m=1.0, l=1.0, c=0.0):
    return ModelParams(("m", "l", "c"), np.array([m, l, c]))


def hparams(m=1.0, k=50.0, c=0.0, l0=1.0):
    return ModelParams(("m", "k", "c", "l0"), np.array([m, k, c, l0]))


class TestPendulumStep:
    def test_upright_fixed_point(self, pendulum):
        state, reward, term = pendulum.step([0.0, 0.0], [0.0], pparams())
        assert np.array_equal(state, [0.0, 0.0])
        assert reward == 0.0
        assert term is False

    def test_hanging_no_torque(self, pendulum):
        # sin(pi) = 0, so velocity stays 0 and the angle does not move
        # (up to float(pi) rounding)
        state, _, _ = pendulum.step([np.pi, 0.0], [0.0], pparams(c=0.0))
        assert state[1] == pytest.approx(0.0, abs=1e-15)
        assert state[0] == pytest.approx(np.pi, abs=1e-15)

    def test_hand_evaluated_step(self):
        env = PendulumEnv(gravity=9.81, dt=0.05)
        state, _, _ = env.step([np.pi / 2, 0.0], [0.0], pparams(m=1.0, l=1.0, c=0.0))
        assert state[1] == pytest.approx(0.4905, abs=1e-12)
        assert state[0] == pytest.approx(np.pi / 2 + 0.0245, abs=1e-4)

    def test_torque_clipping(self, pendulum):
        hi, _, _ = pendulum.step([1.0, 0.0], [1e9], pparams())
        at_max, _, _ = pendulum.step([1.0, 0.0], [pendulum.max_torque], pparams())
        assert np.array_equal(hi, at_max)

    def test_pure_function(self, pendulum):
        a = pendulum.step([0.3, -0.2], [0.5], pparams(c=0.1))
        b = pendulum.step([0.3, -0.2], [0.5], pparams(c=0.1))
        assert np.array_equal(a[0], b[0]) and a[1] == b[1]

    def test_energy_near_conserved_unforced(self):
        # semi-implicit Euler keeps energy drift bounded; scale = m * g * l
        env = PendulumEnv()
        p = pparams(m=1.0, l=1.0, c=0.0)
        state = np.array([np.pi - 0.5, 0.0])
        e0 = env.energy(state, p)
        scale = 1.0 * env.gravity * 1.0
        for _ in range(200):
            state, _, _ = env.step(state, [0.0], p)
            assert abs(env.energy(state, p) - e0) < 0.05 * scale


class TestHopperStep:
    def test_ballistic_flight(self, hopper):
        for thrust in (-3.0, 0.0, 3.0):
            state, _, _ = hopper.step([2.0, 0.0], [thrust], hparams())
            assert state[1] == pytest.approx(-hopper.gravity * hopper.dt, abs=1e-15)

    def test_stance_equilibrium_fixed(self, hopper):
        for c in (0.0, 1.0, 5.0):
            z_star = 1.0 - 1.0 * hopper.gravity / 50.0
            state, _, _ = hopper.step([z_star, 0.0], [0.0], hparams(c=c))
            assert state[0] == pytest.approx(z_star, abs=1e-15)
            assert state[1] == pytest.approx(0.0, abs=1e-15)

    def test_crash_threshold(self, hopper):
        state, reward, terminated = hopper.step([0.29, 0.0], [0.0], hparams())
        assert terminated
        # alive bonus withheld on the crash step
        assert reward == pytest.approx(max(state[1], 0.0))

    def test_alive_bonus_when_healthy(self, hopper):
        _, reward, terminated = hopper.step([1.2, 0.0], [0.0], hparams())
        assert not terminated
        assert reward == pytest.approx(1.0)  # falling, so no velocity reward

    def test_continuous_at_contact_boundary(self, hopper):
        # spring force vanishes at z = l0: acceleration matches across modes
        delta = 1e-9
        above, _, _ = hopper.step([1.0 + delta, 0.0], [0.0], hparams())
        below, _, _ = hopper.step([1.0 - delta, 0.0], [0.0], hparams())
        assert abs(above[1] - below[1]) < 1e-6

    def test_positivity_required(self, hopper):
        with pytest.raises(ValueError):
            hopper.step([1.0, 0.0], [0.0], hparams(m=-1.0))

    def test_l0_default_filled(self, hopper, small_policy):
        from ensemblerl.core import rollout
        p = ModelParams(("m", "k", "c"), np.array([1.0, 50.0, 1.0]))
        tau = rollout(hopper, p, small_policy, 5, substream(0, 2, 0))
        assert len(tau) == 5


class TestDefaultSources:
    # the mass/length/stiffness dims copy the two-sigma bound structure of
    # the shipped-prior layout; the damping dims widen the top side instead
    # of going negative at the bottom
    def test_pendulum_bound_structure(self, pendulum):
        src = default_source(pendulum)
        assert np.allclose(src.low, src.mu - 2 * src.sigma)
        for name in ("m", "l"):
            i = src.names.index(name)
            assert src.high[i] == pytest.approx(src.mu[i] + 2 * src.sigma[i])
        i = src.names.index("c")
        assert src.mu[i] + 2 * src.sigma[i] <= src.high[i]

    def test_hopper_bound_structure(self, hopper):
        src = default_source(hopper)
        assert np.allclose(src.low, src.mu - 2 * src.sigma)
        for name in ("m", "k"):
            i = src.names.index(name)
            assert src.high[i] == pytest.approx(src.mu[i] + 2 * src.sigma[i])

    def test_json_round_trip_identity(self, pendulum):
        src = default_source(pendulum)
        again = SourceDistribution.from_dict(json.loads(src.to_json()))
        assert again.names == src.names
        for f in ("mu", "sigma", "low", "high"):
            assert np.array_equal(getattr(again, f), getattr(src, f))

    def test_samples_keep_positivity(self, pendulum, hopper):
        for env, names in ((pendulum, ("m", "l")), (hopper, ("m", "k"))):
            src = default_source(env)
            rng = substream(0, 9)
            for _ in range(200):
                p = sample_params(src, rng)
                for n in names:
                    assert p.get(n) > 0


class TestRegistry:
    def test_make_env(self):
        assert isinstance(make_env("pendulum"), PendulumEnv)
        assert isinstance(make_env("spring_hopper"), SpringHopperEnv)

    def test_unknown_name(self):
        with pytest.raises(ValueError, match="unknown environment"):
            make_env("walker")
