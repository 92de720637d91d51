import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pairlindblad import meanfield, qcore
from pairlindblad.meanfield import IntegrationError, ModelSpec, Trajectory

DECAY = ModelSpec.pair_decay()
DEPHASE = ModelSpec.pair_dephasing(math.pi / 4)
SINGLET = ModelSpec.singlet_purification()
MODELS = [DECAY, DEPHASE, ModelSpec.pair_dephasing(1.1, 0.7), SINGLET, ModelSpec.pair_decay(2.0)]
STATES = qcore.random_bloch_vectors(20, seed=5)


# model_rhs --------------------------------------------------------------


def test_model_rhs_examples():
    np.testing.assert_allclose(meanfield.model_rhs(DECAY, (0, 0, -1)), (0, 0, 2), atol=1e-15)
    np.testing.assert_array_equal(meanfield.model_rhs(SINGLET, (0, 0, 1)), (0, 0, 0))
    np.testing.assert_allclose(meanfield.model_rhs(DEPHASE, (1, 0, 0)), (-0.5, 0, 0), atol=1e-15)


@pytest.mark.parametrize("model", MODELS, ids=lambda m: f"{m.kind.value}-{m.gamma}")
def test_model_rhs_matches_generic_reduction(model):
    gen = model.generator()
    for u in STATES:
        expected = qcore.bloch_rhs(gen, u)
        np.testing.assert_allclose(meanfield.model_rhs(model, u), expected, atol=1e-12, rtol=0)


@pytest.mark.parametrize("model", MODELS, ids=lambda m: f"{m.kind.value}-{m.gamma}")
def test_model_rhs_batches(model):
    batch = meanfield.model_rhs(model, STATES)
    for u, row in zip(STATES, batch):
        np.testing.assert_allclose(row, meanfield.model_rhs(model, u), atol=1e-15)


def test_model_spec_validation():
    with pytest.raises(ValueError):
        ModelSpec.pair_decay(0.0)
    with pytest.raises(ValueError):
        ModelSpec.pair_dephasing(0.0)
    with pytest.raises(ValueError):
        ModelSpec(meanfield.ModelKind.PAIR_DEPHASING)


# integrate --------------------------------------------------------------


def test_integrate_examples():
    traj = meanfield.integrate(DECAY, (0, 0, 0.3), 0.0)
    assert len(traj) == 1
    np.testing.assert_array_equal(traj.final, (0, 0, 0.3))
    assert abs(meanfield.integrate(DECAY, (0, 0, -1), 2.0, 1e-3).final[2] - 1 / 3) <= 1e-8
    assert abs(meanfield.integrate(SINGLET, (0, 0, 0), 4.0, 1e-3).final[2] - math.tanh(1)) <= 1e-8


def test_integrate_lands_exactly_on_t_end():
    traj = meanfield.integrate(DECAY, (0, 0, -1), 0.0105, 1e-3)
    assert traj.times[-1] == 0.0105
    assert np.all(np.diff(traj.times) > 0)
    assert len(traj) == 12


def test_integrate_preconditions():
    with pytest.raises(ValueError):
        meanfield.integrate(DECAY, (0, 0, -1), 1.0, 0.0)
    with pytest.raises(ValueError):
        meanfield.integrate(DECAY, (0, 0, -1), -1.0)
    with pytest.raises(ValueError):
        meanfield.integrate(DECAY, (0.9, 0.9, 0), 1.0)


def test_oversized_step_is_rejected():
    with pytest.raises(IntegrationError):
        meanfield.integrate(ModelSpec.pair_decay(50.0), (0, 0, -1), 1.0, 0.5)


def test_single_and_batch_paths_agree():
    batch = meanfield.integrate(DEPHASE, STATES[:5], 1.0, 1e-2)
    for k in range(5):
        single = meanfield.integrate(DEPHASE, STATES[k], 1.0, 1e-2)
        np.testing.assert_allclose(batch.states[:, k], single.states, atol=1e-14)


def test_trajectory_validation():
    with pytest.raises(ValueError):
        Trajectory(np.array([0.0, 0.0]), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        Trajectory(np.array([0.0]), np.array([[1.0, 1.0, 0.0]]))


def test_richardson_error_is_tiny_at_default_step():
    assert meanfield.richardson_error(DECAY, (0, 0, -1), 2.0) < 1e-12


# closed forms -----------------------------------------------------------


def test_decay_uz_exact_examples():
    assert meanfield.decay_uz_exact(1.0, 1.0, 123.0) == 1.0
    assert meanfield.decay_uz_exact(-1.0, 1.0, 2.0) == pytest.approx(1 / 3, abs=1e-15)
    for t in (1e3, 1e4):
        gap = 1 - meanfield.decay_uz_exact(-1.0, 1.0, t)
        assert abs(gap - 2 / t) < 5 / t**2


def test_decay_transverse_examples():
    t = np.array([0.0, 1.0, 5.0])
    exact = meanfield.decay_transverse_exact((0, 0.3, -0.2), 1.0, t)
    np.testing.assert_array_equal(exact[:, 0], 0.0)
    traj = meanfield.integrate(DECAY, (0.5, 0, -0.5), 5.0)
    for tk in t:
        u = traj.states[np.argmin(np.abs(traj.times - tk))]
        assert abs(u[0] ** 2 / (1 - u[2]) - 1 / 6) <= 1e-8
    far = meanfield.decay_transverse_exact((0.5, 0, -0.5), 1.0, 1e12)
    np.testing.assert_allclose(far, (0, 0, 1), atol=1e-5)
    np.testing.assert_array_equal(meanfield.decay_transverse_exact((0, 0, 1), 1.0, 3.0), (0, 0, 1))


def test_dephasing_exact_examples():
    for uz in (-1, -0.3, 0.4, 1):
        assert meanfield.dephasing_rate(uz, math.pi / 2, 1.7) == pytest.approx(1.7, abs=1e-15)
    assert meanfield.dephasing_rate(-1, math.pi / 4) == pytest.approx(0.0, abs=1e-15)
    assert meanfield.dephasing_rate(1, math.pi / 4) == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_allclose(meanfield.dephasing_exact((0, 0, -1), math.pi / 4, 1.0, 7.0), (0, 0, -1))


def test_hemisphere_exact_examples():
    np.testing.assert_allclose(meanfield.hemisphere_exact((0, 0, 0), 4.0), (0, 0, math.tanh(1)), atol=1e-15)
    np.testing.assert_array_equal(meanfield.hemisphere_exact((0.6, 0, 0.8), 9.0), (0.6, 0, 0.8))
    np.testing.assert_allclose(meanfield.hemisphere_exact((0.6, 0, 0), 200.0), (0.6, 0, 0.8), atol=1e-14)
    np.testing.assert_array_equal(meanfield.hemisphere_exact((1, 0, 0), 3.0), (1, 0, 0))


def _exact(model, u0, times):
    if model.kind is meanfield.ModelKind.PAIR_DECAY:
        return meanfield.decay_transverse_exact(u0, model.gamma, times)
    if model.kind is meanfield.ModelKind.PAIR_DEPHASING:
        return meanfield.dephasing_exact(u0, model.theta, model.gamma, times)
    return meanfield.hemisphere_exact(u0, times, model.gamma)


@pytest.mark.parametrize("model", MODELS, ids=lambda m: f"{m.kind.value}-{m.gamma}")
def test_integration_matches_closed_form(model):
    traj = meanfield.integrate(model, STATES, 5.0)
    for k, u0 in enumerate(STATES):
        err = np.max(np.abs(traj.states[:, k] - _exact(model, u0, traj.times)))
        assert err <= 1e-8


# invariants -------------------------------------------------------------


def test_parabola_invariant():
    traj = meanfield.integrate(DECAY, STATES, 20.0)
    gap = 1 - traj.states[..., 2]
    for axis in (0, 1):
        q = traj.states[..., axis] ** 2 / gap
        assert np.max(np.abs(q - q[0])) <= 1e-8


def test_constants_of_motion():
    traj = meanfield.integrate(ModelSpec.pair_dephasing(0.8), STATES, 20.0)
    assert np.max(np.abs(traj.states[..., 2] - STATES[:, 2])) < 1e-10
    traj = meanfield.integrate(SINGLET, STATES, 20.0)
    assert np.max(np.abs(traj.states[..., :2] - STATES[:, :2])) < 1e-10


def test_purity_rate_follows_sign_of_uz():
    # d|u|^2/dt = u_z (1 - |u|^2) / 2 under singlet purification
    for u in STATES:
        d = 2 * np.dot(u, meanfield.model_rhs(SINGLET, u))
        assert d == pytest.approx(u[2] * (1 - u @ u) / 2, abs=1e-15)
        assert np.sign(d) == np.sign(u[2]) or abs(d) < 1e-15


def test_purity_non_decreasing_from_upper_hemisphere():
    upper = STATES[STATES[:, 2] >= 0]
    traj = meanfield.integrate(SINGLET, upper, 20.0)
    purity = 0.5 * (1 + np.sum(traj.states**2, axis=-1))
    assert np.min(np.diff(purity, axis=0)) >= -1e-14


@pytest.mark.parametrize("model", MODELS, ids=lambda m: f"{m.kind.value}-{m.gamma}")
def test_ball_confinement(model):
    edge = STATES / np.linalg.norm(STATES, axis=1, keepdims=True)
    traj = meanfield.integrate(model, np.vstack([STATES, edge]), 10.0)
    assert np.max(np.linalg.norm(traj.states, axis=-1)) <= 1 + 1e-8


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, math.pi - 0.05), st.floats(-1, 1))
def test_dephasing_rate_within_interval(theta, uz):
    g = meanfield.dephasing_rate(uz, theta)
    lo = math.sin(theta) ** 2 * (1 - abs(math.sin(2 * theta)))
    hi = math.sin(theta) ** 2 * (1 + abs(math.sin(2 * theta)))
    assert lo - 1e-15 <= g <= hi + 1e-15


def test_rate_scan_hits_interval_endpoints():
    theta = math.pi / 4
    reports, _ = meanfield.dephasing_rate_scan(theta, [-1, -0.5, 0, 0.5, 1])
    lo, hi = 0.0, 1.0
    for rep in reports:
        assert lo - 1e-6 <= rep.fitted_rate <= hi + 1e-6
        assert abs(rep.fitted_rate - rep.predicted_rate) <= 1e-6
    assert abs(reports[0].fitted_rate - lo) <= 1e-6
    assert abs(reports[-1].fitted_rate - hi) <= 1e-6


# rate fitting -----------------------------------------------------------


def test_fit_exact_exponential():
    t = np.linspace(0, 10, 1001)
    states = np.stack([np.exp(-0.5 * t), 0 * t, 0 * t], axis=1)
    rep = meanfield.fit_exponential_rate(Trajectory(t, states), "x")
    assert abs(rep.fitted_rate - 0.5) <= 1e-12
    assert rep.residual >= 0


def test_fit_dephasing_rate():
    traj = meanfield.integrate(DEPHASE, (0.5, 0, 0.5), 10.0)
    rep = meanfield.fit_exponential_rate(traj, "x", predicted_rate=0.75)
    assert abs(rep.fitted_rate - 0.75) <= 1e-6


def test_fit_flags_power_law():
    dephase = meanfield.fit_exponential_rate(meanfield.integrate(DEPHASE, (0.5, 0, 0.5), 10.0), "x", predicted_rate=0.75)
    decay = meanfield.fit_exponential_rate(meanfield.integrate(DECAY, (0, 0, -1), 10.0), "z", fixed_point=1.0)
    assert decay.residual > 10 * max(dephase.residual, 1e-12)
    assert decay.residual > 0.1


def test_fit_rejects_sign_change():
    t = np.linspace(0, 10, 101)
    states = np.stack([np.cos(t) * 0.5, 0 * t, 0 * t], axis=1)
    with pytest.raises(ValueError, match="sign"):
        meanfield.fit_exponential_rate(Trajectory(t, states), "x")
