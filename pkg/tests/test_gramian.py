import math

import numpy as np
import pytest

from switchid import (
    DisturbanceTrack,
    SwitchingSignal,
    assemble_closed_loop,
    data_distance,
    envelope_tables,
    gamma_bound,
    joint_gramian,
    natural_distance,
    observability_gramian,
    simulate_autonomous,
    simulate_forced,
)
from switchid.gramian import EnvelopeTable, NonDiscerningError, envelope_from_values, segment_gramian
from switchid.models import gain_bank, servo_plant
from switchid.sim import default_dt, sample_weights

from .conftest import constant_plant, scalar_param_plant


def taylor_step(M, h, order=14):
    """``exp(M h)`` by truncated Taylor series; accurate when ``|M h|`` is small."""
    E = np.eye(M.shape[0])
    term = np.eye(M.shape[0])
    for k in range(1, order + 1):
        term = term @ (M * h) / k
        E = E + term
    return E


def trapezoid_gramian(Psi, Lam, T, steps):
    """Dense trapezoid sum of ``Phi' Lam' Lam Phi`` with batched powers of one step."""
    n = Psi.shape[0]
    h = T / steps
    E = taylor_step(Psi, h)
    B = int(math.isqrt(steps)) + 1
    small = np.empty((B, n, n))
    small[0] = np.eye(n)
    for i in range(1, B):
        small[i] = E @ small[i - 1]
    EB = E @ small[B - 1]
    n_big = steps // B + 1
    big = np.empty((n_big, n, n))
    big[0] = np.eye(n)
    for j in range(1, n_big):
        big[j] = EB @ big[j - 1]
    Phi = np.einsum("iab,jbc->jiac", small, big).reshape(-1, n, n)[: steps + 1]
    Y = np.einsum("pa,kab->kpb", Lam, Phi)
    w = np.full(steps + 1, h)
    w[0] = w[-1] = h / 2
    return np.einsum("k,kpa,kpb->ab", w, Y, Y)


def test_constant_output_gramian_equals_horizon():
    plant = constant_plant([[0.0]], [[0.0]], [[1.0]])
    bank = gain_bank(0.0)
    sigma = SwitchingSignal((0.0,), (0,), 2.5)
    W = observability_gramian(plant, bank, sigma, [0.5])
    # output z = (u, y) = (0, x)
    assert W.item() == pytest.approx(2.5, rel=1e-14)


def test_decaying_output_gramian_closed_form():
    plant = constant_plant([[-1.0]], [[0.0]], [[1.0]])
    sigma = SwitchingSignal((0.0,), (0,), 1.7)
    W = observability_gramian(plant, gain_bank(0.0), sigma, [0.5])
    assert W.item() == pytest.approx((1 - math.exp(-2 * 1.7)) / 2, rel=1e-13)


@pytest.mark.parametrize("n", [1, 2, 4, 6])
def test_segment_gramian_matches_dense_quadrature(n):
    rng = np.random.default_rng(n)
    Psi = rng.standard_normal((n, n))
    Lam = rng.standard_normal((2, n))
    W, E = segment_gramian(Psi, Lam, 1.3)
    W_ref = trapezoid_gramian(Psi, Lam, 1.3, 20000)
    np.testing.assert_allclose(W, W_ref, rtol=1e-6, atol=1e-6 * np.abs(W_ref).max())
    np.testing.assert_allclose(E, np.linalg.matrix_power(taylor_step(Psi, 1.3 / 64), 64), rtol=1e-10, atol=1e-12)


def test_gramian_positive_definite_under_certified_bank(servo_two):
    plant, bank, sigma = servo_two
    for th in plant.theta_box.sample(np.random.default_rng(0), 10):
        assert np.linalg.eigvalsh(observability_gramian(plant, bank, sigma, th))[0] > 0


def test_joint_gramian_blocks_match_separate_gramians(dynamic_setup):
    plant, bank, sigma = dynamic_setup
    # the plant ignores its parameter, so both blocks are the same Gramian
    gp = joint_gramian(plant, bank, sigma, [0.2], [0.9])
    W = observability_gramian(plant, bank, sigma, [0.2])
    np.testing.assert_allclose(gp.W_theta, W, atol=1e-12)
    np.testing.assert_allclose(gp.W_hat, W, atol=1e-12)


def test_joint_blocks_for_distinct_parameters(servo_two):
    plant, bank, sigma = servo_two
    th, th_hat = np.array([1.4, 1.9]), np.array([2.6, 1.1])
    gp = joint_gramian(plant, bank, sigma, th, th_hat)
    np.testing.assert_allclose(gp.W_theta, observability_gramian(plant, bank, sigma, th), rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(gp.W_hat, observability_gramian(plant, bank, sigma, th_hat), rtol=1e-9, atol=1e-12)
    assert np.linalg.eigvalsh(gp.W_joint)[0] > 0
    np.testing.assert_allclose(gp.W_joint, gp.W_joint.T, atol=0)


def test_joint_gramian_at_equal_parameters(servo_two):
    plant, bank, sigma = servo_two
    gp = joint_gramian(plant, bank, sigma, [2.0, 1.5], [2.0, 1.5])
    np.testing.assert_allclose(gp.U, gp.W_theta, rtol=1e-12)
    np.testing.assert_allclose(gp.V, np.eye(2), atol=1e-10)
    lam = np.linalg.eigvalsh(gp.W_joint)
    assert lam[0] < 1e-10 * lam[-1]


def test_cross_term_matches_quadrature(servo_two):
    plant, bank, sigma = servo_two
    th, th_hat = [1.2, 1.1], [2.9, 1.8]
    gp = joint_gramian(plant, bank, sigma, th, th_hat)
    dt = default_dt(sigma, 4000)
    Y = np.stack([simulate_autonomous(plant, bank, sigma, th, e, dt=dt).samples for e in np.eye(2)], axis=2)
    Yh = np.stack([simulate_autonomous(plant, bank, sigma, th_hat, e, dt=dt).samples for e in np.eye(2)], axis=2)
    w = sample_weights(sigma, dt)
    U = np.einsum("k,kpa,kpb->ab", w, Yh, Y)
    np.testing.assert_allclose(gp.U, U, rtol=1e-5, atol=1e-6)


def test_natural_distance_trivial_cases(servo_two):
    plant, bank, sigma = servo_two
    gp = joint_gramian(plant, bank, sigma, [2.0, 1.5], [2.0, 1.5])
    assert natural_distance(gp, [1.0, -0.3]) == pytest.approx(0.0, abs=1e-6)
    gp = joint_gramian(plant, bank, sigma, [2.0, 1.5], [1.2, 1.9])
    assert natural_distance(gp, [0.0, 0.0]) == 0.0


def test_natural_distance_matches_data_distance(servo_two):
    plant, bank, sigma = servo_two
    th, th_hat, chi0 = [1.3, 1.7], [1.6, 1.2], [1.0, -0.5]
    gp = joint_gramian(plant, bank, sigma, th, th_hat)
    z = simulate_autonomous(plant, bank, sigma, th, chi0, dt=sigma.T / 20000)
    d_nat = natural_distance(gp, chi0)
    d_data = data_distance(z, plant, bank, sigma, th_hat)
    assert d_data == pytest.approx(d_nat, rel=1e-6)


def test_self_distance_is_rounding_level(servo_two):
    plant, bank, sigma = servo_two
    z = simulate_autonomous(plant, bank, sigma, [2.5, 1.2], [0.4, 1.0], dt=default_dt(sigma))
    assert data_distance(z, plant, bank, sigma, [2.5, 1.2]) <= 1e-8 * z.l2_norm(sigma)


def test_zero_data_has_zero_distance(servo_two):
    plant, bank, sigma = servo_two
    z = simulate_autonomous(plant, bank, sigma, [2.5, 1.2], [0.0, 0.0], dt=default_dt(sigma))
    assert data_distance(z, plant, bank, sigma, [1.1, 1.9]) == 0.0


def test_wrong_model_has_positive_distance(servo_two):
    plant, bank, sigma = servo_two
    z = simulate_autonomous(plant, bank, sigma, [2.5, 1.2], [0.4, 1.0], dt=default_dt(sigma))
    assert data_distance(z, plant, bank, sigma, [2.4, 1.25]) > 1e-6 * z.l2_norm(sigma)


def test_singular_model_is_flagged():
    # C = 0: the output carries no state information at all
    plant = constant_plant([[-1.0]], [[1.0]], [[0.0]])
    sigma = SwitchingSignal((0.0,), (0,), 1.0)
    bank = gain_bank(1.0)
    z = simulate_autonomous(plant, bank, sigma, [0.5], [1.0], dt=0.01)
    with pytest.raises(NonDiscerningError):
        data_distance(z, plant, bank, sigma, [0.5])
    assert data_distance(z, plant, bank, sigma, [0.5], allow_singular=True) == 0.0


def test_gamma_bound_holds_for_random_disturbances(servo_two):
    plant, bank, sigma = servo_two
    th = [1.7, 1.4]
    dt = default_dt(sigma, 1000)
    n = round(sigma.T / dt) + 1
    gamma = gamma_bound(plant, bank, sigma, th, dt=dt)
    rng = np.random.default_rng(3)
    for _ in range(100):
        v = DisturbanceTrack.random(rng, 0.0, dt, n, 3, rng.uniform(0.1, 2.0))
        _, zf = simulate_forced(plant, bank, sigma, th, np.zeros(2), v)
        assert zf.l2_norm(sigma) <= gamma * v.sup_norm


def test_gamma_bound_with_blind_output_is_sqrt_horizon():
    # C = 0 and K = 0 give Lambda = 0, leaving only the unit feedthrough of n into y
    plant = constant_plant([[-1.0, 0.0], [0.3, -2.0]], [[1.0], [0.0]], [[0.0, 0.0]])
    sigma = SwitchingSignal((0.0,), (0,), 3.0)
    assert gamma_bound(plant, gain_bank(0.0), sigma, [0.5], dt=0.01) == pytest.approx(math.sqrt(3.0))


def test_gamma_bound_short_horizon_approaches_feedthrough():
    plant = servo_plant()
    bank = gain_bank(2.0)
    th = [1.5, 1.5]
    gam = np.linalg.norm(assemble_closed_loop(plant, bank[0], th).Gamma, 2)
    ratios = []
    for T in (1.0, 0.1, 0.01, 0.001):
        sigma = SwitchingSignal((0.0,), (0,), T)
        ratios.append(gamma_bound(plant, bank, sigma, th, dt=T / 200) / (math.sqrt(T) * gam))
    assert ratios[0] > ratios[1] > ratios[2] > ratios[3] >= 1.0
    assert ratios[3] < 1.01


def test_envelope_anchor_and_monotonicity(servo_two):
    plant, bank, sigma = servo_two
    rng = np.random.default_rng(4)
    pairs = list(zip(plant.theta_box.sample(rng, 15), plant.theta_box.sample(rng, 15)))
    env = envelope_tables(plant, bank, sigma, pairs)
    assert env.alpha(0.0) == 0.0 and env.beta(0.0) == 0.0
    assert np.all(np.diff(env.distances) > 0)
    assert np.all(np.diff(env.alpha_vals) >= 0)
    assert np.all(np.diff(env.beta_vals) >= 0)
    assert np.all(env.alpha_vals <= env.beta_vals)


def test_envelope_sandwich(servo_two):
    plant, bank, sigma = servo_two
    rng = np.random.default_rng(5)
    pairs = list(zip(plant.theta_box.sample(rng, 10), plant.theta_box.sample(rng, 10)))
    env = envelope_tables(plant, bank, sigma, pairs)
    for th, th_hat in pairs:
        gp = joint_gramian(plant, bank, sigma, th, th_hat)
        rho = np.linalg.norm(th - th_hat)
        for _ in range(20):
            chi0 = rng.standard_normal(2)
            d = natural_distance(gp, chi0)
            c = np.linalg.norm(chi0)
            assert env.alpha(rho) * c <= d * (1 + 1e-9)
            assert d <= env.beta(rho) * c * (1 + 1e-9)


def test_envelope_rejects_equal_pairs():
    with pytest.raises(ValueError):
        envelope_from_values([0.0], [1.0], [1.0])


def test_alpha_inverse_is_piecewise_linear_inverse():
    env = EnvelopeTable(np.array([0.0, 1.0, 2.0]), np.array([0.0, 0.5, 2.0]), np.array([0.0, 1.0, 3.0]))
    assert env.alpha_inverse(0.0) == 0.0
    assert env.alpha_inverse(0.25) == pytest.approx(0.5)
    assert env.alpha_inverse(1.25) == pytest.approx(1.5)
    assert math.isinf(env.alpha_inverse(2.0))
    for y in np.linspace(0, 1.99, 17):
        assert env.alpha(env.alpha_inverse(y)) == pytest.approx(y)


def test_envelope_json_round_trip():
    env = EnvelopeTable(np.array([0.0, 1.0]), np.array([0.0, 0.5]), np.array([0.0, 1.0]))
    back = EnvelopeTable.from_json(env.to_json())
    np.testing.assert_array_equal(back.alpha_vals, env.alpha_vals)


def test_scalar_plant_distance_is_positive_for_distinct_poles():
    plant = scalar_param_plant()
    bank = gain_bank(0.5)
    sigma = SwitchingSignal((0.0,), (0,), 2.0)
    gp = joint_gramian(plant, bank, sigma, [-1.2], [-1.8])
    assert natural_distance(gp, [1.0]) > 0
