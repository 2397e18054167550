import numpy as np
import pytest

from pagarch.errors import EstimationError, ParameterError
from pagarch.garch import (
    GarchFitOptions,
    c_h_sensitivity,
    fit_garch,
    variance_target,
    vt_quasi_loglik,
)
from pagarch.model import ArmaParams, GarchParams, ModelOrders, simulate

from conftest import design_params


def garch_noise(n, t, tau, nu, seed, omega=None):
    omega = np.linspace(1.0, 3.0, n) if omega is None else omega
    orders = ModelOrders(0, 0, len(tau), len(nu))
    _, state = simulate(
        orders,
        ArmaParams(mu=np.zeros(n)),
        GarchParams(omega, tau, nu),
        t,
        seed=seed,
        return_state=True,
    )
    return state.u, omega


def test_variance_target_examples():
    np.testing.assert_allclose(variance_target(np.ones((2, 5))), [1.0, 1.0])
    assert variance_target(np.array([[1.0, -1.0, 2.0]]))[0] == pytest.approx(2.0)


def test_variance_target_zero_unit():
    u = np.ones((3, 4))
    u[2] = 0.0
    with pytest.raises(EstimationError, match="unit 2"):
        variance_target(u)


def test_variance_target_converges():
    u, omega = garch_noise(3, 100_000, [0.2], [0.4], seed=5)
    np.testing.assert_allclose(variance_target(u), omega, rtol=0.02)


def test_loglik_constant_variance(rng):
    u = rng.standard_normal((2, 50)) * [[1.0], [2.0]]
    omega = np.array([1.5, 3.0])
    expected = -0.5 * np.sum(np.log(omega)[:, None] + u**2 / omega[:, None])
    assert vt_quasi_loglik(([0.0], [0.0]), omega, u) == pytest.approx(expected, rel=1e-13)
    best = vt_quasi_loglik(([0.0], [0.0]), variance_target(u), u)
    for f in (0.9, 1.1):
        assert vt_quasi_loglik(([0.0], [0.0]), variance_target(u) * f, u) < best


def test_loglik_hand_case():
    value = vt_quasi_loglik(([0.2], [0.4]), [1.0], np.array([[1.0, 1.0]]), c_h=1.0)
    expected = -0.5 * ((np.log(0.8) + 1.25) + (np.log(0.92) + 1 / 0.92))
    assert value == pytest.approx(expected, rel=1e-14)


def test_loglik_continuity(rng):
    u = rng.standard_normal((3, 80))
    omega = variance_target(u)
    a = vt_quasi_loglik(([0.2], [0.4]), omega, u)
    b = vt_quasi_loglik(([0.2 + 1e-8], [0.4 - 1e-8]), omega, u)
    assert abs(a - b) <= 1e-4 * abs(a)


def test_loglik_rejects_invalid_zeta(rng):
    with pytest.raises(ParameterError):
        vt_quasi_loglik(([0.7], [0.3]), [1.0], rng.standard_normal((1, 5)))
    with pytest.raises(ParameterError):
        vt_quasi_loglik(([-0.1], [0.3]), [1.0], rng.standard_normal((1, 5)))


def test_fit_recovers_truth(backend):
    u, omega = garch_noise(50, 400, [0.2], [0.4], seed=3)
    fit = fit_garch(u, 1, 1)
    assert fit.converged and not fit.boundary
    np.testing.assert_allclose(fit.zeta_hat, [0.2, 0.4], atol=0.06)
    assert fit.loglik >= vt_quasi_loglik(([0.2], [0.4]), fit.omega_hat, u) - 1e-6
    np.testing.assert_allclose(fit.varpi_hat, fit.omega_hat * (1 - fit.zeta_hat.sum()))


def test_fit_scale_equivariance():
    u, _ = garch_noise(20, 200, [0.2], [0.4], seed=8)
    a = fit_garch(u, 1, 1)
    b = fit_garch(3.0 * u, 1, 1)
    np.testing.assert_allclose(b.omega_hat, 9.0 * a.omega_hat, rtol=1e-12)
    np.testing.assert_allclose(b.zeta_hat, a.zeta_hat, atol=1e-6)


def test_fitted_variance_averages_to_target():
    u, _ = garch_noise(4, 10_000, [0.2], [0.4], seed=1)
    fit = fit_garch(u, 1, 1)
    np.testing.assert_allclose(fit.h_hat.mean(axis=1), fit.omega_hat, rtol=0.05)


def test_iid_residuals_arch_effect_vanishes():
    rng = np.random.default_rng(12)
    u = rng.standard_normal((10, 10_000)) * np.sqrt(np.linspace(1, 3, 10))[:, None]
    fit = fit_garch(u, 1, 1)
    assert fit.tau[0] <= 0.02
    # with tau at zero the fitted variance is flat whatever nu is
    rel = fit.h_hat / fit.omega_hat[:, None]
    assert np.abs(rel - 1).max() < 0.05
    assert rel.std() < 0.01
    arch = fit_garch(u, 1, 0)
    assert np.linalg.norm(arch.zeta_hat) <= 0.02


def test_pure_arch_and_higher_orders():
    u, _ = garch_noise(30, 300, [0.1, 0.1], [0.3], seed=4)
    fit = fit_garch(u, 2, 1)
    assert fit.zeta_hat.shape == (3,)
    assert fit.zeta_hat.sum() < 1
    assert np.all(fit.zeta_hat >= 0)


def test_fit_rejects_bad_orders():
    with pytest.raises(ParameterError):
        fit_garch(np.ones((1, 40)), 0, 1)


def test_custom_c_h_changes_filter():
    u, _ = garch_noise(5, 100, [0.2], [0.4], seed=2)
    a = fit_garch(u, 1, 1)
    b = fit_garch(u, 1, 1, c_h=10.0)
    assert not np.allclose(a.h_hat[:, 0], b.h_hat[:, 0])
    np.testing.assert_allclose(b.c_h, 10.0)


def test_two_step_on_simulated_panel():
    from pagarch.arma import fit_arma

    orders, arma, garch = design_params(50, seed=21)
    panel = simulate(orders, arma, garch, 150, seed=21, burn_in=0)
    first = fit_arma(panel, orders)
    second = fit_garch(first.residuals, 1, 1, GarchFitOptions(multistart=False))
    np.testing.assert_allclose(second.zeta_hat, [0.2, 0.4], atol=0.15)


def test_c_h_sensitivity_shrinks_with_longer_panels():
    short, _ = garch_noise(20, 60, [0.2], [0.4], seed=3)
    long, _ = garch_noise(20, 2000, [0.2], [0.4], seed=3)
    s_short = c_h_sensitivity(short, fit_garch(short))
    s_long = c_h_sensitivity(long, fit_garch(long))
    assert s_short > 0.0
    assert s_long < s_short and s_long <= 5e-3
