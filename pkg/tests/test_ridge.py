import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from augridge.features import identity_map, random_mlp_map
from augridge.moments import (
    batch_sample_moments,
    closed_population_moment_set,
)
from augridge.ridge import (
    assemble_design,
    chi_stat,
    empirical_generalization,
    fit,
    overlap_stat,
    population_generalization,
    resolvent_shifted,
    xi_derivative_fd,
    xi_statistic,
)
from augridge.schemes import (
    InvalidParameterError,
    additive_noise,
    salt_and_pepper,
)


def _design(X, Y, fmap, scheme, n_mc=200, seed=0):
    rng = np.random.default_rng(seed)
    psm = batch_sample_moments(scheme, fmap, X, Y, n_mc, rng)
    return assemble_design(X, Y, fmap, psm)


def test_assemble_identity_augmentation_collapses():
    fm = identity_map(3)
    rng = np.random.default_rng(0)
    X = rng.standard_normal((3, 10))
    Y = rng.standard_normal((1, 10))
    d = _design(X, Y, fm, additive_noise(0.0))
    assert np.allclose(d.Cprime, d.C)
    assert np.allclose(d.Hprime, d.H)
    assert np.allclose(d.LambdaEmp, 0.0) and np.allclose(d.OmegaEmp, 0.0)


def test_assemble_tiny_arithmetic():
    fm = identity_map(1)
    d = _design(np.array([[2.0]]), np.array([[3.0]]), fm, additive_noise(0.0))
    assert d.C[0, 0] == pytest.approx(4.0)
    assert d.H[0, 0] == pytest.approx(6.0)
    assert d.n == 1


def test_assemble_additive_lambda_closed():
    fm = identity_map(2)
    rng = np.random.default_rng(1)
    X = rng.standard_normal((2, 5))
    d = _design(X, np.zeros((1, 5)), fm, additive_noise(0.5))
    assert np.allclose(d.LambdaEmp, 0.25 * np.eye(2))


def test_fit_classic_ridge_hand_computed():
    fm = identity_map(1)
    X = np.array([[1.0, -1.0]])
    Y = np.array([[2.0, 0.0]])
    d = _design(X, Y, fm, additive_noise(0.0))
    f = fit(d, 0.0, 1.0)
    assert f.theta_hat[0, 0] == pytest.approx(0.5)


def test_fit_full_augmentation_hand_computed():
    fm = identity_map(1)
    X = np.array([[1.0, -1.0]])
    Y = np.array([[2.0, 0.0]])
    d = _design(X, Y, fm, additive_noise(1.0))
    f = fit(d, 1.0, 1.0)
    # mu_x = x so C' = C = 1, H' = H = 1, Lambda = 1: theta = 1/(1+1+1)
    assert f.theta_hat[0, 0] == pytest.approx(1.0 / 3.0)


def test_fit_huge_lambda_shrinks():
    fm = identity_map(3)
    rng = np.random.default_rng(2)
    X = rng.standard_normal((3, 20))
    Y = rng.standard_normal((1, 20))
    d = _design(X, Y, fm, additive_noise(0.0))
    f = fit(d, 0.0, 1e6)
    assert np.linalg.norm(f.theta_hat) <= np.linalg.norm(d.H) / 1e6 * 1.001


def test_fit_rejects_bad_parameters():
    fm = identity_map(2)
    d = _design(np.eye(2), np.ones((1, 2)), fm, additive_noise(0.0))
    with pytest.raises(InvalidParameterError):
        fit(d, 0.0, 0.0)
    with pytest.raises(InvalidParameterError):
        fit(d, 1.5, 0.1)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000),
       alpha=st.floats(0.0, 1.0),
       lam=st.floats(0.01, 10.0))
def test_normal_equation_residual(seed, alpha, lam):
    rng = np.random.default_rng(seed)
    fm = identity_map(4)
    X = rng.standard_normal((4, 12))
    Y = rng.standard_normal((2, 12))
    d = _design(X, Y, fm, salt_and_pepper(0.6, 0.5), seed=seed)
    f = fit(d, alpha, lam)
    M = ((1 - alpha) * d.C + alpha * d.Cprime + alpha * d.LambdaEmp
         + lam * np.eye(4))
    Ha = (1 - alpha) * d.H + alpha * d.Hprime + alpha * d.OmegaEmp
    res = np.linalg.norm(M @ f.theta_hat - Ha)
    assert res <= 1e-8 * max(np.linalg.norm(Ha), 1e-30)


def test_alpha_continuity():
    fm = identity_map(5)
    rng = np.random.default_rng(3)
    X = rng.standard_normal((5, 30))
    Y = rng.standard_normal((1, 30))
    d = _design(X, Y, fm, salt_and_pepper(0.5, 0.5))
    for alpha in (0.0, 0.3, 0.7):
        a = fit(d, alpha, 0.5).theta_hat
        b = fit(d, alpha + 1e-4, 0.5).theta_hat
        assert np.linalg.norm(b - a) <= 1e-2 * max(np.linalg.norm(a), 1e-12)


def test_coordinatewise_equivalence():
    fm = identity_map(6)
    rng = np.random.default_rng(4)
    X = rng.standard_normal((6, 25))
    Y = rng.standard_normal((3, 25))
    d = _design(X, Y, fm, salt_and_pepper(0.7, 0.3))
    joint = fit(d, 0.5, 0.2).theta_hat
    from augridge.ridge import AugmentedDesign
    for j in range(3):
        # scalar fit on the same design restricted to output j
        dj = AugmentedDesign(C=d.C, Cprime=d.Cprime, H=d.H[:, [j]],
                             Hprime=d.Hprime[:, [j]], LambdaEmp=d.LambdaEmp,
                             OmegaEmp=d.OmegaEmp[:, [j]], n=d.n)
        single = fit(dj, 0.5, 0.2).theta_hat[:, 0]
        assert np.max(np.abs(joint[:, j] - single)) <= 1e-10


def test_resolvent_zero_shift_matches_fit_matrix():
    fm = identity_map(3)
    rng = np.random.default_rng(5)
    X = rng.standard_normal((3, 15))
    Y = rng.standard_normal((1, 15))
    d = _design(X, Y, fm, additive_noise(0.3))
    R = resolvent_shifted(d, 0.5, 0.7, 0.0)
    M = 0.5 * d.C + 0.5 * d.Cprime + 0.5 * d.LambdaEmp + 0.7 * np.eye(3)
    assert np.allclose(R @ M, np.eye(3), atol=1e-10)


def test_resolvent_scalar_closed_form():
    fm = identity_map(1)
    d = _design(np.array([[2.0]]), np.array([[1.0]]), fm, additive_noise(1.0))
    Sigma = np.array([[3.0]])
    R = resolvent_shifted(d, 0.5, 0.25, 2.0, Sigma)
    denom = 0.5 * d.C[0, 0] + 0.5 * d.Cprime[0, 0] + 0.5 * 1.0 + 0.25 + 6.0
    assert R[0, 0] == pytest.approx(1.0 / denom)


def test_xi_zero_h():
    fm = identity_map(2)
    d = _design(np.eye(2), np.zeros((1, 2)), fm, additive_noise(0.0))
    assert xi_statistic(d, 0.0, 1.0, 0.0) == pytest.approx(0.0)


def test_xi_at_zero_equals_h_dot_theta():
    fm = identity_map(4)
    rng = np.random.default_rng(6)
    X = rng.standard_normal((4, 20))
    Y = rng.standard_normal((1, 20))
    d = _design(X, Y, fm, additive_noise(0.2))
    f = fit(d, 0.3, 0.4)
    Ha = 0.7 * d.H + 0.3 * d.Hprime + 0.3 * d.OmegaEmp
    assert xi_statistic(d, 0.3, 0.4, 0.0) == pytest.approx(
        float(Ha[:, 0] @ f.theta_hat[:, 0]))


def test_xi_derivative_identity():
    fm = identity_map(5)
    rng = np.random.default_rng(7)
    X = rng.standard_normal((5, 30))
    Y = rng.standard_normal((1, 30))
    d = _design(X, Y, fm, salt_and_pepper(0.5, 0.5))
    Sigma = closed_population_moment_set(
        np.eye(5), salt_and_pepper(0.5, 0.5), np.zeros(5), 0.0).Sigma
    f = fit(d, 0.5, 0.3)
    fd = xi_derivative_fd(d, 0.5, 0.3, Sigma)
    exact = -float(f.theta_hat[:, 0] @ Sigma @ f.theta_hat[:, 0])
    assert abs(fd - exact) <= 1e-3 * abs(exact)


def test_empirical_generalization_trivials():
    fm = identity_map(2)
    rng = np.random.default_rng(8)
    X = rng.standard_normal((2, 50))
    theta = np.array([[1.0], [2.0]])
    Y = theta.T @ X
    d = _design(X, Y, fm, additive_noise(0.0))
    from augridge.ridge import RidgeFit
    zero = RidgeFit(theta_hat=np.zeros((2, 1)), alpha=0.0, lam=1.0)
    assert empirical_generalization(zero, X, Y, fm) == pytest.approx(
        float(np.mean(Y ** 2)))
    exact = RidgeFit(theta_hat=theta, alpha=0.0, lam=1.0)
    assert empirical_generalization(exact, X, Y, fm) == pytest.approx(0.0)


def test_population_generalization_trivials():
    d = 3
    Sigma = np.diag([1.0, 2.0, 0.5])
    theta_star = np.array([1.0, -1.0, 2.0])
    ms = closed_population_moment_set(Sigma, additive_noise(0.0),
                                      theta_star, 0.3)
    from augridge.ridge import RidgeFit
    same = RidgeFit(theta_hat=theta_star[:, None], alpha=0.0, lam=1.0)
    assert population_generalization(same, ms, theta_star, 0.3) == \
        pytest.approx(0.3)
    zero = RidgeFit(theta_hat=np.zeros((d, 1)), alpha=0.0, lam=1.0)
    null_risk = float(theta_star @ Sigma @ theta_star) + 0.3
    assert population_generalization(zero, ms, theta_star, 0.3) == \
        pytest.approx(null_risk)


def test_population_matches_empirical():
    d = 4
    rng = np.random.default_rng(9)
    Sigma = np.eye(d)
    theta_star = np.array([0.5, -0.5, 1.0, 0.0])
    sigma2 = 0.25
    ms = closed_population_moment_set(Sigma, additive_noise(0.0),
                                      theta_star, sigma2)
    from augridge.ridge import RidgeFit
    f = RidgeFit(theta_hat=rng.standard_normal((d, 1)) * 0.3,
                 alpha=0.0, lam=1.0)
    N = 200_000
    Xt = rng.standard_normal((d, N))
    Yt = theta_star @ Xt + np.sqrt(sigma2) * rng.standard_normal(N)
    emp = empirical_generalization(f, Xt, Yt[None], identity_map(d))
    pop = population_generalization(f, ms, theta_star, sigma2)
    per = (f.theta_hat[:, 0] @ Xt - Yt) ** 2
    se = per.std() / np.sqrt(N)
    assert abs(emp - pop) <= 3 * se


def test_overlap_and_chi_stats():
    d = 2
    Sigma = np.diag([2.0, 1.0])
    theta_star = np.array([1.0, 1.0])
    ms = closed_population_moment_set(Sigma, additive_noise(0.0),
                                      theta_star, 0.0)
    from augridge.ridge import RidgeFit
    th = np.array([[0.5], [2.0]])
    f = RidgeFit(theta_hat=th, alpha=0.0, lam=1.0)
    assert chi_stat(f, ms) == pytest.approx(0.25 * 2 + 4.0)
    assert overlap_stat(f, ms, theta_star) == pytest.approx(1.0 + 2.0)
