"""Empirical augmented ridge: design assembly, the closed-form fit, the
shifted resolvent and its quadratic statistic, and generalization error.

The estimator solves

    theta_hat = ((1-a) C + a C' + a Lambda(Z) + lam I)^{-1} H_a,
    H_a = (1-a) H + a H' + a Omega(Z),

with C = phi(X) phi(X)^T / n, C' = mu_x(Z) mu_x(Z)^T / n, H = phi(X) Y^T / n,
H' = mu_x(Z) mu_y(Z)^T / n. One symmetric positive-definite factorization is
reused across all q output columns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .features import apply_features
from .moments import PerSampleMoments, symmetrize
from .schemes import InvalidDimensionError, InvalidParameterError


class NumericalFailureError(RuntimeError):
    pass


class EmptyInputError(ValueError):
    pass


@dataclass(frozen=True)
class AugmentedDesign:
    C: np.ndarray
    Cprime: np.ndarray
    H: np.ndarray
    Hprime: np.ndarray
    LambdaEmp: np.ndarray
    OmegaEmp: np.ndarray
    n: int


@dataclass(frozen=True)
class RidgeFit:
    theta_hat: np.ndarray
    alpha: float
    lam: float


def assemble_design(X, Y, feature_map, sample_moments, debias_n_mc=None):
    """Build the six design blocks with 1/n normalization.

    sample_moments is either a list of PerSampleMoments (one per column)
    or the (MuX, MuY, LambdaBar, OmegaBar) tuple from
    moments.batch_sample_moments. When the per-sample means were estimated
    from debias_n_mc augmentation draws, the O(1/n_mc) bias of Cprime and
    Hprime (outer products of estimated means) is removed.
    """
    X = np.asarray(X, dtype=float)
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    n = X.shape[1]
    if n < 1:
        raise EmptyInputError("need at least one sample")
    if Y.shape[1] != n:
        raise InvalidDimensionError("X and Y column counts differ")
    Phi = apply_features(feature_map, X)
    if isinstance(sample_moments, (list, tuple)) and sample_moments and \
            isinstance(sample_moments[0], PerSampleMoments):
        MuX = np.stack([m.mu_x for m in sample_moments], axis=1)
        MuY = np.stack([np.atleast_1d(m.mu_y) for m in sample_moments], axis=1)
        LambdaEmp = sum(m.Lambda for m in sample_moments) / n
        OmegaEmp = sum(np.atleast_2d(m.Omega) for m in sample_moments) / n
    else:
        MuX, MuY, LambdaEmp, OmegaEmp = sample_moments
        MuY = np.atleast_2d(MuY)
    if MuX.shape[1] != n:
        raise InvalidDimensionError("per-sample moments do not match n")
    C = symmetrize(Phi @ Phi.T / n)
    Cprime = symmetrize(MuX @ MuX.T / n)
    H = Phi @ Y.T / n
    Hprime = MuX @ MuY.T / n
    if debias_n_mc is not None and debias_n_mc > 0:
        Cprime = symmetrize(Cprime - LambdaEmp / debias_n_mc)
        Hprime = Hprime - OmegaEmp / debias_n_mc
    return AugmentedDesign(
        C=C, Cprime=Cprime, H=H, Hprime=Hprime,
        LambdaEmp=symmetrize(LambdaEmp), OmegaEmp=OmegaEmp, n=n,
    )


def _regularized_matrix(design, alpha, lam, zeta=0.0, Sigma=None):
    M = ((1.0 - alpha) * design.C + alpha * design.Cprime
         + alpha * design.LambdaEmp)
    M = M + lam * np.eye(M.shape[0])
    if zeta != 0.0:
        M = M + zeta * Sigma
    return symmetrize(M)


def _h_alpha(design, alpha):
    return ((1.0 - alpha) * design.H + alpha * design.Hprime
            + alpha * design.OmegaEmp)


def _chol(M):
    try:
        return cho_factor(M, lower=True)
    except np.linalg.LinAlgError as exc:
        smallest = float(np.linalg.eigvalsh(M)[0])
        raise NumericalFailureError(
            f"regularized matrix not positive definite "
            f"(smallest eigenvalue {smallest:.3e})"
        ) from exc


def fit(design, alpha, lam) -> RidgeFit:
    """Solve the normal equations; one factorization for all q outputs."""
    if lam <= 0:
        raise InvalidParameterError(f"lambda must be > 0, got {lam}")
    if not 0.0 <= alpha <= 1.0:
        raise InvalidParameterError(f"alpha must be in [0,1], got {alpha}")
    M = _regularized_matrix(design, alpha, lam)
    theta = cho_solve(_chol(M), _h_alpha(design, alpha))
    return RidgeFit(theta_hat=theta, alpha=float(alpha), lam=float(lam))


def resolvent_shifted(design, alpha, lam, zeta, Sigma=None):
    """The matrix ((1-a)C + aC' + aLambda + lam I + zeta Sigma)^{-1}."""
    if zeta != 0.0 and Sigma is None:
        raise InvalidParameterError("Sigma required when zeta != 0")
    M = _regularized_matrix(design, alpha, lam, zeta, Sigma)
    return cho_solve(_chol(M), np.eye(M.shape[0]))


def xi_statistic(design, alpha, lam, zeta, Sigma=None):
    """The q x q quadratic form H_a^T R(zeta) H_a (scalar for q = 1)."""
    if zeta != 0.0 and Sigma is None:
        raise InvalidParameterError("Sigma required when zeta != 0")
    M = _regularized_matrix(design, alpha, lam, zeta, Sigma)
    Ha = _h_alpha(design, alpha)
    out = Ha.T @ cho_solve(_chol(M), Ha)
    return float(out[0, 0]) if out.shape == (1, 1) else out


def xi_derivative_fd(design, alpha, lam, Sigma, h=1e-4):
    """Central finite difference of zeta -> xi(zeta) at zero; by the
    resolvent identity this equals -theta_hat^T Sigma theta_hat."""
    xp = xi_statistic(design, alpha, lam, h, Sigma)
    xm = xi_statistic(design, alpha, lam, -h, Sigma)
    return (xp - xm) / (2.0 * h)


def empirical_generalization(ridge_fit, test_X, test_Y, feature_map):
    """Mean squared test error, averaged over outputs."""
    test_X = np.asarray(test_X, dtype=float)
    test_Y = np.atleast_2d(np.asarray(test_Y, dtype=float))
    if test_X.shape[1] == 0:
        raise EmptyInputError("empty test set")
    pred = ridge_fit.theta_hat.T @ apply_features(feature_map, test_X)
    return float(np.mean((pred - test_Y) ** 2))


def _star_terms(theta_hat, moment_set, theta_star, sigma2):
    """Per-output (theta*^T SigmaStarStar theta*, theta*^T SigmaStar
    theta_hat), with plugin substitutions when truth blocks are absent."""
    q = theta_hat.shape[1]
    if theta_star is not None and moment_set.SigmaStar is not None:
        th = np.atleast_2d(np.asarray(theta_star, dtype=float).T).T
        tSSt = np.einsum("ij,ik,kj->j", th, moment_set.SigmaStarStar, th)
        tSs = np.einsum("ij,ik,kj->j", th, moment_set.SigmaStar, theta_hat)
    else:
        tSSt = moment_set.PsiSecond[:, 0, 0] - sigma2
        tSs = np.einsum("ij,ij->j", moment_set.G1, theta_hat)
    assert tSSt.shape == (q,)
    return tSSt, tSs


def population_generalization(ridge_fit, moment_set, theta_star, sigma2):
    """Risk via moments: theta^T Sigma theta - 2 theta*^T SigmaStar theta
    + theta*^T SigmaStarStar theta* + sigma2, averaged over outputs."""
    th = ridge_fit.theta_hat
    chi = np.einsum("ij,ik,kj->j", th, moment_set.Sigma, th)
    tSSt, tSs = _star_terms(th, moment_set, theta_star, sigma2)
    return float(np.mean(chi - 2.0 * tSs + tSSt + sigma2))


def overlap_stat(ridge_fit, moment_set, theta_star, sigma2=0.0):
    """theta*^T SigmaStar theta_hat per output, averaged (plugin
    substitution G1^T theta_hat when truth blocks are absent)."""
    _, tSs = _star_terms(ridge_fit.theta_hat, moment_set, theta_star, sigma2)
    return float(np.mean(tSs))


def chi_stat(ridge_fit, moment_set):
    """theta_hat^T Sigma theta_hat per output, averaged."""
    th = ridge_fit.theta_hat
    return float(np.mean(np.einsum("ij,ik,kj->j", th, moment_set.Sigma, th)))
