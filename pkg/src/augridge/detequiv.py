"""Deterministic equivalents: the 2x2 dilation fixed point, its
second-order companion, and the predicted risk and bias/variance split.

The fixed point iterates on the 2x2 matrix B:

    Sigma_bar(B) = b11 Sigma + b12 (Sigma' + Sigma'^T) + b22 Sigma''
    R_bar = (Sigma_bar(B) + alpha LambdaBar + lam I)^{-1}
    A = [[tr(Sigma R_bar), tr(Sigma' R_bar)],
         [tr(Sigma' R_bar), tr(Sigma'' R_bar)]]
    B <- W (I_2 + n^{-1} W A W)^{-1} W,  W = Diag(sqrt(1-alpha), sqrt(alpha))

with damped Picard updates (slot 1 weights the true data, slot 2 the
augmented means). The random resolvent expectation is closed with R_bar
itself, the only deterministic closure available; its validity is what the
Monte-Carlo oracle checks confirm. The second-order matrix is
D = n^{-1} B C_bar B with C_bar the traces of X R_bar Sigma R_bar.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .ridge import NumericalFailureError
from .schemes import InvalidParameterError


class NotConvergedError(RuntimeError):
    pass


class PreconditionViolationError(ValueError):
    pass


@dataclass(frozen=True)
class DilationState:
    W: np.ndarray
    B: np.ndarray
    A_traces: np.ndarray
    R_bar: np.ndarray
    residual: float
    iterations: int
    converged: bool
    alpha: float
    lam: float
    n: int


@dataclass(frozen=True)
class EquivalentReport:
    B: np.ndarray
    D: np.ndarray
    beta: float
    delta: float
    theta_bar: np.ndarray
    Sigma_bar: np.ndarray
    Sigma_bar_prime: np.ndarray
    Gamma_bar: np.ndarray
    Gamma_bar_prime: np.ndarray
    gamma_bar: np.ndarray
    chi_bar: np.ndarray
    g_bar: np.ndarray
    bias2_bar: np.ndarray
    var_bar: np.ndarray
    chi_bar_mean: float
    g_bar_mean: float
    bias2_bar_mean: float
    var_bar_mean: float
    overlap_bar_mean: float
    fp_iterations: int
    fp_residual: float
    fp_converged: bool
    plugin_mode: bool


def _trace_prod_sym(X, R):
    # tr(X R) with R symmetric: sum over elementwise product with R
    return float(np.sum(X * R))


def _sigma_bar_of(B, ms):
    return (B[0, 0] * ms.Sigma
            + B[0, 1] * (ms.SigmaPrime + ms.SigmaPrime.T)
            + B[1, 1] * ms.SigmaDoublePrime)


def _gamma_bar_of(B, ms):
    return (B[0, 0] * ms.G1 + B[0, 1] * (ms.G2 + ms.G3) + B[1, 1] * ms.G4)


def _resolvent(ms, B, alpha, lam):
    p = ms.Sigma.shape[0]
    M = _sigma_bar_of(B, ms) + alpha * ms.LambdaBar + lam * np.eye(p)
    M = 0.5 * (M + M.T)
    try:
        cf = cho_factor(M, lower=True)
    except np.linalg.LinAlgError as exc:
        smallest = float(np.linalg.eigvalsh(M)[0])
        raise NumericalFailureError(
            f"Sigma_bar + alpha LambdaBar + lam I not positive definite "
            f"(smallest eigenvalue {smallest:.3e})"
        ) from exc
    return cho_solve(cf, np.eye(p))


def _a_traces(ms, R):
    a11 = _trace_prod_sym(ms.Sigma, R)
    a12 = _trace_prod_sym(ms.SigmaPrime, R)
    a22 = _trace_prod_sym(ms.SigmaDoublePrime, R)
    return np.array([[a11, a12], [a12, a22]])


def solve_fixed_point(moment_set, alpha, lam, n, tol=1e-10, max_iter=500,
                      damping=0.5) -> DilationState:
    """Damped Picard iteration for B, initialized at the infinite-data
    limit B0 = W^2. Never raises on non-convergence; the state carries an
    honest converged flag."""
    if lam <= 0:
        raise InvalidParameterError(f"lambda must be > 0, got {lam}")
    if not 0.0 <= alpha <= 1.0:
        raise InvalidParameterError(f"alpha must be in [0,1], got {alpha}")
    if n < 1 or tol <= 0:
        raise InvalidParameterError("need n >= 1 and tol > 0")
    w = np.array([np.sqrt(1.0 - alpha), np.sqrt(alpha)])
    W = np.diag(w)
    B = np.diag(w * w)
    residual = np.inf
    iterations = 0
    converged = False
    for iterations in range(1, max_iter + 1):
        R = _resolvent(moment_set, B, alpha, lam)
        A = _a_traces(moment_set, R)
        inner = np.eye(2) + (W @ A @ W) / n
        B_plus = W @ np.linalg.solve(inner, W)
        B_plus = 0.5 * (B_plus + B_plus.T)
        residual = float(np.linalg.norm(B_plus - B))
        if residual <= tol:
            B = B_plus
            converged = True
            break
        B = (1.0 - damping) * B + damping * B_plus
    R = _resolvent(moment_set, B, alpha, lam)
    A = _a_traces(moment_set, R)
    return DilationState(
        W=W, B=B, A_traces=A, R_bar=R, residual=residual,
        iterations=iterations, converged=converged,
        alpha=float(alpha), lam=float(lam), n=int(n),
    )


def loewner_gap_eigs(M):
    """Eigenvalues of a symmetric 2x2 matrix in closed form."""
    tr = M[0, 0] + M[1, 1]
    det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    disc = np.sqrt(max(tr * tr / 4.0 - det, 0.0))
    return tr / 2.0 - disc, tr / 2.0 + disc


def compute_second_order(state, moment_set, alpha=None, lam=None, n=None):
    """D = n^{-1} B C_bar B with C_bar the second-order traces at the
    converged resolvent; symmetrized."""
    if not state.converged:
        raise NotConvergedError(
            f"fixed point not converged (residual {state.residual:.3e})"
        )
    n = state.n if n is None else n
    R = state.R_bar
    T = R @ moment_set.Sigma @ R
    c11 = _trace_prod_sym(moment_set.Sigma, T)
    c12 = _trace_prod_sym(moment_set.SigmaPrime, T)
    c22 = _trace_prod_sym(moment_set.SigmaDoublePrime, T)
    C_bar = np.array([[c11, c12], [c12, c22]])
    D = state.B @ C_bar @ state.B / n
    return 0.5 * (D + D.T)


def _det_star_terms(theta_bar, moment_set, theta_star, sigma2):
    q = theta_bar.shape[1]
    if theta_star is not None and moment_set.SigmaStar is not None:
        th = np.atleast_2d(np.asarray(theta_star, dtype=float).T).T
        tSSt = np.einsum("ij,ik,kj->j", th, moment_set.SigmaStarStar, th)
        tSs = np.einsum("ij,ik,kj->j", th, moment_set.SigmaStar, theta_bar)
        plugin = False
    else:
        tSSt = moment_set.PsiSecond[:, 0, 0] - sigma2
        tSs = np.einsum("ij,ij->j", moment_set.G1, theta_bar)
        plugin = True
    assert tSSt.shape == (q,)
    return tSSt, tSs, plugin


def equivalents(state, D, moment_set, theta_star, sigma2, alpha=None,
                lam=None) -> EquivalentReport:
    """Deterministic equivalents of theta_hat, chi, risk, and the
    bias/variance split, per output and output-averaged.

    Without a truth map (theta_star None or missing SigmaStar blocks) the
    scalar substitutions theta*^T SigmaStarStar theta* -> E[Y^2] - sigma2
    and theta*^T SigmaStar theta_bar -> G1^T theta_bar are applied and
    flagged via plugin_mode.
    """
    alpha = state.alpha if alpha is None else alpha
    lam = state.lam if lam is None else lam
    ms = moment_set
    B = state.B
    p = ms.Sigma.shape[0]
    Sigma_bar = _sigma_bar_of(B, ms)
    Gamma_bar = _gamma_bar_of(B, ms)
    M = Sigma_bar + alpha * ms.LambdaBar + lam * np.eye(p)
    M = 0.5 * (M + M.T)
    try:
        cf = cho_factor(M, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError("equivalents: matrix not PD") from exc
    theta_bar = cho_solve(cf, Gamma_bar + alpha * ms.OmegaBar)

    Sigma_bar_prime = _sigma_bar_of(D, ms)
    Gamma_bar_prime = _gamma_bar_of(D, ms)
    gamma_bar = np.einsum("ij,kji->k", D, ms.PsiSecond)

    quad = np.einsum("ij,ik,kj->j", theta_bar,
                     Sigma_bar_prime + ms.Sigma, theta_bar)
    cross = np.einsum("ij,ij->j", theta_bar, Gamma_bar_prime)
    chi_bar = quad - 2.0 * cross + gamma_bar

    tSSt, tSs, plugin = _det_star_terms(theta_bar, ms, theta_star, sigma2)
    g_bar = tSSt - 2.0 * tSs + chi_bar + sigma2
    theta_sig = np.einsum("ij,ik,kj->j", theta_bar, ms.Sigma, theta_bar)
    bias2_bar = theta_sig + tSSt - 2.0 * tSs
    var_bar = g_bar - bias2_bar

    return EquivalentReport(
        B=B, D=D,
        beta=float(B.sum()), delta=float(D.sum()),
        theta_bar=theta_bar,
        Sigma_bar=Sigma_bar, Sigma_bar_prime=Sigma_bar_prime,
        Gamma_bar=Gamma_bar, Gamma_bar_prime=Gamma_bar_prime,
        gamma_bar=gamma_bar, chi_bar=chi_bar, g_bar=g_bar,
        bias2_bar=bias2_bar, var_bar=var_bar,
        chi_bar_mean=float(chi_bar.mean()),
        g_bar_mean=float(g_bar.mean()),
        bias2_bar_mean=float(bias2_bar.mean()),
        var_bar_mean=float(var_bar.mean()),
        overlap_bar_mean=float(tSs.mean()),
        fp_iterations=state.iterations,
        fp_residual=state.residual,
        fp_converged=state.converged,
        plugin_mode=plugin,
    )


def wellspecified_reduction(state, D, moment_set, theta_star, sigma2,
                            alpha=None, lam=None, block_tol=1e-6):
    """Scalar beta/delta form valid when phi = phi_star and the scheme is
    unbiased and label-preserving, i.e. every Sigma block equals Sigma and
    every G block equals G1. Returns beta, delta, theta_bar and the
    simplified risk (1 + delta)[(theta_bar - theta*)^T Sigma
    (theta_bar - theta*) + sigma2]."""
    alpha = state.alpha if alpha is None else alpha
    lam = state.lam if lam is None else lam
    ms = moment_set
    scale = max(float(np.linalg.norm(ms.Sigma)), 1e-300)
    for name, M, ref in (
        ("SigmaPrime", ms.SigmaPrime, ms.Sigma),
        ("SigmaDoublePrime", ms.SigmaDoublePrime, ms.Sigma),
        ("SigmaStar", ms.SigmaStar, ms.Sigma),
        ("SigmaStarStar", ms.SigmaStarStar, ms.Sigma),
        ("G2", ms.G2, ms.G1),
        ("G3", ms.G3, ms.G1),
        ("G4", ms.G4, ms.G1),
    ):
        if M is None or np.linalg.norm(M - ref) > block_tol * scale:
            raise PreconditionViolationError(
                f"moment set is not well specified: block {name} deviates"
            )
    beta = float(state.B.sum())
    delta = float(D.sum())
    p = ms.Sigma.shape[0]
    M = beta * ms.Sigma + alpha * ms.LambdaBar + lam * np.eye(p)
    theta_bar = np.linalg.solve(0.5 * (M + M.T),
                                beta * ms.G1 + alpha * ms.OmegaBar)
    th = np.atleast_2d(np.asarray(theta_star, dtype=float).T).T
    diff = theta_bar - th
    g_simple = (1.0 + delta) * (
        np.einsum("ij,ik,kj->j", diff, ms.Sigma, diff) + sigma2
    )
    return {
        "beta": beta,
        "delta": delta,
        "theta_bar": theta_bar,
        "g_bar_simple": g_simple,
        "g_bar_simple_mean": float(np.mean(g_simple)),
    }
