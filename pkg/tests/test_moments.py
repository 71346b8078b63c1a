import numpy as np
import pytest

from augridge.datasets import SyntheticSpec, synthetic_sampler
from augridge.features import identity_map, random_mlp_map
from augridge.moments import (
    EmptyInputError,
    InsufficientSamplesError,
    MomentSet,
    batch_sample_moments,
    closed_population_moment_set,
    empirical_lambda_omega,
    estimate_moment_set,
    per_sample_moments,
    psd_clip,
)
from augridge.schemes import additive_noise, masking, salt_and_pepper


def _rng(seed=0):
    return np.random.default_rng(seed)


def test_per_sample_closed_zero_noise():
    fm = identity_map(3)
    z = (np.array([1.0, 2.0, 3.0]), np.array([0.5]))
    m = per_sample_moments(additive_noise(0.0), fm, z, 10, _rng())
    assert np.array_equal(m.mu_x, z[0])
    assert np.allclose(m.Lambda, 0.0) and np.allclose(m.Omega, 0.0)


def test_per_sample_closed_additive():
    fm = identity_map(2)
    z = (np.array([1.0, -1.0]), np.array([2.0]))
    m = per_sample_moments(additive_noise(0.5), fm, z, 10, _rng())
    assert np.allclose(m.Lambda, 0.25 * np.eye(2))
    assert np.array_equal(m.mu_x, z[0])


def test_per_sample_requires_samples_without_closed_form():
    fm = random_mlp_map(2, [3], 2, seed=0)
    z = (np.zeros(2), np.zeros(1))
    with pytest.raises(InsufficientSamplesError):
        per_sample_moments(additive_noise(0.1), fm, z, 1, _rng())


def test_per_sample_mc_linear_feature_oracle():
    # single linear layer: feature-space moments are exact linear images
    fm = random_mlp_map(3, [], 4, seed=2)
    W = fm.weights[0]
    sigma = 0.4
    z = (np.array([1.0, 2.0, -1.0]), np.array([0.0]))
    m = per_sample_moments(additive_noise(sigma), fm, z, 40_000, _rng(1))
    assert np.allclose(m.mu_x, W @ z[0], atol=0.02)
    assert np.allclose(m.Lambda, sigma ** 2 * W @ W.T, atol=0.02)


def test_per_sample_lambda_symmetric_psd():
    fm = random_mlp_map(4, [5], 3, seed=1)
    z = (np.ones(4), np.zeros(1))
    m = per_sample_moments(salt_and_pepper(0.5, 1.0), fm, z, 500, _rng(2))
    assert np.allclose(m.Lambda, m.Lambda.T, atol=1e-10)
    w = np.linalg.eigvalsh(m.Lambda)
    assert w[0] >= -1e-8 * max(w[-1], 1.0)


def test_empirical_lambda_omega_basics():
    fm = identity_map(2)
    z = (np.ones(2), np.zeros(1))
    m = per_sample_moments(additive_noise(0.3), fm, z, 10, _rng())
    lam, om = empirical_lambda_omega([m])
    assert np.allclose(lam, m.Lambda) and np.allclose(om, m.Omega)
    lam, om = empirical_lambda_omega([m, m, m])
    assert np.allclose(lam, m.Lambda)
    with pytest.raises(EmptyInputError):
        empirical_lambda_omega([])


def test_empirical_average_shrinks_like_root_n():
    # Frobenius distance of Lambda(Z) to LambdaBar at n vs 4n
    scheme = salt_and_pepper(0.6, 0.5)
    d = 6
    spec = SyntheticSpec(d=d, n=1, theta_star=np.zeros(d),
                         truth_map=identity_map(d), spectrum="isotropic")
    fm = identity_map(d)
    ms = closed_population_moment_set(spec.covariance(), scheme,
                                     np.zeros(d), 0.0)
    errs = {}
    for n in (200, 800):
        dev = []
        for rep in range(60):
            rng = _rng(1000 * n + rep)
            X = spec.covariance_sqrt() @ rng.standard_normal((d, n))
            _, _, lam_bar, _ = batch_sample_moments(
                scheme, fm, X, np.zeros((1, n)), 2, rng)
            dev.append(np.linalg.norm(lam_bar - ms.LambdaBar))
        errs[n] = np.mean(dev)
    ratio = errs[200] / errs[800]
    assert 1.4 <= ratio <= 2.9


def test_estimate_identity_augmentation_blocks_collapse():
    d = 5
    spec = SyntheticSpec(d=d, n=1, theta_star=np.ones(d) / np.sqrt(d),
                         truth_map=identity_map(d), noise_sigma2=0.1,
                         q_seed=1)
    ms = estimate_moment_set(
        identity_map(d), identity_map(d), additive_noise(0.0),
        synthetic_sampler(spec), 4000, 2, _rng(3),
        theta_star=spec.theta_star, noise_sigma2=0.1,
    )
    assert np.allclose(ms.SigmaPrime, ms.Sigma)
    assert np.allclose(ms.SigmaDoublePrime, ms.Sigma)
    assert np.allclose(ms.G2, ms.G1) and np.allclose(ms.G3, ms.G1)
    assert np.allclose(ms.G4, ms.G1)
    assert np.allclose(ms.PsiSecond[0], ms.PsiSecond[0][0, 0])


def test_estimate_sigma_consistency():
    d = 4
    spec = SyntheticSpec(d=d, n=1, theta_star=np.zeros(d),
                         truth_map=identity_map(d), q_seed=2)
    C = spec.covariance()
    ms = estimate_moment_set(
        identity_map(d), identity_map(d), additive_noise(0.0),
        synthetic_sampler(spec), 60_000, 2, _rng(4),
        theta_star=spec.theta_star, noise_sigma2=0.0,
    )
    assert np.linalg.norm(ms.Sigma - C) <= 0.05 * np.linalg.norm(C)


def test_estimate_pure_noise_labels():
    d = 4
    spec = SyntheticSpec(d=d, n=1, theta_star=np.zeros(d),
                         truth_map=identity_map(d), noise_sigma2=1.0,
                         q_seed=0)
    # raw labels (no conditioning): G1 should vanish within MC error
    ms = estimate_moment_set(
        identity_map(d), identity_map(d), additive_noise(0.2),
        synthetic_sampler(spec), 30_000, 2, _rng(5),
    )
    assert np.all(np.abs(ms.G1) <= 3 * 1.0 / np.sqrt(30_000) * 3)


def test_estimate_debias_second_moment():
    # with few augmentation draws the mu-outer-product bias Lambda/n_mc is
    # large; the corrected SigmaDoublePrime must still match the truth
    d = 4
    sigma = 1.0
    spec = SyntheticSpec(d=d, n=1, theta_star=np.zeros(d),
                         truth_map=identity_map(d), q_seed=3,
                         spectrum="isotropic")
    fm = random_mlp_map(d, [], d, seed=7)
    W = fm.weights[0]
    ms = estimate_moment_set(
        fm, identity_map(d), additive_noise(sigma),
        synthetic_sampler(spec), 40_000, 4, _rng(6),
        theta_star=spec.theta_star, noise_sigma2=0.0,
    )
    truth = W @ W.T  # E[mu_x mu_x^T] = W Sigma W^T with Sigma = I
    bias_scale = np.linalg.norm(sigma ** 2 * W @ W.T) / 4
    err = np.linalg.norm(ms.SigmaDoublePrime - truth)
    assert err <= 0.25 * bias_scale


def test_stacked_second_moment_psd():
    d = 5
    spec = SyntheticSpec(d=d, n=1, theta_star=np.zeros(d),
                         truth_map=identity_map(d), q_seed=4)
    ms = estimate_moment_set(
        identity_map(d), identity_map(d), masking(0.6),
        synthetic_sampler(spec), 5000, 2, _rng(7),
        theta_star=spec.theta_star, noise_sigma2=0.0,
    )
    ms.check()
    w = np.linalg.eigvalsh(ms.stacked_second_moment())
    assert w[0] >= -1e-8 * w[-1]


def test_moment_set_save_load_roundtrip(tmp_path):
    d = 3
    ms = closed_population_moment_set(np.eye(d), additive_noise(0.5),
                                     np.ones(d), 0.25)
    path = tmp_path / "moments.npz"
    ms.save(path)
    back = MomentSet.load(path)
    assert np.array_equal(back.Sigma, ms.Sigma)
    assert np.array_equal(back.LambdaBar, ms.LambdaBar)
    assert np.array_equal(back.PsiSecond, ms.PsiSecond)
    assert back.provenance == ms.provenance


def test_psd_clip_warns_and_clips():
    M = np.diag([1.0, -0.1])
    with pytest.warns(UserWarning):
        out = psd_clip(M)
    w = np.linalg.eigvalsh(out)
    assert w[0] >= -1e-12


def test_closed_population_masking_blocks():
    d = 3
    Sigma = np.diag([1.0, 2.0, 3.0])
    theta = np.array([1.0, 0.0, -1.0])
    ms = closed_population_moment_set(Sigma, masking(0.8), theta, 0.1)
    assert np.allclose(ms.SigmaPrime, 0.8 * Sigma)
    assert np.allclose(ms.SigmaDoublePrime, 0.64 * Sigma)
    assert np.allclose(ms.LambdaBar, 0.2 * 0.8 * np.diag(np.diag(Sigma)))
    assert np.allclose(ms.G1, (Sigma @ theta)[:, None])
    assert np.allclose(ms.G3, 0.8 * ms.G1)
    ey2 = theta @ Sigma @ theta + 0.1
    assert np.allclose(ms.PsiSecond[0], ey2)
