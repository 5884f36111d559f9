import numpy as np
import pytest

from fecgos.shrinkage import DenoiseConfig, estimate_noise, eta_star, optimal_shrink


def eta_oracle(lam, beta):
    """Closed-form shrinker recomputed independently (high-precision path)."""
    if lam <= 1.0 + np.sqrt(beta):
        return 0.0
    a = lam * lam - beta - 1.0
    return np.sqrt((a + np.sqrt(a * a - 4.0 * beta)) / 2.0)


def test_eta_zero_at_and_below_edge():
    for beta in np.arange(0.1, 1.01, 0.1):
        edge = 1.0 + np.sqrt(beta)
        assert eta_star(edge, beta) == 0.0
        assert eta_star(0.5 * edge, beta) == 0.0


def test_eta_small_beta_limit():
    # beta -> 0 reduces to sqrt(lam^2 - 1)
    for lam in np.linspace(1.1, 10.0, 25):
        assert abs(eta_star(lam, 1e-9) - np.sqrt(lam * lam - 1.0)) < 1e-6


def test_eta_matches_independent_oracle():
    rng = np.random.default_rng(7)
    for _ in range(200):
        beta = rng.uniform(0.05, 1.0)
        lam = rng.uniform(0.5, 12.0)
        assert eta_star(lam, beta) == pytest.approx(eta_oracle(lam, beta), abs=1e-10)


def test_eta_monotone_above_edge():
    beta = 0.5
    lams = np.linspace(1.0 + np.sqrt(beta) + 1e-6, 20, 100)
    vals = [eta_star(l, beta) for l in lams]
    assert np.all(np.diff(vals) > 0)


def test_eta_rejects_bad_args():
    with pytest.raises(ValueError):
        eta_star(2.0, 0.0)
    with pytest.raises(ValueError):
        eta_star(2.0, 1.5)
    with pytest.raises(ValueError):
        eta_star(-1.0, 0.5)


def test_noise_estimate_identical_columns_zero():
    S = np.tile(np.arange(5.0)[:, None], (1, 8))
    assert estimate_noise(S) == 0.0


def test_noise_estimate_hand_value():
    # single row [0, 2, 4]: median 2, mean squared deviation (4+0+4)/3
    S = np.array([[0.0, 2.0, 4.0]])
    got = estimate_noise(S, DenoiseConfig(c_noise=1.5))
    assert got == pytest.approx(1.5 * np.sqrt(8.0 / 3.0), rel=1e-12)


def test_noise_estimate_even_count_uses_lower_median():
    # four entries [0, 1, 3, 7]: lower median 1, deviations 1/0/2/6
    S = np.array([[0.0, 1.0, 3.0, 7.0]])
    got = estimate_noise(S, DenoiseConfig(c_noise=1.0))
    assert got == pytest.approx(np.sqrt((1 + 0 + 4 + 36) / 4.0), rel=1e-12)


def test_noise_estimate_gaussian_unit():
    rng = np.random.default_rng(42)
    S = rng.standard_normal((100, 400))
    got = estimate_noise(S, DenoiseConfig(c_noise=1.0))
    assert 0.95 <= got <= 1.05


def test_shrink_zero_matrix():
    res = optimal_shrink(np.zeros((20, 40)))
    assert np.all(res.denoised == 0.0)
    assert res.kept_rank == 0


def test_shrink_pure_noise_kills_everything():
    kept = []
    for seed in range(50):
        rng = np.random.default_rng(seed)
        res = optimal_shrink(rng.standard_normal((200, 400)), DenoiseConfig(c_noise=1.0))
        kept.append(res.kept_rank)
    assert np.mean(np.asarray(kept) == 0) >= 0.95


def test_shrink_recovers_planted_spike():
    rng = np.random.default_rng(3)
    p, n, d = 200, 400, 3.0
    u = rng.standard_normal(p)
    u /= np.linalg.norm(u)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    X = d * np.sqrt(n) * np.outer(u, v) + rng.standard_normal((p, n))
    res = optimal_shrink(X, DenoiseConfig(c_noise=1.0))
    assert res.kept_rank == 1
    beta = p / n
    scale = res.sigma_hat * np.sqrt(n)
    # empirical top value inflates to sqrt((1+d^2)(beta+d^2))/d; eta* inverts it
    lam_pred = np.sqrt((1 + d * d) * (beta + d * d)) / d
    assert res.singular_values_raw[0] / scale == pytest.approx(lam_pred, rel=0.05)
    assert res.singular_values_shrunk[0] / scale == pytest.approx(d, rel=0.05)


def test_shrink_transposes_wide_input():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((400, 200))  # p > n: handled via transpose
    res = optimal_shrink(X, DenoiseConfig(c_noise=1.0))
    assert res.denoised.shape == X.shape


def test_shrink_noise_free_matrix_passthrough():
    # sigma_hat = 0: nothing to shrink, matrix returned as-is
    X = np.tile(np.sin(np.arange(12.0))[:, None], (1, 30))
    res = optimal_shrink(X)
    assert np.allclose(res.denoised, X)
