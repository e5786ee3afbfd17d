import math

import numpy as np
import pytest
from scipy import integrate, stats

from sncm.distributions import DomainError, SkewNormalParams, sn_cdf, sn_pdf
from sncm.model import (CensoredDataset, Hyperparams, ModelState, aug_loglik_i, linear_predictor,
                        obs_loglik, obs_loglik_i)


def _state(n, p, s=0, seed=0, **kw):
    rng = np.random.default_rng(seed)
    st = dict(beta0=0.7, beta_star=rng.normal(size=p), gamma=rng.integers(0, 2, p),
              alpha=rng.normal(size=s), sigma_sq=1.3, delta=1.1, rho=0.8,
              V=rng.normal(size=n), U=np.ones(n, dtype=np.int8), Z=np.abs(rng.normal(size=n)) + .1)
    st.update(kw)
    return ModelState(**st)


def _data(n=8, p=4, s=2, seed=1, psi=-0.5, pmv=(2, 5)):
    rng = np.random.default_rng(seed)
    y = np.abs(rng.normal(size=n)) + 0.5
    y[list(pmv)] = np.nan
    return CensoredDataset(y, rng.normal(size=(n, p)), rng.normal(size=(n, s)), psi)


def test_dataset_validation():
    with pytest.raises(ValueError):
        CensoredDataset([1.0, 2.0], np.zeros((3, 1)))
    with pytest.raises(ValueError):
        CensoredDataset([np.nan, np.nan], np.zeros((2, 1)))
    with pytest.raises(ValueError):
        CensoredDataset([1.0, 0.5], np.zeros((2, 1)), psi=1.0)
    with pytest.raises(ValueError):
        CensoredDataset([1.0, 2.0], [[0.0], [np.inf]])
    d = CensoredDataset([3.0, np.nan, 2.0], np.zeros((3, 1)))
    assert d.psi == 2.0 and d.W.tolist() == [1, 0, 1] and d.s == 0


def test_hyperparameter_validation():
    with pytest.raises(ValueError):
        Hyperparams(nu_sq=0.0)
    with pytest.raises(ValueError):
        Hyperparams(error_model="t")
    with pytest.raises(ValueError):
        Hyperparams(rho_fixed=0.0)
    assert Hyperparams(lambda_sq=3.0).lambda_vec(2).tolist() == [3.0, 3.0]


def test_linear_predictor_masks_inactive_coefficients():
    data = _data()
    st = _state(data.n, data.p, data.s, gamma=np.zeros(4, dtype=np.int8))
    np.testing.assert_allclose(linear_predictor(st, data), 0.7 + data.C @ st.alpha, rtol=1e-14)
    zero = _state(data.n, data.p, data.s, beta_star=np.zeros(4), alpha=np.zeros(2))
    np.testing.assert_array_equal(linear_predictor(zero, data), np.full(data.n, 0.7))


def test_linear_predictor_matches_naive_loop():
    data = _data(seed=3)
    st = _state(data.n, data.p, data.s, seed=4)
    for i in range(data.n):
        naive = st.beta0 + sum(st.gamma[j] * st.beta_star[j] * data.X[i, j] for j in range(4))
        naive += sum(st.alpha[t] * data.C[i, t] for t in range(2))
        assert linear_predictor(st, data, i) == pytest.approx(naive, abs=1e-12)


def test_observed_loglik_examples():
    y = np.array([1.2, np.nan])
    data = CensoredDataset(y, np.zeros((2, 1)), psi=-1.0)
    st = _state(2, 1, beta0=0.0, beta_star=np.zeros(1), sigma_sq=1.0, delta=0.0, rho=0.8)
    ll = obs_loglik(st, data)
    assert ll[1] == pytest.approx(math.log(0.2 + 0.8 * stats.norm.cdf(-1.0)), rel=1e-12)
    assert ll[1] == pytest.approx(math.log(0.32695), abs=1e-4)
    assert ll[0] == pytest.approx(math.log(0.8) + stats.norm.logpdf(1.2), rel=1e-12)
    st1 = _state(2, 1, beta0=0.0, beta_star=np.zeros(1), sigma_sq=1.0, delta=2.0, rho=1.0)
    assert obs_loglik_i(st1, data, 0) == pytest.approx(
        math.log(sn_pdf(1.2, SkewNormalParams(0.0, 1.0, 2.0))), rel=1e-12)
    st0 = _state(2, 1, rho=0.0)
    assert obs_loglik_i(st0, data, 1) == 0.0
    assert obs_loglik_i(st0, data, 0) == -math.inf


def test_pmv_loglik_monte_carlo():
    # frequency of {U = 0 or V < psi} under the generative model
    rng = np.random.default_rng(0)
    rho, mu, s2, d, psi = 0.7, 0.3, 0.6, 1.5, 1.0
    m = 400_000
    v = mu + d * np.abs(rng.normal(size=m)) + math.sqrt(s2) * rng.normal(size=m)
    u = rng.random(m) < rho
    freq = np.mean(~u | (v < psi))
    data = CensoredDataset([np.nan, 2.0], np.zeros((2, 1)), psi=psi)
    st = _state(2, 1, beta0=mu, beta_star=np.zeros(1), sigma_sq=s2, delta=d, rho=rho)
    assert math.exp(obs_loglik_i(st, data, 0)) == pytest.approx(
        freq, abs=4 * math.sqrt(freq * (1 - freq) / m))


def test_loglik_invariant_to_inactive_coefficients():
    data = _data(seed=5)
    st = _state(data.n, data.p, data.s, seed=6)
    st2 = st.copy()
    st2.beta_star[st.gamma == 0] += 17.0
    np.testing.assert_array_equal(obs_loglik(st, data), obs_loglik(st2, data))


def test_augmented_loglik_reductions():
    data = CensoredDataset([0.4], np.zeros((1, 1)), psi=0.0)
    st = _state(1, 1, beta0=0.1, beta_star=np.zeros(1), sigma_sq=0.5, delta=0.0, rho=1.0,
                V=np.array([0.4]), Z=np.array([0.8]))
    want = math.log(2) + stats.norm.logpdf(0.8) + stats.norm.logpdf(0.4, 0.1, math.sqrt(0.5))
    assert aug_loglik_i(st, data, 0) == pytest.approx(want, rel=1e-12)
    half = st.copy()
    half.rho = 0.5
    off = half.copy()
    off.U = np.zeros(1, dtype=np.int8)
    assert aug_loglik_i(half, data, 0) == pytest.approx(aug_loglik_i(off, data, 0), abs=1e-15)
    bad = st.copy()
    bad.Z = np.array([0.0])
    with pytest.raises(DomainError):
        aug_loglik_i(bad, data, 0)


def _aug_density(v, z, u, mu, s2, d, rho):
    w = rho if u else 1 - rho
    return w * 2 * stats.norm.pdf(z) * stats.norm.pdf(v, mu + d * z, math.sqrt(s2))


@pytest.mark.parametrize("mu,s2,d,rho", [(0.2, 0.7, 1.4, 0.8), (-0.5, 1.5, -2.0, 0.6)])
def test_augmented_likelihood_marginalizes_to_observed(mu, s2, d, rho):
    psi = 0.1
    data = CensoredDataset([0.9, np.nan], np.zeros((2, 1)), psi=psi)
    base = _state(2, 1, beta0=mu, beta_star=np.zeros(1), sigma_sq=s2, delta=d, rho=rho)
    # observed row: integrate Z out of the U = 1 density at V = y
    st = base.copy()
    st.V = np.array([0.9, 0.0])

    def f_obs(z):
        st.Z = np.array([z, 1.0])
        return math.exp(aug_loglik_i(st, data, 0))
    obs = integrate.quad(f_obs, 0, 40, epsabs=1e-12, epsrel=1e-12, limit=200)[0]
    assert math.log(obs) == pytest.approx(obs_loglik_i(base, data, 0), abs=1e-8)
    # PMV row: U = 0 integrates over all (V, Z); U = 1 over V < psi
    present = integrate.dblquad(lambda v, z: _aug_density(v, z, 1, mu, s2, d, rho),
                                0, 40, -60, psi, epsabs=1e-11, epsrel=1e-11)[0]
    absent = 1 - rho  # the U = 0 density integrates to its mixing weight
    total = present + absent
    assert total == pytest.approx(math.exp(obs_loglik_i(base, data, 1)), abs=1e-6)
    assert present == pytest.approx(rho * sn_cdf(psi, SkewNormalParams(mu, s2, d)), abs=1e-6)


def test_state_check_flags_inconsistencies():
    data = CensoredDataset([1.0, np.nan], np.zeros((2, 1)), psi=0.5)
    st = _state(2, 1, V=np.array([1.0, 0.2]), U=np.array([1, 1], dtype=np.int8))
    st.check(data)
    bad = st.copy()
    bad.V = np.array([1.0, 0.7])
    with pytest.raises(AssertionError):
        bad.check(data)
    bad = st.copy()
    bad.U = np.array([0, 1], dtype=np.int8)
    with pytest.raises(AssertionError):
        bad.check(data)
