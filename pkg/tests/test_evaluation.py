import math
import warnings

import numpy as np
import pytest
from scipy import stats

from sncm.evaluation import (elpd_is, elpd_report, elpd_waic, posterior_predictive_sample,
                             sum_models)
from sncm.gibbs import McmcConfig, run_chain
from sncm.model import CensoredDataset, Hyperparams


def test_waic_worked_examples():
    ll = np.log([[0.2], [0.4]])
    tot, pt, p_waic = elpd_waic(ll)
    assert tot == pytest.approx(math.log(0.3) - np.var(ll, ddof=1), rel=1e-14)
    assert elpd_waic(np.zeros((2, 1)))[0] == 0.0
    const = np.full((5, 3), -1.7)
    tot, pt, p_waic = elpd_waic(const)
    np.testing.assert_allclose(pt, -1.7)
    assert p_waic == 0.0


def test_is_worked_examples():
    ll = np.log([[0.2], [0.4]])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert elpd_is(ll)[0] == pytest.approx(-math.log(3.75), rel=1e-14)
        assert elpd_is(np.full((4, 2), -0.3))[0] == pytest.approx(-0.6, rel=1e-14)


def test_too_few_draws():
    for f in (elpd_is, elpd_waic):
        with pytest.raises(ValueError):
            f(np.zeros((1, 3)))


def test_totals_equal_pointwise_sums_and_are_permutation_invariant():
    rng = np.random.default_rng(0)
    ll = rng.normal(-1.0, 0.3, (500, 20))
    rep = elpd_report(ll)
    assert rep.elpd_is == pytest.approx(rep.pointwise_is.sum(), abs=1e-9)
    assert rep.elpd_waic == pytest.approx(rep.pointwise_waic.sum(), abs=1e-9)
    shuffled = ll[rng.permutation(500)][:, rng.permutation(20)]
    rep2 = elpd_report(shuffled)
    assert rep2.elpd_is == pytest.approx(rep.elpd_is, abs=1e-9)
    assert rep2.elpd_waic == pytest.approx(rep.elpd_waic, abs=1e-9)


def test_extreme_weights_are_flagged():
    ll = np.zeros((10, 2))
    ll[0, 1] = -50.0
    with pytest.warns(RuntimeWarning):
        _, _, unstable = elpd_is(ll)
    assert unstable.tolist() == [False, True]


def test_conjugate_normal_model_converges_to_exact_loo():
    # y_i ~ N(theta, 1), theta ~ N(0, tau2): the exact leave-one-out
    # predictive densities are normal and known in closed form
    rng = np.random.default_rng(1)
    n, tau2 = 40, 4.0
    y = rng.normal(0.7, 1.0, n)
    prec = 1 / tau2 + n
    theta = rng.normal(y.sum() / prec, math.sqrt(1 / prec), 100_000)
    ll = stats.norm.logpdf(y[None, :], theta[:, None], 1.0)
    loo = 0.0
    for i in range(n):
        pr = 1 / tau2 + n - 1
        m = (y.sum() - y[i]) / pr
        loo += stats.norm.logpdf(y[i], m, math.sqrt(1 + 1 / pr))
    assert elpd_is(ll)[0] == pytest.approx(loo, rel=0.005)
    assert elpd_waic(ll)[0] == pytest.approx(loo, rel=0.005)


def test_sum_models_concatenates_observations():
    a, b = np.zeros((5, 3)), np.ones((5, 2))
    assert sum_models([a, b]).shape == (5, 5)


@pytest.fixture(scope="module")
def fitted():
    rng = np.random.default_rng(2)
    n = 400
    X = rng.standard_normal((n, 3))
    v = 2.0 + X[:, 0] + 1.5 * np.abs(rng.standard_normal(n)) + 0.7 * rng.standard_normal(n)
    psi = float(np.quantile(v, 0.15))
    y = np.where((v < psi) | (rng.random(n) < 0.2), np.nan, v)
    data = CensoredDataset(y, X, psi=psi)
    chain = run_chain(data, Hyperparams(), McmcConfig(iterations=6_000, burn_in=2_000, thin=4,
                                                      seed=3, store_latent=False))
    return data, chain


def test_predictive_pmv_fraction_matches_data(fitted):
    data, chain = fitted
    sims = posterior_predictive_sample(chain, data, 400, np.random.default_rng(4))
    assert sims.shape == (400, data.n)
    assert np.isnan(sims).mean() == pytest.approx(1 - data.observed_fraction, abs=0.03)
    obs_means = np.array([np.nanmean(s) for s in sims])
    emp = data.y[data.observed].mean()
    assert abs(obs_means.mean() - emp) < 2 * obs_means.std() + 1e-12


def test_predictive_point_mass_reduces_to_censored_normal(fitted):
    data, chain = fitted
    k = chain.n_draws
    c = chain
    c2 = type(c)(beta0=np.full(k, 1.0), beta_star=np.zeros_like(c.beta_star),
                 gamma=np.zeros_like(c.gamma), alpha=c.alpha, sigma_sq=np.ones(k),
                 delta=np.zeros(k), rho=np.ones(k), loglik=c.loglik, seed=0, config=c.config)
    sims = posterior_predictive_sample(c2, data, 200, np.random.default_rng(5))
    frac = np.isnan(sims).mean()
    assert frac == pytest.approx(stats.norm.cdf(data.psi - 1.0), abs=0.01)
    vals = sims[~np.isnan(sims)]
    assert vals.min() >= data.psi


def test_loglik_rows_feed_elpd(fitted):
    data, chain = fitted
    rep = elpd_report(chain.loglik)
    assert np.isfinite(rep.elpd_is) and np.isfinite(rep.elpd_waic)
    assert rep.pointwise_waic.shape == (data.n,)
