import math

import numpy as np
import pytest

from sncm.gibbs import McmcConfig, run_chain
from sncm.simlab import (METHODS, SCENARIOS, _draw_errors, _draw_X, _latent_V, fit_dataset,
                         generate_replicate, lognormal_match, make_scenario, replicate_rates,
                         replicate_rng, score, signal_vector, simulation_hyper, skew_split,
                         scenario_rows, run_battery)
from sncm.model import CensoredDataset
from sncm.mrf import MrfPrior


@pytest.fixture(scope="module")
def scenarios():
    return {name: make_scenario(name) for name in SCENARIOS}


def test_baseline_parameters(scenarios):
    sc = scenarios["baseline"]
    assert (sc.n, sc.p, sc.beta0, sc.rho) == (400, 300, 5.0, 0.8)
    hn = 1 - 2 / math.pi
    assert sc.sigma**2 + sc.delta**2 * hn == pytest.approx(8.0)
    assert sc.delta**2 * hn / 8.0 == pytest.approx(0.75)
    assert sc.expected_pmv_rate == pytest.approx(0.36)
    assert scenarios["high_censoring"].expected_pmv_rate == pytest.approx(0.51)
    hv = scenarios["high_variance"]
    assert hv.sigma**2 + hv.delta**2 * hn == pytest.approx(18.0)
    hs = scenarios["high_skewness"]
    assert hs.delta**2 * hn / 8.0 == pytest.approx(0.95)
    assert scenarios["large_n"].n == 1000


def test_signal_layout():
    beta = signal_vector()
    idx = np.flatnonzero(beta)
    assert idx.tolist() == [*range(0, 5), *range(25, 30), *range(50, 55), *range(75, 80)]
    assert beta[75:80].tolist() == [0.4, -0.6, 0.8, -1.0, 1.2]


def test_signal_sits_in_the_documented_groups(scenarios):
    R = scenarios["baseline"].R
    strength = lambda a, b: R[a, b]  # noqa: E731
    assert strength(0, 1) == pytest.approx(math.exp(1 / 3) / 20)      # loose block members
    assert strength(25, 26) == pytest.approx(math.exp(2 / 3) / 5)     # first subcategory
    assert strength(50, 51) == pytest.approx(math.exp(2 / 3) / 10)    # moderate
    assert strength(75, 76) == pytest.approx(math.exp(1) / 5)         # sub-subcategory


def test_skew_split_and_lognormal_match():
    s, d = skew_split(8.0, 0.75)
    assert s == pytest.approx(math.sqrt(2.0))
    m, v = 3.2, 8.0
    ml, sl = lognormal_match(m, v)
    assert math.exp(ml + sl**2 / 2) == pytest.approx(m)
    assert (math.exp(sl**2) - 1) * math.exp(2 * ml + sl**2) == pytest.approx(v)
    with pytest.raises(ValueError):
        lognormal_match(-1.0, 1.0)


def test_lognormal_errors_match_skew_normal_moments(scenarios):
    ln, base = scenarios["lognormal_errors"], scenarios["baseline"]
    e = _draw_errors(ln, np.random.default_rng(0), 2_000_000)
    mean = base.delta * math.sqrt(2 / math.pi)
    assert e.mean() == pytest.approx(mean, abs=4 * math.sqrt(8.0 / e.size))
    assert e.var() == pytest.approx(8.0, rel=0.03)


def test_correlated_predictor_covariance(scenarios):
    sc = scenarios["correlated_predictors"]
    X = _draw_X(sc, np.random.default_rng(1), 10_000)
    S = sc.covariance()
    assert np.all(np.diag(S) == 1.0)
    assert np.max(np.abs(np.cov(X, rowvar=False) - S)) < 0.06
    # 0.03 entrywise on the block that carries signal
    blk = slice(0, 40)
    assert np.max(np.abs(np.cov(X[:, blk], rowvar=False) - S[blk, blk])) < 0.03 + 4 / 100


@pytest.mark.parametrize("name", ["baseline", "high_censoring", "high_skewness"])
def test_psi_calibration(scenarios, name):
    sc = scenarios[name]
    V = _latent_V(sc, np.random.default_rng(12345), 1_000_000)
    assert abs(np.mean(V < sc.psi) - sc.censor_prob) < 0.005


def test_replicates_are_reproducible(scenarios):
    sc = scenarios["misspecified_R"]
    a = generate_replicate(sc, replicate_rng(7, sc.name, 3))
    b = generate_replicate(sc, replicate_rng(7, sc.name, 3))
    np.testing.assert_array_equal(a.data.y, b.data.y)
    np.testing.assert_array_equal(a.data.X, b.data.X)
    np.testing.assert_array_equal(a.R, b.R)
    c = generate_replicate(sc, replicate_rng(7, sc.name, 4))
    assert not np.array_equal(a.R, c.R)
    assert sorted(a.R.ravel()) == sorted(sc.R.ravel())


def test_replicate_structure(scenarios):
    sc = scenarios["baseline"]
    rep = generate_replicate(sc, replicate_rng(0, "baseline", 0))
    d = rep.data
    assert d.n == 400 and d.p == 300
    assert d.psi == pytest.approx(np.nanmin(d.y))
    assert d.psi >= rep.psi_true
    pmv = ~d.observed
    assert np.all(pmv == ((rep.U == 0) | (rep.V < rep.psi_true)))


def test_pmv_rate_over_many_replicates(scenarios):
    sc = scenarios["baseline"]
    rates = [1 - generate_replicate(sc, replicate_rng(1, "baseline", r)).data.observed_fraction
             for r in range(200)]
    assert np.mean(rates) == pytest.approx(0.36, abs=0.01)


def test_rates_and_score_examples():
    truth = np.zeros(300)
    truth[signal_vector() != 0] = 1.0
    idx = np.flatnonzero(truth)
    sel = np.zeros(300, bool)
    sel[idx[:15]] = True
    sel[200] = True
    assert replicate_rates(sel, truth) == (0.75, 1 / 16)
    assert replicate_rates(np.zeros(300, bool), truth) == (0.0, 0.0)
    perfect = score([truth != 0] * 3, signal_vector(), [signal_vector()] * 3)
    assert perfect.overall_tpr == 1.0 and perfect.fdr == 0.0
    np.testing.assert_array_equal(perfect.bias, 0.0)
    np.testing.assert_array_equal(perfect.rmse, 0.0)
    r = score([sel, truth != 0], signal_vector())
    assert r.overall_tpr == pytest.approx(0.875) and r.fdr == pytest.approx(1 / 32)
    assert r.variable_tpr.shape == (20,) and r.replicates == 2
    with pytest.raises(ValueError):
        score([], signal_vector())


def test_bias_ignores_never_included_coefficients():
    beta = np.array([1.0, 2.0, 0.0])
    est = [np.array([1.5, np.nan, np.nan]), np.array([0.5, 2.0, np.nan])]
    r = score([np.array([1, 1, 0], bool)] * 2, beta, est)
    assert r.bias.tolist() == [0.0, 0.0]
    assert r.rmse[0] == pytest.approx(0.5)


# ---------------------------------------------------------------------------
# ad hoc baselines


def _small(seed=0, pmv=True):
    rng = np.random.default_rng(seed)
    n, p = 120, 10
    X = rng.standard_normal((n, p))
    v = 3.0 + 1.5 * X[:, 0] + np.abs(rng.standard_normal(n)) + 0.5 * rng.standard_normal(n)
    y = v.copy()
    if pmv:
        y[(v < np.quantile(v, 0.2)) | (rng.random(n) < 0.15)] = np.nan
    return CensoredDataset(y, X)


CFG = McmcConfig(iterations=1_500, burn_in=500, thin=5)


def test_baselines_equal_main_sampler_without_pmvs():
    data = _small(1, pmv=False)
    main, _ = fit_dataset(data, "independent", CFG, seed=9)
    imputed, _ = fit_dataset(data, "half_min_impute", CFG, seed=9)
    np.testing.assert_array_equal(imputed.pip, main.pip)
    # pinning rho skips its draw, so the random stream differs; agreement is in law only
    forced, _ = fit_dataset(data, "forced_rho_1", CFG, seed=9)
    np.testing.assert_allclose(forced.pip, main.pip, atol=0.05)
    np.testing.assert_array_equal(forced.selected, main.selected)


def test_forced_rho_one_never_updates_presence():
    _, chain = fit_dataset(_small(2), "forced_rho_1", CFG, seed=1)
    assert np.all(chain.U == 1) and np.all(chain.rho == 1.0)


def test_half_min_dataset_has_no_missing_values():
    data = _small(3)
    _, chain = fit_dataset(data, "half_min_impute", CFG, seed=1)
    assert chain.V.shape[1] == data.n
    assert np.all(np.isfinite(chain.V))
    fill = 0.5 * np.nanmin(data.y)
    np.testing.assert_array_equal(chain.V[0][~data.observed], fill)


def test_unknown_method_and_missing_R():
    with pytest.raises(ValueError):
        fit_dataset(_small(), "lasso", CFG)
    with pytest.raises(ValueError):
        fit_dataset(_small(), "mrf", CFG)
    with pytest.raises(ValueError):
        make_scenario("nope")


def test_simulation_hyperparameters():
    h = simulation_hyper(_small(4), MrfPrior(-3.0))
    assert (h.nu0_sq, h.nud_sq, h.nu_sq, h.xi0, h.sigma0_sq) == (25.0, 25.0, 4.0, 5.0, 4.0)
    assert h.rho0 + h.rho1 == pytest.approx(5.0)


def test_small_battery_runs_and_tabulates():
    cfg = McmcConfig(iterations=300, burn_in=100, thin=4)
    recs, eta = run_battery(["baseline"], ["independent", "mrf"], 2, cfg, seed=3, eta=1.0)
    assert eta == 1.0 and len(recs) == 4
    rows = scenario_rows(recs, ["baseline"])
    assert rows[0]["replicates"] == 2 and 0 <= rows[0]["tpr_mrf"] <= 1
    recs2, _ = run_battery(["baseline"], ["independent", "mrf"], 2, cfg, seed=3, eta=1.0,
                           threads=2)
    for a, b in zip(recs, recs2):
        np.testing.assert_array_equal(a.fit.pip, b.fit.pip)
