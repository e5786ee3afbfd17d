"""Simulation scenarios, fit batteries and operating-characteristic metrics."""

from __future__ import annotations

import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logit

from .gibbs import McmcConfig, run_chain
from .model import CensoredDataset, Hyperparams
from .mrf import EtaSearchSpec, MrfPrior, simulation_eta_grid, tune_eta
from .posterior import adaptive_beta_prior, conditional_beta_estimates, half_min_impute, summarize
from .relmatrix import simulation_R

SCENARIOS = (
    "baseline", "high_variance", "high_censoring", "high_skewness",
    "misspecified_R", "lognormal_errors", "correlated_predictors", "large_n",
)
METHODS = ("independent", "mrf", "forced_rho_1", "half_min_impute")

_HALF_NORMAL_VAR = 1.0 - 2.0 / math.pi
SIGNAL = (0.4, -0.6, 0.8, -1.0, 1.2)


@dataclass
class SimScenario:
    name: str
    n: int
    p: int
    beta0: float
    beta: np.ndarray
    sigma: float
    delta: float
    rho: float
    censor_prob: float
    R: np.ndarray
    predictor_cov: str = "identity"  # or "R"
    error_family: str = "skew-normal"  # or "lognormal"
    permute_R: bool = False
    psi: float | None = None
    lognormal: tuple[float, float] | None = None  # (meanlog, sdlog)

    @property
    def truth_gamma(self) -> np.ndarray:
        return (self.beta != 0).astype(np.int8)

    @property
    def expected_pmv_rate(self) -> float:
        return (1.0 - self.rho) + self.rho * self.censor_prob

    def covariance(self) -> np.ndarray | None:
        if self.predictor_cov == "identity":
            return None
        S = self.R.copy()
        np.fill_diagonal(S, 1.0)
        return S


def skew_split(total_var: float, frac_half_normal: float) -> tuple[float, float]:
    """(sigma, delta) with sigma^2 + delta^2 (1 - 2/pi) = total and the half-normal share fixed."""
    d2 = frac_half_normal * total_var / _HALF_NORMAL_VAR
    s2 = (1.0 - frac_half_normal) * total_var
    return math.sqrt(s2), math.sqrt(d2)


def lognormal_match(mean: float, var: float) -> tuple[float, float]:
    """(meanlog, sdlog) of the log-normal with the given mean and variance."""
    if mean <= 0:
        raise ValueError("log-normal mean must be positive")
    s2 = math.log1p(var / mean**2)
    return math.log(mean) - 0.5 * s2, math.sqrt(s2)


def signal_vector(p: int = 300, block_size: int = 20) -> np.ndarray:
    """Five effects in each of the first four blocks, one quintet per block.

    Block b (0-based) carries the effects on its quintet b: the loose
    members in block 1, the first subcategory in block 2, the moderately
    connected quintet in block 3 and the sub-subcategory in block 4.
    """
    beta = np.zeros(p)
    q = block_size // 4
    for b in range(4):
        start = b * block_size + b * q
        beta[start:start + q] = SIGNAL
    return beta


def make_scenario(name: str) -> SimScenario:
    if name not in SCENARIOS:
        raise ValueError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")
    R = simulation_R(15, 20)
    sigma, delta = skew_split(8.0, 0.75)
    sc = SimScenario(name="baseline", n=400, p=300, beta0=5.0, beta=signal_vector(), sigma=sigma,
                     delta=delta, rho=0.8, censor_prob=0.20, R=R)
    if name == "high_variance":
        sc = replace(sc, sigma=1.5 * sigma, delta=1.5 * delta)
    elif name == "high_censoring":
        sc = replace(sc, rho=0.7, censor_prob=0.30)
    elif name == "high_skewness":
        s, d = skew_split(8.0, 0.95)
        sc = replace(sc, sigma=s, delta=d)
    elif name == "misspecified_R":
        sc = replace(sc, permute_R=True)
    elif name == "lognormal_errors":
        mean = delta * math.sqrt(2.0 / math.pi)
        sc = replace(sc, error_family="lognormal", lognormal=lognormal_match(mean, 8.0))
    elif name == "correlated_predictors":
        sc = replace(sc, predictor_cov="R")
    elif name == "large_n":
        sc = replace(sc, n=1000)
    sc.name = name
    sc.psi = calibrate_psi(sc)
    return sc


def _draw_errors(sc: SimScenario, rng: np.random.Generator, n: int) -> np.ndarray:
    if sc.error_family == "lognormal":
        m, s = sc.lognormal
        return rng.lognormal(m, s, n)
    return rng.normal(0.0, sc.sigma, n) + sc.delta * np.abs(rng.standard_normal(n))


def _draw_X(sc: SimScenario, rng: np.random.Generator, n: int, cols=None) -> np.ndarray:
    cov = sc.covariance()
    if cols is not None:
        if cov is None:
            return rng.standard_normal((n, len(cols)))
        return rng.multivariate_normal(np.zeros(len(cols)), cov[np.ix_(cols, cols)], size=n,
                                       method="cholesky")
    if cov is None:
        return rng.standard_normal((n, sc.p))
    return rng.multivariate_normal(np.zeros(sc.p), cov, size=n, method="cholesky")


def _latent_V(sc, rng, draws):
    cols = np.flatnonzero(sc.beta)
    X = _draw_X(sc, rng, draws, cols)
    return sc.beta0 + X @ sc.beta[cols] + _draw_errors(sc, rng, draws)


def calibrate_psi(sc: SimScenario, draws: int = 1_000_000, seed: int = 20240611) -> float:
    """Monte-Carlo quantile of the marginal latent response at the censoring target."""
    rng = np.random.default_rng([seed, SCENARIOS.index(sc.name)])
    return float(np.quantile(_latent_V(sc, rng, draws), sc.censor_prob))


@dataclass
class Replicate:
    data: CensoredDataset
    beta: np.ndarray
    gamma: np.ndarray
    R: np.ndarray
    U: np.ndarray
    V: np.ndarray
    psi_true: float


def replicate_rng(seed: int, scenario: str, index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), SCENARIOS.index(scenario), int(index)])


def generate_replicate(sc: SimScenario, rng: np.random.Generator) -> Replicate:
    X = _draw_X(sc, rng, sc.n)
    V = sc.beta0 + X @ sc.beta + _draw_errors(sc, rng, sc.n)
    U = (rng.random(sc.n) < sc.rho).astype(np.int8)
    W = (U == 1) & (V >= sc.psi)
    y = np.where(W, V, np.nan)
    R = sc.R
    if sc.permute_R:
        perm = rng.permutation(sc.p)
        R = R[np.ix_(perm, perm)]
    data = CensoredDataset(y, X, predictor_names=[f"x{j + 1}" for j in range(sc.p)])
    return Replicate(data, sc.beta.copy(), sc.truth_gamma, R, U, V, sc.psi)


# ---------------------------------------------------------------------------
# fitting


def simulation_hyper(data: CensoredDataset, selection: MrfPrior, **kw) -> Hyperparams:
    rho0, rho1 = adaptive_beta_prior(data)
    base = dict(nu0_sq=25.0, nud_sq=25.0, nu_sq=4.0, xi0=5.0, sigma0_sq=4.0,
                rho0=rho0, rho1=rho1, selection=selection)
    base.update(kw)
    return Hyperparams(**base)


def simulation_eta(R=None, seed: int = 0, draws: int = 20_000, burn_in: int = 5_000,
                   threads: int = 1):
    R = simulation_R() if R is None else R
    spec = EtaSearchSpec(logit(0.02), simulation_eta_grid(R), draws, burn_in)
    return tune_eta(spec, R, np.random.default_rng(seed), threads)


@dataclass
class FitSummary:
    method: str
    pip: np.ndarray
    selected: np.ndarray  # boolean mask
    beta_cond: np.ndarray
    threshold: float
    seconds: float
    extra: dict = field(default_factory=dict)


def fit_dataset(data: CensoredDataset, method: str, config: McmcConfig, R=None, eta: float = 0.0,
                seed: int | None = None, target: float = 0.05, error_model="skew-normal",
                compute_loglik=False):
    """Fit one simulated dataset under a named method; returns (FitSummary, chain)."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    omega = float(logit(0.02))
    if method == "mrf":
        if R is None:
            raise ValueError("the MRF method needs R")
        selection = MrfPrior(omega, eta, R)
    else:
        selection = MrfPrior(omega)
    fit_data = data
    extra = {}
    if method == "half_min_impute":
        fit_data = CensoredDataset(half_min_impute(data.y), data.X, data.C)
        hyper = simulation_hyper(fit_data, selection, error_model=error_model)
    elif method == "forced_rho_1":
        hyper = simulation_hyper(data, selection, error_model=error_model, rho_fixed=1.0)
    else:
        hyper = simulation_hyper(data, selection, error_model=error_model)
    t0 = time.perf_counter()
    chain = run_chain(fit_data, hyper, config, seed=seed, compute_loglik=compute_loglik)
    res = summarize(chain, target)
    return FitSummary(method, res.pip, res.selected_mask, conditional_beta_estimates(chain),
                      res.threshold, time.perf_counter() - t0, extra), chain


# ---------------------------------------------------------------------------
# metrics


@dataclass
class MetricsReport:
    overall_tpr: float
    tpr_sd: float
    fdr: float
    fdr_sd: float
    variable_tpr: np.ndarray
    bias: np.ndarray
    rmse: np.ndarray
    replicates: int
    truth_index: np.ndarray


def replicate_rates(selected, truth_gamma) -> tuple[float, float]:
    """(TPR, FDR) for one replicate; FDR of an empty selection is 0."""
    sel = np.asarray(selected, bool)
    t = np.asarray(truth_gamma, bool)
    tp = int((sel & t).sum())
    tpr = tp / int(t.sum()) if t.any() else 0.0
    ns = int(sel.sum())
    fdr = (ns - tp) / ns if ns else 0.0
    return tpr, fdr


def score(selections, truth_beta, beta_estimates=None) -> MetricsReport:
    """Operating characteristics averaged over replicates.

    ``selections`` is a sequence of boolean masks, ``beta_estimates`` an
    optional sequence of conditional coefficient estimates (NaN = undefined).
    """
    truth_beta = np.asarray(truth_beta, float)
    tg = truth_beta != 0
    sel = np.array([np.asarray(s, bool) for s in selections])
    if sel.shape[0] == 0:
        raise ValueError("no replicates to score")
    rates = np.array([replicate_rates(s, tg) for s in sel])
    idx = np.flatnonzero(tg)
    var_tpr = sel[:, idx].mean(axis=0)
    bias = np.full(idx.size, np.nan)
    rmse = np.full(idx.size, np.nan)
    if beta_estimates is not None:
        est = np.array([np.asarray(b, float)[idx] for b in beta_estimates])
        err = est - truth_beta[idx]
        # coefficients never included in any draw stay NaN
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            bias = np.nanmean(err, axis=0)
            rmse = np.sqrt(np.nanmean(err**2, axis=0))
    sd = lambda v: float(v.std(ddof=1)) if v.size > 1 else 0.0  # noqa: E731
    return MetricsReport(float(rates[:, 0].mean()), sd(rates[:, 0]), float(rates[:, 1].mean()),
                         sd(rates[:, 1]), var_tpr, bias, rmse, sel.shape[0], idx)


# ---------------------------------------------------------------------------
# batteries


@dataclass
class ReplicateRecord:
    scenario: str
    replicate: int
    method: str
    tpr: float
    fdr: float
    fit: FitSummary
    elpd: dict | None = None


def run_battery(scenarios, methods, replicates: int, config: McmcConfig, seed: int = 0,
                threads: int = 1, eta: float | None = None, progress=None):
    """Fit every (scenario, replicate, method) combination.

    Returns ``(records, eta)``.  Replicates run concurrently on ``threads``
    workers; each fit has its own seed derived from (seed, scenario,
    replicate, method).
    """
    if eta is None and "mrf" in methods:
        eta = simulation_eta(seed=seed, threads=threads).eta
    jobs = [(s, r) for s in scenarios for r in range(replicates)]
    cache = {s: make_scenario(s) for s in scenarios}

    def one(job):
        s, r = job
        sc = cache[s]
        rep = generate_replicate(sc, replicate_rng(seed, s, r))
        out = []
        for m in methods:
            fseed = int(np.random.SeedSequence([seed, SCENARIOS.index(s), r, METHODS.index(m)])
                        .generate_state(1)[0])
            fit, _ = fit_dataset(rep.data, m, config, R=rep.R, eta=eta or 0.0, seed=fseed)
            tpr, fdr = replicate_rates(fit.selected, rep.gamma)
            out.append(ReplicateRecord(s, r, m, tpr, fdr, fit))
        if progress:
            progress(s, r, out)
        return out

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            nested = list(pool.map(one, jobs))
    else:
        nested = [one(j) for j in jobs]
    return [rec for group in nested for rec in group], eta


def scenario_rows(records, scenarios, methods=("independent", "mrf")):
    """Scenario x prior summary: mean (sd) TPR and FDR."""
    rows = []
    for s in scenarios:
        row = {"scenario": s}
        for m in methods:
            recs = [r for r in records if r.scenario == s and r.method == m]
            if not recs:
                continue
            t = np.array([r.tpr for r in recs])
            f = np.array([r.fdr for r in recs])
            row[f"tpr_{m}"] = float(t.mean())
            row[f"tpr_sd_{m}"] = float(t.std(ddof=1)) if t.size > 1 else 0.0
            row[f"fdr_{m}"] = float(f.mean())
            row[f"fdr_sd_{m}"] = float(f.std(ddof=1)) if f.size > 1 else 0.0
            row["replicates"] = len(recs)
        rows.append(row)
    return rows
