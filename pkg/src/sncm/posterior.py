"""Posterior summaries, selection rules, diagnostics and preprocessing recipes."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .gibbs import PosteriorChain
from .model import CensoredDataset

SELECT_NONE = math.inf  # threshold meaning "no predictor qualifies"
# Estimated FDRs within this distance of the target count as meeting it, so a
# set whose FDR equals the target in exact arithmetic does not depend on the
# summation order of its rounded complements.
FDR_TIE_TOL = 1e-12


@dataclass
class SelectionResult:
    pip: np.ndarray
    threshold: float
    selected: np.ndarray
    beta_hat: np.ndarray
    alpha_hat: np.ndarray
    beta0_hat: float
    sigma_sq_hat: float
    delta_hat: float
    rho_hat: float

    @property
    def selected_mask(self) -> np.ndarray:
        mask = np.zeros(self.pip.shape[0], dtype=bool)
        mask[self.selected] = True
        return mask


def _as_list(chains) -> list[PosteriorChain]:
    if isinstance(chains, PosteriorChain):
        chains = [chains]
    chains = list(chains)
    if not chains or all(c.n_draws == 0 for c in chains):
        raise ValueError("no posterior draws")
    return chains


def _pooled(chains, name):
    return np.concatenate([getattr(c, name) for c in _as_list(chains)], axis=0)


def compute_pips(chains) -> np.ndarray:
    """Posterior inclusion probabilities from pooled draws."""
    return _pooled(chains, "gamma").mean(axis=0)


def bayesian_fdr_threshold(pips, target: float = 0.05) -> float:
    """Smallest PIP threshold whose selected set has estimated FDR <= target.

    The estimated FDR of ``{j: pip_j >= t}`` is the mean of ``1 - pip_j``
    over that set; it qualifies when it is at most ``target + FDR_TIE_TOL``.
    Returns :data:`SELECT_NONE` when no nonempty set qualifies.
    """
    if not 0 < target < 1:
        raise ValueError(f"target must lie in (0, 1), got {target}")
    pips = np.asarray(pips, dtype=float).ravel()
    if np.any((pips < 0) | (pips > 1)) or np.any(np.isnan(pips)):
        raise ValueError("PIPs must lie in [0, 1]")
    order = np.sort(pips)[::-1]
    # running mean of complements over the top-k set; ties enter together
    run = np.cumsum(1.0 - order) / np.arange(1, order.size + 1)
    best = SELECT_NONE
    for t in np.unique(order)[::-1]:
        k = int(np.searchsorted(-order, -t, side="right"))
        if run[k - 1] <= target + FDR_TIE_TOL:
            best = float(t)
        else:
            break
    return best


def select(pips, threshold: float) -> np.ndarray:
    return np.flatnonzero(np.asarray(pips) >= threshold)


def conditional_beta_estimates(chains) -> np.ndarray:
    """Mean of beta*_j over draws with gamma_j = 1 (NaN when there are none)."""
    g = _pooled(chains, "gamma").astype(bool)
    b = _pooled(chains, "beta_star")
    cnt = g.sum(axis=0)
    tot = np.where(g, b, 0.0).sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(cnt > 0, tot / np.maximum(cnt, 1), np.nan)


def summarize(chains, target: float = 0.05, threshold: float | None = None) -> SelectionResult:
    """Selection and point estimates.  ``threshold`` overrides the per-model
    Bayesian-FDR threshold (used when thresholding pooled PIPs)."""
    chains = _as_list(chains)
    pip = compute_pips(chains)
    t = bayesian_fdr_threshold(pip, target) if threshold is None else threshold
    sel = select(pip, t)
    bh = conditional_beta_estimates(chains)
    beta_hat = np.full(pip.shape, np.nan)
    beta_hat[sel] = bh[sel]
    return SelectionResult(
        pip=pip, threshold=t, selected=sel, beta_hat=beta_hat,
        alpha_hat=_pooled(chains, "alpha").mean(axis=0),
        beta0_hat=float(_pooled(chains, "beta0").mean()),
        sigma_sq_hat=float(_pooled(chains, "sigma_sq").mean()),
        delta_hat=float(_pooled(chains, "delta").mean()),
        rho_hat=float(_pooled(chains, "rho").mean()),
    )


def pooled_fdr_threshold(pip_vectors, target: float = 0.05) -> float:
    """Single threshold over the PIPs of several response models."""
    return bayesian_fdr_threshold(np.concatenate([np.ravel(p) for p in pip_vectors]), target)


# ---------------------------------------------------------------------------
# convergence diagnostics


def _split(x):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    half = x.shape[1] // 2
    if half < 2:
        raise ValueError("chains need at least 4 draws")
    return np.concatenate([x[:, :half], x[:, -half:]], axis=0)


def _rank_normalize(x):
    r = stats.rankdata(x, method="average").reshape(x.shape)
    return stats.norm.ppf((r - 0.375) / (x.size + 0.25))


def _rhat_raw(x):
    m, n = x.shape
    W = x.var(axis=1, ddof=1).mean()
    B = n * x.mean(axis=1).var(ddof=1)
    if W == 0:
        return 1.0 if B == 0 else math.inf
    return math.sqrt(((n - 1) / n * W + B / n) / W)


def split_rhat(x) -> float:
    """Rank-normalized split potential scale reduction (max of bulk and folded).

    ``x`` is (chains, draws).  Constant input returns exactly 1.
    """
    s = _split(x)
    if np.all(s == s.flat[0]):
        return 1.0
    bulk = _rhat_raw(_rank_normalize(s))
    folded = _rhat_raw(_rank_normalize(np.abs(s - np.median(s))))
    return max(bulk, folded)


def _autocov(x):
    n = x.shape[-1]
    xc = x - x.mean(axis=-1, keepdims=True)
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, n=size, axis=-1)
    ac = np.fft.irfft(f * np.conj(f), n=size, axis=-1)[..., :n]
    return ac / n


def ess(x) -> float:
    """Effective sample size with Geyer's initial monotone sequence estimator."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    m, n = x.shape
    if np.all(x == x.flat[0]):
        return float(m * n)
    acov = _autocov(x)
    chain_var = acov[:, 0] * n / (n - 1)
    W = chain_var.mean()
    var_plus = W * (n - 1) / n
    if m > 1:
        var_plus += x.mean(axis=1).var(ddof=1)
    rho = 1.0 - (W - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    tau = -1.0
    prev = math.inf
    t = 0
    while t + 1 < n:
        pair = rho[t] + rho[t + 1]
        if pair < 0:
            break
        pair = min(pair, prev)
        tau += 2.0 * pair
        prev = pair
        t += 2
    tau = max(tau, 1.0 / math.log10(m * n)) if m * n > 1 else 1.0
    return float(m * n / tau)


def chain_parameters(chain: PosteriorChain) -> dict[str, np.ndarray]:
    out = {"beta0": chain.beta0, "sigma_sq": chain.sigma_sq, "delta": chain.delta,
           "rho": chain.rho}
    for j in range(chain.beta.shape[1]):
        out[f"beta[{j}]"] = chain.beta[:, j]
    for t in range(chain.alpha.shape[1]):
        out[f"alpha[{t}]"] = chain.alpha[:, t]
    out["model_size"] = chain.gamma.sum(axis=1).astype(float)
    return out


def convergence_report(chains, names=None) -> list[dict]:
    """Across-chain means, split R-hat and ESS for every scalar parameter."""
    chains = _as_list(chains)
    if len(chains) < 2:
        raise ValueError("convergence report needs at least two chains")
    n = min(c.n_draws for c in chains)
    per = [chain_parameters(c) for c in chains]
    rows = []
    for key in per[0]:
        x = np.stack([p[key][:n] for p in per])
        row = {"parameter": key if names is None else names.get(key, key)}
        for k in range(x.shape[0]):
            row[f"mean_chain{k + 1}"] = float(x[k].mean())
        row["rhat"] = split_rhat(x)
        row["ess"] = ess(x)
        row["flag"] = bool(row["rhat"] > 1.1)
        rows.append(row)
    return rows


def trace_rows(chains, params=("beta0", "sigma_sq", "delta", "rho", "model_size")):
    for k, c in enumerate(_as_list(chains)):
        par = chain_parameters(c)
        for d in range(c.n_draws):
            yield {"chain": k + 1, "draw": d + 1, **{p: float(par[p][d]) for p in params}}


# ---------------------------------------------------------------------------
# preprocessing recipes


@dataclass(frozen=True)
class AffineTransform:
    center: float
    scale: float

    def forward(self, v):
        return (np.asarray(v, float) - self.center) / self.scale

    def inverse(self, v):
        return np.asarray(v, float) * self.scale + self.center

    def coefficient_to_original(self, beta):
        return np.asarray(beta, float) * self.scale


def half_min_impute(y) -> np.ndarray:
    y = np.asarray(y, float)
    obs = ~np.isnan(y)
    if not obs.any():
        raise ValueError("no observed values to impute from")
    return np.where(obs, y, 0.5 * y[obs].min())


def standardize_with_pmv(data: CensoredDataset) -> tuple[CensoredDataset, AffineTransform]:
    """Half-minimum impute, z-standardize, then restore the PMVs."""
    imputed = half_min_impute(data.y)
    sd = float(imputed.std(ddof=1)) if imputed.size > 1 else 0.0
    if not sd > 0:
        raise ValueError("response has zero variance after half-minimum imputation")
    tr = AffineTransform(float(imputed.mean()), sd)
    y = np.where(data.observed, tr.forward(data.y), np.nan)
    out = CensoredDataset(y, data.X, data.C, float(tr.forward(data.psi)), data.predictor_names,
                          data.confounder_names, data.response_name)
    return out, tr


def empirical_slab_variance(data: CensoredDataset) -> float:
    """Variance of the p single-predictor least-squares slopes.

    Each regression uses the half-minimum-imputed, standardized response and
    adjusts for the confounders.
    """
    if data.p < 2:
        raise ValueError("need at least two predictors")
    imputed = half_min_impute(data.y)
    sd = imputed.std(ddof=1)
    if not sd > 0:
        raise ValueError("response has zero variance after half-minimum imputation")
    yz = (imputed - imputed.mean()) / sd
    base = np.column_stack([np.ones(data.n), data.C])
    slopes = np.empty(data.p)
    for j in range(data.p):
        D = np.column_stack([data.X[:, j], base])
        coef, _, rank, _ = np.linalg.lstsq(D, yz, rcond=None)
        if rank < D.shape[1]:
            raise ValueError(f"predictor {j} is degenerate (collinear with intercept/confounders)")
        slopes[j] = coef[0]
    v = float(slopes.var(ddof=1))
    if not v > 1e-14:
        raise ValueError("single-predictor slopes have zero variance")
    return v


def adaptive_beta_prior(data_or_wbar, floor: float = 0.01) -> tuple[float, float]:
    """Beta(5 sqrt(W), 5 (1 - sqrt(W))) prior on rho from the observed fraction W."""
    wbar = (data_or_wbar.observed_fraction if isinstance(data_or_wbar, CensoredDataset)
            else float(data_or_wbar))
    if not 0 < wbar <= 1:
        raise ValueError(f"observed fraction must lie in (0, 1], got {wbar}")
    r = math.sqrt(wbar)
    return 5.0 * r, max(5.0 * (1.0 - r), floor)
