"""Within-sample predictive accuracy and posterior predictive simulation."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .gibbs import PosteriorChain
from .model import CensoredDataset


@dataclass
class ElpdReport:
    elpd_is: float
    elpd_waic: float
    pointwise_is: np.ndarray
    pointwise_waic: np.ndarray
    p_waic: float
    unstable_is: np.ndarray  # observations whose largest normalized IS weight exceeds 0.5


def _check(loglik):
    ll = np.asarray(loglik, dtype=float)
    if ll.ndim != 2:
        raise ValueError("log-likelihood must be a draws x n matrix")
    if ll.shape[0] < 2:
        raise ValueError("need at least two posterior draws")
    return ll


def elpd_waic(loglik):
    """Pointwise ``log mean exp(ll) - var(ll)``; returns (total, pointwise, p_waic)."""
    ll = _check(loglik)
    S = ll.shape[0]
    lppd = logsumexp(ll, axis=0) - math.log(S)
    penalty = ll.var(axis=0, ddof=1)
    pointwise = lppd - penalty
    return float(pointwise.sum()), pointwise, float(penalty.sum())


def elpd_is(loglik, max_weight: float = 0.5):
    """Harmonic-mean importance-sampling ELPD (conditional predictive ordinates).

    Returns (total, pointwise, unstable) where ``unstable`` flags observations
    whose largest normalized weight exceeds ``max_weight``.
    """
    ll = _check(loglik)
    S = ll.shape[0]
    neg = -ll
    lse = logsumexp(neg, axis=0)
    pointwise = -(lse - math.log(S))
    wmax = np.exp(neg.max(axis=0) - lse)
    unstable = wmax > max_weight
    if np.any(unstable):
        warnings.warn(f"{int(unstable.sum())} observation(s) have a normalized importance "
                      f"weight above {max_weight}; IS estimate may be unstable", RuntimeWarning,
                      stacklevel=2)
    return float(pointwise.sum()), pointwise, unstable


def elpd_report(loglik) -> ElpdReport:
    w_tot, w_pt, p_waic = elpd_waic(loglik)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        i_tot, i_pt, unstable = elpd_is(loglik)
    return ElpdReport(i_tot, w_tot, i_pt, w_pt, p_waic, unstable)


def pooled_loglik(chains) -> np.ndarray:
    if isinstance(chains, PosteriorChain):
        chains = [chains]
    return np.concatenate([c.loglik for c in chains], axis=0)


def sum_models(logliks) -> np.ndarray:
    """Add per-draw log likelihoods of several response models observation-wise.

    The models must share the draw count; the result is (draws, total rows).
    """
    logliks = [np.asarray(l) for l in logliks]
    S = min(l.shape[0] for l in logliks)
    return np.concatenate([l[:S] for l in logliks], axis=1)


def posterior_predictive_sample(chains, data: CensoredDataset, draws_out: int,
                                rng: np.random.Generator) -> np.ndarray:
    """Simulate response vectors from randomly chosen posterior draws.

    Returns a (draws_out, n) array with NaN for simulated PMVs (absence with
    probability ``1 - rho`` or a latent value below ``psi``).
    """
    if isinstance(chains, PosteriorChain):
        chains = [chains]
    if not chains or sum(c.n_draws for c in chains) == 0:
        raise ValueError("no posterior draws")
    sizes = np.array([c.n_draws for c in chains])
    flat = rng.choice(sizes.sum(), size=draws_out, replace=True)
    bounds = np.cumsum(sizes)
    out = np.empty((draws_out, data.n))
    for r, f in enumerate(flat):
        k = int(np.searchsorted(bounds, f, side="right"))
        d = int(f - (bounds[k - 1] if k else 0))
        c = chains[k]
        mu = c.beta0[d] + data.X @ c.beta[d] + data.C @ c.alpha[d]
        z = np.abs(rng.standard_normal(data.n))
        v = mu + c.delta[d] * z + rng.normal(0.0, math.sqrt(c.sigma_sq[d]), data.n)
        u = rng.random(data.n) < c.rho[d]
        out[r] = np.where(u & (v >= data.psi), v, np.nan)
    return out
