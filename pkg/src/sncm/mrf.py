"""Markov random field prior over inclusion indicators.

``P(gamma) ∝ exp(omega * sum(gamma) + eta * gamma' R gamma)``.  The quadratic
form counts every related pair twice, so flipping ``gamma_j`` on changes the
log prior by ``omega + 2 eta sum_{k != j} r_jk gamma_k``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import sparse, stats
from scipy.special import expit, logit

from .relmatrix import validate_relationship_matrix


@dataclass
class MrfPrior:
    omega: float
    eta: float = 0.0
    R: np.ndarray | None = None

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError(f"eta must be non-negative, got {self.eta}")
        if self.R is not None:
            self.R = validate_relationship_matrix(self.R)

    @property
    def p(self):
        return None if self.R is None else self.R.shape[0]

    def neighbors(self, p: int | None = None):
        """CSR arrays (indptr, indices, weights) of the non-zero entries of R."""
        if self.R is None:
            if p is None:
                raise ValueError("p is required when R is absent")
            return (np.zeros(p + 1, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros(0))
        csr = sparse.csr_matrix(self.R)
        return (csr.indptr.astype(np.int64), csr.indices.astype(np.int64),
                csr.data.astype(np.float64))


@dataclass
class EtaSearchSpec:
    omega0: float
    candidates: np.ndarray
    prior_draws: int = 20_000
    burn_in: int = 5_000
    percentile: float = 0.95

    def __post_init__(self):
        self.candidates = np.asarray(self.candidates, dtype=float)
        if self.candidates.size == 0:
            raise ValueError("at least one eta candidate is required")
        if np.any(self.candidates < 0) or np.any(np.diff(self.candidates) < 0):
            raise ValueError("eta candidates must be non-negative and ascending")
        if not 0 < self.percentile < 1:
            raise ValueError("percentile must lie in (0, 1)")


@dataclass
class EtaSearchResult:
    eta: float
    reference: int
    candidates: np.ndarray
    q95: np.ndarray
    q95_se: np.ndarray
    mean_size: np.ndarray = field(default=None)

    def table(self):
        return [
            {"eta": float(e), "q95": float(q), "q95_se": float(s), "mean_size": float(m),
             "qualifies": bool(q <= self.reference)}
            for e, q, s, m in zip(self.candidates, self.q95, self.q95_se, self.mean_size)
        ]


def _check_gamma(gamma, p):
    gamma = np.asarray(gamma)
    if gamma.shape != (p,):
        raise ValueError(f"gamma has shape {gamma.shape}, expected ({p},)")
    return gamma.astype(float)


def log_prior_unnorm(gamma, prior: MrfPrior) -> float:
    p = len(gamma) if prior.R is None else prior.R.shape[0]
    g = _check_gamma(gamma, p)
    out = prior.omega * g.sum()
    if prior.R is not None and prior.eta != 0:
        out += prior.eta * g @ prior.R @ g
    return float(out)


def conditional_inclusion_prob(j: int, gamma, prior: MrfPrior) -> float:
    p = len(gamma) if prior.R is None else prior.R.shape[0]
    g = _check_gamma(gamma, p)
    field_ = 0.0
    if prior.R is not None:
        row = prior.R[j].copy()
        row[j] = 0.0
        field_ = float(row @ g)
    return float(expit(prior.omega + 2.0 * prior.eta * field_))


@njit(cache=True, nogil=True)
def _mrf_gibbs(omega, eta, indptr, indices, weights, p, burn_in, draws, seed, keep_states):
    np.random.seed(seed)
    gamma = np.zeros(p, dtype=np.int8)
    h = np.zeros(p)  # h_j = sum_k r_jk gamma_k
    sizes = np.empty(draws, dtype=np.int64)
    states = np.zeros((draws if keep_states else 0, p), dtype=np.int8)
    size = 0
    for it in range(burn_in + draws):
        for j in range(p):
            prob = 1.0 / (1.0 + math.exp(-(omega + 2.0 * eta * h[j])))
            new = 1 if np.random.random() < prob else 0
            if new != gamma[j]:
                sign = 1.0 if new == 1 else -1.0
                for k in range(indptr[j], indptr[j + 1]):
                    h[indices[k]] += sign * weights[k]
                gamma[j] = new
                size += 1 if new == 1 else -1
        if it >= burn_in:
            sizes[it - burn_in] = size
            if keep_states:
                states[it - burn_in] = gamma
    return sizes, states


def _seed_of(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**32 - 1))


def sample_prior(prior: MrfPrior, draws: int, burn_in: int, rng: np.random.Generator,
                 p: int | None = None, keep_states: bool = True):
    """Systematic-scan Gibbs draws from the MRF prior.

    Returns ``(sizes, states)``; ``states`` is empty unless ``keep_states``.
    """
    if draws <= 0 or burn_in < 0:
        raise ValueError("draws must be positive and burn_in non-negative")
    p = prior.p if prior.R is not None else p
    indptr, indices, weights = prior.neighbors(p)
    return _mrf_gibbs(float(prior.omega), float(prior.eta), indptr, indices, weights,
                      int(p), int(burn_in), int(draws), _seed_of(rng), keep_states)


def binomial_reference(p: int, omega0: float, percentile: float = 0.95) -> int:
    """Percentile of the model size under independent inclusion at twice expit(omega0)."""
    q = 2.0 * expit(omega0)
    if q >= 1:
        return p
    return int(stats.binom.ppf(percentile, p, q))


def _size_quantile(sizes, percentile, batches=20):
    q = float(np.quantile(sizes, percentile, method="inverted_cdf"))
    parts = np.array_split(sizes, batches)
    bq = np.array([np.quantile(b, percentile, method="inverted_cdf") for b in parts])
    return q, float(bq.std(ddof=1) / math.sqrt(batches))


def tune_eta(spec: EtaSearchSpec, R, rng: np.random.Generator, threads: int = 1) -> EtaSearchResult:
    """Evaluate every candidate eta and pick the largest that keeps the prior
    model-size percentile at or below the doubled-sparsity binomial reference."""
    R = validate_relationship_matrix(R)
    p = R.shape[0]
    reference = binomial_reference(p, spec.omega0, spec.percentile)
    base = MrfPrior(spec.omega0, 0.0, R)
    indptr, indices, weights = base.neighbors()
    seeds = np.random.SeedSequence(_seed_of(rng)).spawn(len(spec.candidates))

    def one(k):
        sizes, _ = _mrf_gibbs(float(spec.omega0), float(spec.candidates[k]), indptr, indices,
                              weights, p, spec.burn_in, spec.prior_draws,
                              int(seeds[k].generate_state(1)[0]), False)
        q, se = _size_quantile(sizes, spec.percentile)
        return q, se, float(sizes.mean())

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            res = list(pool.map(one, range(len(spec.candidates))))
    else:
        res = [one(k) for k in range(len(spec.candidates))]
    q95 = np.array([r[0] for r in res])
    se = np.array([r[1] for r in res])
    mean_size = np.array([r[2] for r in res])
    ok = np.flatnonzero(q95 <= reference)
    eta = float(spec.candidates[ok[-1]]) if ok.size else 0.0
    return EtaSearchResult(eta, reference, spec.candidates, q95, se, mean_size)


def select_eta(spec: EtaSearchSpec, R, rng: np.random.Generator, threads: int = 1) -> float:
    return tune_eta(spec, R, rng, threads).eta


def simulation_eta_grid(R) -> np.ndarray:
    """Candidates 0.01/max(R), 0.02/max(R), ..., 1/max(R)."""
    rmax = float(np.max(R))
    if rmax <= 0:
        return np.arange(1, 101) / 100.0
    return np.arange(1, 101) / 100.0 / rmax


def analysis_eta_grid() -> np.ndarray:
    return np.arange(1, 101) / 100.0


__all__ = [
    "MrfPrior", "EtaSearchSpec", "EtaSearchResult", "log_prior_unnorm",
    "conditional_inclusion_prob", "sample_prior", "select_eta", "tune_eta",
    "binomial_reference", "simulation_eta_grid", "analysis_eta_grid", "logit", "expit",
]
