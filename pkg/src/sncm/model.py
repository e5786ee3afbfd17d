"""Data containers and likelihoods of the skew-normal censored mixture model.

Generative model for subject ``i``::

    V_i = beta0 + sum_j gamma_j beta*_j X_ij + sum_t alpha_t C_it + delta Z_i + zeta_i
    Z_i ~ |N(0, 1)|,  zeta_i ~ N(0, sigma^2),  U_i ~ Bernoulli(rho)
    Y_i = U_i V_i if U_i V_i >= psi, otherwise a point mass value (PMV)

Point mass values are stored as NaN in ``CensoredDataset.y``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special

from .distributions import LOG_2, LOG_SQRT_2PI, DomainError, sn_logcdf_vec
from .mrf import MrfPrior


@dataclass
class CensoredDataset:
    y: np.ndarray
    X: np.ndarray
    C: np.ndarray | None = None
    psi: float | None = None
    predictor_names: list[str] | None = None
    confounder_names: list[str] | None = None
    response_name: str = "y"

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).ravel()
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        n = self.y.shape[0]
        if n < 1:
            raise ValueError("dataset needs at least one row")
        if self.X.shape[0] != n:
            raise ValueError(f"X has {self.X.shape[0]} rows, y has {n}")
        if self.C is None:
            self.C = np.zeros((n, 0))
        self.C = np.asarray(self.C, dtype=float).reshape(n, -1)
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.C))):
            raise ValueError("X and C must be finite")
        obs = self.y[self.observed]
        if obs.size == 0:
            raise ValueError("response has no observed values")
        if np.any(np.isinf(obs)):
            raise ValueError("observed responses must be finite")
        if self.psi is None:
            self.psi = float(obs.min())
        self.psi = float(self.psi)
        if np.any(obs < self.psi):
            raise ValueError("observed responses must be >= the detection limit psi")

    @property
    def observed(self) -> np.ndarray:
        return ~np.isnan(self.y)

    @property
    def W(self) -> np.ndarray:
        return self.observed.astype(np.int8)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def s(self) -> int:
        return self.C.shape[1]

    @property
    def observed_fraction(self) -> float:
        return float(self.observed.mean())


@dataclass
class Hyperparams:
    """Prior hyperparameters.

    ``sigma_sq ~ InvGamma(xi0 / 2, xi0 * sigma0_sq / 2)``; the selection prior
    is the MRF in ``selection`` (``eta = 0`` or ``R = None`` gives independent
    Bernoulli inclusion with probability ``expit(omega)``).  ``error_model =
    "normal"`` pins ``delta`` at 0; ``rho_fixed`` pins ``rho``.
    """

    nu0_sq: float = 25.0
    nu_sq: float = 4.0
    nud_sq: float = 25.0
    lambda_sq: np.ndarray | float = 25.0
    xi0: float = 5.0
    sigma0_sq: float = 4.0
    rho0: float = 1.0
    rho1: float = 1.0
    selection: MrfPrior = field(default_factory=lambda: MrfPrior(math.log(0.02 / 0.98)))
    error_model: str = "skew-normal"
    rho_fixed: float | None = None

    def __post_init__(self):
        if self.error_model not in ("skew-normal", "normal"):
            raise ValueError(f"error_model must be 'skew-normal' or 'normal', got {self.error_model!r}")
        if self.rho_fixed is not None and not 0 < self.rho_fixed <= 1:
            raise ValueError("rho_fixed must lie in (0, 1]")
        for name in ("nu0_sq", "nu_sq", "nud_sq", "xi0", "sigma0_sq", "rho0", "rho1"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite, got {v}")
        lam = np.atleast_1d(np.asarray(self.lambda_sq, dtype=float))
        if np.any(lam <= 0):
            raise ValueError("lambda_sq entries must be positive")

    def lambda_vec(self, s: int) -> np.ndarray:
        lam = np.atleast_1d(np.asarray(self.lambda_sq, dtype=float))
        if lam.size == 1:
            return np.full(s, float(lam[0]))
        if lam.size != s:
            raise ValueError(f"lambda_sq has {lam.size} entries for {s} confounders")
        return lam

    def with_(self, **kw) -> "Hyperparams":
        return replace(self, **kw)


@dataclass
class ModelState:
    beta0: float
    beta_star: np.ndarray
    gamma: np.ndarray
    alpha: np.ndarray
    sigma_sq: float
    delta: float
    rho: float
    V: np.ndarray
    U: np.ndarray
    Z: np.ndarray

    @property
    def beta(self) -> np.ndarray:
        return self.gamma * self.beta_star

    def copy(self) -> "ModelState":
        return ModelState(self.beta0, self.beta_star.copy(), self.gamma.copy(), self.alpha.copy(),
                          self.sigma_sq, self.delta, self.rho, self.V.copy(), self.U.copy(),
                          self.Z.copy())

    def check(self, data: CensoredDataset, tol: float = 0.0) -> None:
        """Raise if the latent variables contradict the observed data."""
        obs = data.observed
        if not np.array_equal(self.V[obs], data.y[obs]):
            raise AssertionError("V must equal y on observed rows")
        if not np.all(self.U[obs] == 1):
            raise AssertionError("U must be 1 on observed rows")
        cens = ~obs & (self.U == 1)
        if np.any(self.V[cens] >= data.psi + tol):
            raise AssertionError("censored present rows need V < psi")
        if np.any(self.Z <= 0):
            raise AssertionError("Z must be positive")


def linear_predictor(state: ModelState, data: CensoredDataset, i=None):
    """``beta0 + X beta + C alpha`` for row ``i`` (all rows when ``i`` is None)."""
    beta = state.gamma * state.beta_star
    if i is None:
        return state.beta0 + data.X @ beta + data.C @ state.alpha
    return float(state.beta0 + data.X[i] @ beta + data.C[i] @ state.alpha)


def _loglik_rows(y, observed, psi, mu, sigma_sq, delta, rho):
    y, o, mu, sig, dlt, rho = np.broadcast_arrays(
        np.asarray(y, float), np.asarray(observed, bool), np.asarray(mu, float),
        np.asarray(sigma_sq, float), np.asarray(delta, float), np.asarray(rho, float))
    out = np.empty(y.shape)
    with np.errstate(divide="ignore"):
        log_rho = np.log(rho)
        log_1m = np.log1p(-rho)
    if np.any(o):
        s2 = sig[o] + dlt[o] ** 2
        r = y[o] - mu[o]
        lpdf = (LOG_2 - 0.5 * np.log(s2) - LOG_SQRT_2PI - 0.5 * r * r / s2
                + special.log_ndtr(dlt[o] * r / np.sqrt(sig[o] * s2)))
        out[o] = log_rho[o] + lpdf
    m = ~o
    if np.any(m):
        lcdf = sn_logcdf_vec(psi, mu[m], sig[m], dlt[m])
        # log(1 - rho + rho F); -inf endpoints never produce NaN here
        out[m] = np.logaddexp(log_1m[m], log_rho[m] + lcdf)
    return out


def obs_loglik(state: ModelState, data: CensoredDataset) -> np.ndarray:
    """Per-observation observed-data log likelihood (length n)."""
    mu = linear_predictor(state, data)
    return _loglik_rows(data.y, data.observed, data.psi, mu, state.sigma_sq, state.delta, state.rho)


def obs_loglik_i(state: ModelState, data: CensoredDataset, i: int) -> float:
    mu = linear_predictor(state, data, i)
    return float(_loglik_rows(data.y[i:i + 1], data.observed[i:i + 1], data.psi, np.array([mu]),
                              state.sigma_sq, state.delta, state.rho)[0])


def obs_loglik_draws(y, observed, psi, mu, sigma_sq, delta, rho) -> np.ndarray:
    """Observed-data log likelihood for many draws.

    ``mu`` is (draws, n); the scalar parameters are length-``draws`` vectors.
    """
    mu = np.asarray(mu, float)
    col = lambda v: np.asarray(v, float).reshape(-1, 1)  # noqa: E731
    return _loglik_rows(y[None, :], observed[None, :], psi, mu,
                        col(sigma_sq), col(delta), col(rho))


def aug_loglik_i(state: ModelState, data: CensoredDataset, i: int) -> float:
    """Augmented-data log likelihood of row ``i`` given (V_i, U_i, Z_i).

    Uses ``Z_i ~ |N(0, 1)|`` entering the mean as ``delta * Z_i``.
    """
    z = float(state.Z[i])
    if not z > 0:
        raise DomainError(f"Z[{i}] must be positive, got {z}")
    u = int(state.U[i])
    with np.errstate(divide="ignore"):
        mix = math.log(state.rho) if u == 1 else math.log1p(-state.rho)
    mu = linear_predictor(state, data, i)
    resid = float(state.V[i]) - mu - state.delta * z
    sigma = math.sqrt(state.sigma_sq)
    return (mix + LOG_2 - LOG_SQRT_2PI - 0.5 * z * z
            - LOG_SQRT_2PI - math.log(sigma) - 0.5 * (resid / sigma) ** 2)
