"""Data-augmentation Gibbs sampler.

One iteration updates, in order: the half-normal latents ``Z``, the
presence/latent-response pairs ``(V, U)`` of PMV rows, the Gaussian
coefficient block ``(beta0, active beta*, alpha, delta)`` (inactive
``beta*`` are redrawn from the slab), the inclusion indicators ``gamma`` by
systematic scan, ``sigma_sq`` and ``rho``.

Chains are seeded from a master seed by ``numpy.random.SeedSequence(seed)
.spawn(chains)``; chain ``k`` uses the first 32-bit word of child ``k``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .model import CensoredDataset, Hyperparams, ModelState, obs_loglik_draws


class SamplerError(RuntimeError):
    """Raised when the chain reaches a non-finite state."""


@dataclass
class McmcConfig:
    iterations: int = 150_000
    burn_in: int = 25_000
    thin: int = 25
    chains: int = 1
    seed: int = 0
    store_latent: bool = True

    def __post_init__(self):
        if self.iterations <= 0 or self.thin <= 0 or self.chains <= 0:
            raise ValueError("iterations, thin and chains must be positive")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("burn_in must satisfy 0 <= burn_in < iterations")

    @property
    def kept(self) -> int:
        return (self.iterations - self.burn_in) // self.thin

    @classmethod
    def simulation(cls, **kw):
        """125,000 kept-phase iterations after 25,000 burn-in, 1 in 25 retained."""
        return cls(**{"iterations": 150_000, "burn_in": 25_000, "thin": 25, **kw})

    @classmethod
    def analysis(cls, **kw):
        """300,000 iterations after 30,000 burn-in, 1 in 20 retained, three chains."""
        return cls(**{"iterations": 330_000, "burn_in": 30_000, "thin": 20, "chains": 3, **kw})


@dataclass
class PosteriorChain:
    beta0: np.ndarray
    beta_star: np.ndarray
    gamma: np.ndarray
    alpha: np.ndarray
    sigma_sq: np.ndarray
    delta: np.ndarray
    rho: np.ndarray
    loglik: np.ndarray
    seed: int
    config: McmcConfig
    V: np.ndarray | None = None
    U: np.ndarray | None = None
    Z: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_draws(self) -> int:
        return self.beta0.shape[0]

    @property
    def beta(self) -> np.ndarray:
        return self.gamma * self.beta_star

    def state(self, k: int) -> ModelState:
        if self.V is None:
            raise ValueError("chain was run without latent storage")
        return ModelState(float(self.beta0[k]), self.beta_star[k].copy(), self.gamma[k].copy(),
                          self.alpha[k].copy(), float(self.sigma_sq[k]), float(self.delta[k]),
                          float(self.rho[k]), self.V[k].copy(), self.U[k].copy(), self.Z[k].copy())

    def linear_predictors(self, data: CensoredDataset) -> np.ndarray:
        return self.beta0[:, None] + self.beta @ data.X.T + self.alpha @ data.C.T


def chain_seeds(master_seed: int, chains: int) -> list[int]:
    kids = np.random.SeedSequence(int(master_seed)).spawn(chains)
    return [int(k.generate_state(1, dtype=np.uint32)[0]) for k in kids]


class _Workspace:
    """Precomputed arrays shared by all chains on one dataset."""

    def __init__(self, data: CensoredDataset, hyper: Hyperparams):
        self.data = data
        self.hyper = hyper
        self.y = np.where(data.observed, data.y, 0.0)
        self.w = data.W
        self.psi = float(data.psi)
        self.Xt = np.ascontiguousarray(data.X.T)
        self.Ct = np.ascontiguousarray(data.C.T)
        self.XtX = data.X.T @ data.X
        self.XtC = np.ascontiguousarray(data.X.T @ data.C)
        self.CtC = np.ascontiguousarray(data.C.T @ data.C)
        self.Xsum = data.X.sum(axis=0)
        self.Csum = data.C.sum(axis=0)
        self.xnorm2 = np.ascontiguousarray(np.diag(self.XtX))
        self.lam = hyper.lambda_vec(data.s)
        sel = hyper.selection
        if sel.R is not None and sel.R.shape[0] != data.p:
            raise ValueError(f"R is {sel.R.shape[0]}x{sel.R.shape[0]} but data has p={data.p}")
        eta = float(sel.eta) if sel.R is not None else 0.0
        self.omega = float(sel.omega)
        self.eta = eta
        self.indptr, self.indices, self.weights = sel.neighbors(data.p)
        self.fix_delta = hyper.error_model == "normal"
        self.fix_rho = hyper.rho_fixed is not None

    def hyper_args(self):
        h = self.hyper
        return (float(h.nu0_sq), float(h.nu_sq), float(h.nud_sq), self.lam, float(h.xi0),
                float(h.sigma0_sq), float(h.rho0), float(h.rho1), self.omega, self.eta,
                self.indptr, self.indices, self.weights, self.fix_delta, self.fix_rho)

    def data_args(self):
        return (self.y, self.w, self.psi, self.Xt, self.Ct, self.XtX, self.XtC, self.CtC,
                self.Xsum, self.Csum, self.xnorm2)


def initial_state(data: CensoredDataset, hyper: Hyperparams, seed: int = 0) -> ModelState:
    """Deterministic starting point: empty model, intercept at the observed mean."""
    rng = np.random.default_rng(seed)
    obs = data.y[data.observed]
    with np.errstate(over="ignore", invalid="ignore"):
        sd = float(obs.std()) if obs.size > 1 else 1.0
    sd = sd if sd > 0 or not math.isfinite(sd) else 1.0
    V = np.where(data.observed, data.y, data.psi - 0.5 * sd)
    rho = hyper.rho_fixed if hyper.rho_fixed is not None else float(
        np.clip(data.observed_fraction, 0.05, 0.95))
    return ModelState(
        beta0=float(obs.mean()),
        beta_star=rng.normal(0.0, math.sqrt(hyper.nu_sq), data.p),
        gamma=np.zeros(data.p, dtype=np.int8),
        alpha=np.zeros(data.s),
        sigma_sq=sd * sd,
        delta=0.0,
        rho=float(rho),
        V=V.astype(float),
        U=np.ones(data.n, dtype=np.int8),
        Z=np.full(data.n, math.sqrt(2.0 / math.pi)),
    )


def _state_arrays(state: ModelState):
    par = np.array([state.beta0, state.sigma_sq, state.delta, state.rho], dtype=float)
    return (par, np.array(state.beta_star, float), np.array(state.gamma, np.int8),
            np.array(state.alpha, float), np.array(state.V, float), np.array(state.U, np.int8),
            np.array(state.Z, float))


def _write_back(state: ModelState, arrays):
    par, bstar, gamma, alpha, V, U, Z = arrays
    state.beta0, state.sigma_sq, state.delta, state.rho = (float(v) for v in par)
    state.beta_star, state.gamma, state.alpha = bstar, gamma, alpha
    state.V, state.U, state.Z = V, U, Z


def run_chain(data: CensoredDataset, hyper: Hyperparams, config: McmcConfig,
              seed: int | None = None, init: ModelState | None = None,
              compute_loglik: bool = True) -> PosteriorChain:
    """Run one chain.  ``seed`` defaults to the first spawned seed of ``config.seed``."""
    if seed is None:
        seed = chain_seeds(config.seed, 1)[0]
    ws = _Workspace(data, hyper)
    state = init.copy() if init is not None else initial_state(data, hyper, seed)
    if ws.fix_delta:
        state.delta = 0.0
    if ws.fix_rho:
        state.rho = float(hyper.rho_fixed)
    arrays = _state_arrays(state)
    if not all(np.all(np.isfinite(a)) for a in arrays):
        raise SamplerError("non-finite initial state (check the scale of the response)")
    n_keep = config.kept
    n, p, s = data.n, data.p, data.s
    nl = n_keep if config.store_latent else 0
    out = (np.empty((n_keep, 4)), np.empty((n_keep, p)), np.empty((n_keep, p), np.int8),
           np.empty((n_keep, s)), np.empty((nl, n)), np.empty((nl, n), np.int8),
           np.empty((nl, n)))
    it, comp = K.run(*ws.data_args(), *ws.hyper_args(), *arrays,
                     int(config.iterations), int(config.burn_in), int(config.thin),
                     int(seed) & 0xFFFFFFFF, True, *out)
    if comp:
        raise SamplerError(
            f"non-finite state at iteration {it} after updating {K.COMPONENTS[comp]}")
    par = out[0]
    chain = PosteriorChain(
        beta0=par[:, 0].copy(), beta_star=out[1], gamma=out[2], alpha=out[3],
        sigma_sq=par[:, 1].copy(), delta=par[:, 2].copy(), rho=par[:, 3].copy(),
        loglik=np.empty((0, n)), seed=int(seed), config=config,
        V=out[4] if config.store_latent else None,
        U=out[5] if config.store_latent else None,
        Z=out[6] if config.store_latent else None,
    )
    chain.meta["final_state"] = _arrays_to_state(arrays)
    if compute_loglik:
        chain.loglik = chain_loglik(chain, data)
    return chain


def _arrays_to_state(arrays) -> ModelState:
    st = ModelState(0.0, None, None, None, 1.0, 0.0, 1.0, None, None, None)
    _write_back(st, tuple(a.copy() for a in arrays))
    return st


def chain_loglik(chain: PosteriorChain, data: CensoredDataset) -> np.ndarray:
    """Per-draw, per-observation observed-data log likelihood (draws x n)."""
    mu = chain.linear_predictors(data)
    return obs_loglik_draws(data.y, data.observed, data.psi, mu, chain.sigma_sq,
                            chain.delta, chain.rho)


def run_chains(data: CensoredDataset, hyper: Hyperparams, config: McmcConfig,
               threads: int = 1) -> list[PosteriorChain]:
    seeds = chain_seeds(config.seed, config.chains)
    if threads > 1 and config.chains > 1:
        with ThreadPoolExecutor(min(threads, config.chains)) as pool:
            return list(pool.map(lambda sd: run_chain(data, hyper, config, sd), seeds))
    return [run_chain(data, hyper, config, sd) for sd in seeds]


# ---------------------------------------------------------------------------
# single full-conditional updates, mainly for validation against oracles


def _single(data, hyper, state, rng, fn):
    ws = _Workspace(data, hyper)
    K.seed(int(rng.integers(0, 2**32 - 1)))
    arrays = _state_arrays(state)
    par, bstar, gamma, alpha, V, U, Z = arrays
    mu = np.empty(data.n)
    K.compute_mu(ws.Xt, ws.Ct, par, bstar, gamma, alpha, mu)
    fn(ws, arrays, mu)
    _write_back(state, arrays)
    return state


def update_Z(state, data, hyper, rng):
    return _single(data, hyper, state, rng,
                   lambda ws, a, mu: K.update_Z(a[4], mu, a[0], a[6]))


def update_V_U(state, data, hyper, rng):
    return _single(data, hyper, state, rng,
                   lambda ws, a, mu: K.update_VU(ws.y, ws.w, ws.psi, mu, a[0], a[6], a[4], a[5]))


def update_coefficients(state, data, hyper, rng):
    def fn(ws, a, mu):
        h = ws.hyper
        K.update_coefficients(ws.Xt, ws.Ct, ws.XtX, ws.XtC, ws.CtC, ws.Xsum, ws.Csum, a[4], a[6],
                              a[0], a[1], a[2], a[3], float(h.nu0_sq), float(h.nu_sq),
                              float(h.nud_sq), ws.lam, ws.fix_delta, mu)
    return _single(data, hyper, state, rng, fn)


def update_gamma(state, data, hyper, rng):
    def fn(ws, a, mu):
        K.update_gamma(ws.Xt, ws.xnorm2, a[4], a[6], a[0], a[1], a[2], ws.omega, ws.eta,
                       ws.indptr, ws.indices, ws.weights, mu)
    return _single(data, hyper, state, rng, fn)


def update_sigma_sq(state, data, hyper, rng):
    return _single(data, hyper, state, rng,
                   lambda ws, a, mu: K.update_sigma_sq(a[4], a[6], mu, a[0], float(hyper.xi0),
                                                       float(hyper.sigma0_sq)))


def update_rho(state, data, hyper, rng):
    return _single(data, hyper, state, rng,
                   lambda ws, a, mu: K.update_rho(a[5], a[0], float(hyper.rho0), float(hyper.rho1)))


class Sampler:
    """Step-wise access to the compiled sweep, used by joint-distribution tests."""

    def __init__(self, data: CensoredDataset, hyper: Hyperparams, state: ModelState, seed: int):
        self.ws = _Workspace(data, hyper)
        self.arrays = _state_arrays(state)
        K.seed(int(seed) & 0xFFFFFFFF)
        p, s = data.p, data.s
        self._out = (np.empty((1, 4)), np.empty((1, p)), np.empty((1, p), np.int8),
                     np.empty((1, s)), np.empty((0, data.n)), np.empty((0, data.n), np.int8),
                     np.empty((0, data.n)))

    def sweep(self, iterations: int = 1):
        it, comp = K.run(*self.ws.data_args(), *self.ws.hyper_args(), *self.arrays,
                         int(iterations), 0, 1, 0, False, *self._out)
        if comp:
            raise SamplerError(f"non-finite state at iteration {it} ({K.COMPONENTS[comp]})")

    def set_data(self, data: CensoredDataset):
        hyper = self.ws.hyper
        self.ws = _Workspace(data, hyper)

    @property
    def state(self) -> ModelState:
        return _arrays_to_state(self.arrays)
