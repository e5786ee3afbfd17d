"""Compiled full-conditional updates for the data-augmentation Gibbs sampler.

All functions mutate their state arrays in place and draw from numba's
thread-local generator, which callers seed once per chain.  Scalar
parameters live in ``par = [beta0, sigma_sq, delta, rho]``.
"""

import math

import numpy as np
from numba import njit

from .distributions import truncnorm_draw

BETA0, SIGMA_SQ, DELTA, RHO = 0, 1, 2, 3

# component codes reported by the non-finite guard
COMPONENTS = {1: "Z", 2: "V/U", 3: "coefficients", 4: "gamma", 5: "sigma_sq", 6: "rho"}


@njit(cache=True, nogil=True)
def seed(s):
    np.random.seed(s)


@njit(cache=True, nogil=True)
def compute_mu(Xt, Ct, par, bstar, gamma, alpha, mu):
    n = mu.shape[0]
    for i in range(n):
        mu[i] = par[BETA0]
    for j in range(Xt.shape[0]):
        if gamma[j] == 1:
            b = bstar[j]
            for i in range(n):
                mu[i] += b * Xt[j, i]
    for t in range(Ct.shape[0]):
        a = alpha[t]
        for i in range(n):
            mu[i] += a * Ct[t, i]


@njit(cache=True, nogil=True)
def update_Z(V, mu, par, Z):
    """Z_i | rest ~ N(d r_i / (s2 + d^2), s2 / (s2 + d^2)) restricted to (0, inf)."""
    d = par[DELTA]
    s2 = par[SIGMA_SQ]
    denom = s2 + d * d
    sd = math.sqrt(s2 / denom)
    for i in range(Z.shape[0]):
        m = d * (V[i] - mu[i]) / denom
        Z[i] = truncnorm_draw(m, sd, 0.0, np.inf)


@njit(cache=True, nogil=True)
def update_VU(y, w, psi, mu, par, Z, V, U):
    """V given U, then U given V, for the unobserved rows."""
    sd = math.sqrt(par[SIGMA_SQ])
    d = par[DELTA]
    rho = par[RHO]
    for i in range(V.shape[0]):
        if w[i] == 1:
            V[i] = y[i]
            U[i] = 1
            continue
        m = mu[i] + d * Z[i]
        if U[i] == 1:
            V[i] = truncnorm_draw(m, sd, -np.inf, psi)
        else:
            V[i] = m + sd * np.random.standard_normal()
        if V[i] >= psi:
            U[i] = 0
        else:
            U[i] = 1 if np.random.random() < rho else 0


@njit(cache=True, nogil=True)
def _chol_solve_draw(Q, rhs):
    # mean Q^{-1} rhs plus L^{-T} eps with Q = L L^T
    k = Q.shape[0]
    L = np.linalg.cholesky(Q)
    # forward: L u = rhs
    u = np.empty(k)
    for i in range(k):
        acc = rhs[i]
        for j in range(i):
            acc -= L[i, j] * u[j]
        u[i] = acc / L[i, i]
    # add noise in whitened space, then back-substitute L^T x = u + eps
    x = np.empty(k)
    for i in range(k):
        u[i] += np.random.standard_normal()
    for i in range(k - 1, -1, -1):
        acc = u[i]
        for j in range(i + 1, k):
            acc -= L[j, i] * x[j]
        x[i] = acc / L[i, i]
    return x


@njit(cache=True, nogil=True)
def update_coefficients(Xt, Ct, XtX, XtC, CtC, Xsum, Csum, V, Z, par, bstar, gamma, alpha,
                        nu0_sq, nu_sq, nud_sq, lam, fix_delta, mu):
    """Joint Gaussian draw of (beta0, active beta*, alpha, delta); inactive beta* from the prior."""
    n = V.shape[0]
    p = Xt.shape[0]
    s = Ct.shape[0]
    na = 0
    for j in range(p):
        if gamma[j] == 1:
            na += 1
    act = np.empty(na, dtype=np.int64)
    c = 0
    for j in range(p):
        if gamma[j] == 1:
            act[c] = j
            c += 1
    use_z = 0 if fix_delta else 1
    k = 1 + na + s + use_z
    oz = 1 + na + s
    inv_s2 = 1.0 / par[SIGMA_SQ]
    Q = np.zeros((k, k))
    rhs = np.zeros(k)

    # cross products with Z and V computed on the fly
    zv = 0.0
    zz = 0.0
    zs = 0.0
    vs = 0.0
    for i in range(n):
        vs += V[i]
        zs += Z[i]
        zz += Z[i] * Z[i]
        zv += Z[i] * V[i]
    Q[0, 0] = n
    rhs[0] = vs
    for a in range(na):
        j = act[a]
        Q[0, 1 + a] = Xsum[j]
        for b in range(na):
            Q[1 + a, 1 + b] = XtX[j, act[b]]
        for t in range(s):
            Q[1 + a, 1 + na + t] = XtC[j, t]
        xv = 0.0
        xz = 0.0
        for i in range(n):
            xv += Xt[j, i] * V[i]
            xz += Xt[j, i] * Z[i]
        rhs[1 + a] = xv
        if use_z:
            Q[1 + a, oz] = xz
    for t in range(s):
        Q[0, 1 + na + t] = Csum[t]
        for u in range(s):
            Q[1 + na + t, 1 + na + u] = CtC[t, u]
        cv = 0.0
        cz = 0.0
        for i in range(n):
            cv += Ct[t, i] * V[i]
            cz += Ct[t, i] * Z[i]
        rhs[1 + na + t] = cv
        if use_z:
            Q[1 + na + t, oz] = cz
    if use_z:
        Q[0, oz] = zs
        Q[oz, oz] = zz
        rhs[oz] = zv
    # symmetrize, scale by the noise precision, add prior precisions
    for a in range(k):
        for b in range(a + 1, k):
            Q[b, a] = Q[a, b]
    for a in range(k):
        rhs[a] *= inv_s2
        for b in range(k):
            Q[a, b] *= inv_s2
    Q[0, 0] += 1.0 / nu0_sq
    for a in range(na):
        Q[1 + a, 1 + a] += 1.0 / nu_sq
    for t in range(s):
        Q[1 + na + t, 1 + na + t] += 1.0 / lam[t]
    if use_z:
        Q[oz, oz] += 1.0 / nud_sq

    x = _chol_solve_draw(Q, rhs)
    par[BETA0] = x[0]
    for a in range(na):
        bstar[act[a]] = x[1 + a]
    for t in range(s):
        alpha[t] = x[1 + na + t]
    if use_z:
        par[DELTA] = x[oz]
    sd = math.sqrt(nu_sq)
    for j in range(p):
        if gamma[j] == 0:
            bstar[j] = sd * np.random.standard_normal()
    compute_mu(Xt, Ct, par, bstar, gamma, alpha, mu)


@njit(cache=True, nogil=True)
def update_gamma(Xt, xnorm2, V, Z, par, bstar, gamma, omega, eta, indptr, indices, weights, mu):
    """Systematic scan over gamma_j with beta*_j held fixed."""
    n = V.shape[0]
    p = Xt.shape[0]
    d = par[DELTA]
    inv2s2 = 0.5 / par[SIGMA_SQ]
    e = np.empty(n)
    for i in range(n):
        e[i] = V[i] - mu[i] - d * Z[i]
    h = np.zeros(p)
    for j in range(p):
        if gamma[j] == 1:
            for q in range(indptr[j], indptr[j + 1]):
                h[indices[q]] += weights[q]
    for j in range(p):
        b = bstar[j]
        xe = 0.0
        for i in range(n):
            xe += Xt[j, i] * e[i]
        xx = xnorm2[j]
        if gamma[j] == 1:
            xe += b * xx  # residual with predictor j removed
        llr = (2.0 * b * xe - b * b * xx) * inv2s2
        logit = omega + 2.0 * eta * h[j] + llr
        if logit >= 0:
            prob = 1.0 / (1.0 + math.exp(-logit))
        else:
            ex = math.exp(logit)
            prob = ex / (1.0 + ex)
        new = 1 if np.random.random() < prob else 0
        if new != gamma[j]:
            sign = 1.0 if new == 1 else -1.0
            for i in range(n):
                step = sign * b * Xt[j, i]
                e[i] -= step
                mu[i] += step
            for q in range(indptr[j], indptr[j + 1]):
                h[indices[q]] += sign * weights[q]
            gamma[j] = new


@njit(cache=True, nogil=True)
def update_sigma_sq(V, Z, mu, par, xi0, sigma0_sq):
    n = V.shape[0]
    d = par[DELTA]
    ssr = 0.0
    for i in range(n):
        r = V[i] - mu[i] - d * Z[i]
        ssr += r * r
    shape = 0.5 * (xi0 + n)
    rate = 0.5 * (xi0 * sigma0_sq + ssr)
    par[SIGMA_SQ] = rate / np.random.gamma(shape, 1.0)


@njit(cache=True, nogil=True)
def update_rho(U, par, rho0, rho1):
    n = U.shape[0]
    su = 0
    for i in range(n):
        su += U[i]
    par[RHO] = np.random.beta(rho0 + su, rho1 + n - su)


@njit(cache=True, nogil=True)
def _bad(par, arr):
    for k in range(par.shape[0]):
        if not math.isfinite(par[k]):
            return True
    acc = 0.0
    for k in range(arr.shape[0]):
        acc += arr[k]
    return not math.isfinite(acc)


@njit(cache=True, nogil=True)
def run(y, w, psi, Xt, Ct, XtX, XtC, CtC, Xsum, Csum, xnorm2,
        nu0_sq, nu_sq, nud_sq, lam, xi0, sigma0_sq, rho0, rho1,
        omega, eta, indptr, indices, weights, fix_delta, fix_rho,
        par, bstar, gamma, alpha, V, U, Z,
        iterations, burn_in, thin, seed_value, reseed,
        out_par, out_bstar, out_gamma, out_alpha, out_V, out_U, out_Z):
    """Run the sampler; returns (0, 0) or (iteration, component) on a non-finite state.

    Update order per iteration: Z, (V, U), coefficient block, gamma sweep,
    sigma_sq, rho.
    """
    if reseed:
        np.random.seed(seed_value)
    n = V.shape[0]
    mu = np.empty(n)
    compute_mu(Xt, Ct, par, bstar, gamma, alpha, mu)
    store_latent = out_V.shape[0] > 0
    kept = 0
    for it in range(iterations):
        if not fix_delta:
            update_Z(V, mu, par, Z)
        else:
            for i in range(n):
                Z[i] = truncnorm_draw(0.0, 1.0, 0.0, np.inf)
        if _bad(par, Z):
            return it, 1
        update_VU(y, w, psi, mu, par, Z, V, U)
        if _bad(par, V):
            return it, 2
        update_coefficients(Xt, Ct, XtX, XtC, CtC, Xsum, Csum, V, Z, par, bstar, gamma, alpha,
                            nu0_sq, nu_sq, nud_sq, lam, fix_delta, mu)
        if _bad(par, bstar) or _bad(par, alpha):
            return it, 3
        update_gamma(Xt, xnorm2, V, Z, par, bstar, gamma, omega, eta, indptr, indices, weights, mu)
        if _bad(par, mu):
            return it, 4
        update_sigma_sq(V, Z, mu, par, xi0, sigma0_sq)
        if _bad(par, mu) or par[SIGMA_SQ] <= 0.0:
            return it, 5
        if not fix_rho:
            update_rho(U, par, rho0, rho1)
            if _bad(par, mu):
                return it, 6
        if it >= burn_in and (it - burn_in + 1) % thin == 0 and kept < out_par.shape[0]:
            out_par[kept] = par
            out_bstar[kept] = bstar
            out_gamma[kept] = gamma
            out_alpha[kept] = alpha
            if store_latent:
                out_V[kept] = V
                out_U[kept] = U
                out_Z[kept] = Z
            kept += 1
    return 0, 0
