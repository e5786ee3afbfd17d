"""Distribution kernels used by the model and the sampler.

The skew-normal follows the Sahu-Dey-Branco construction: an error with
parameters (location, scale_sq, skew) is ``N(0, scale_sq) + skew * |N(0, 1)|``
shifted by ``location``.  In Azzalini's notation this is a skew-normal with
scale ``sqrt(scale_sq + skew**2)`` and shape ``skew / sqrt(scale_sq)``.

Random draws inside compiled code use numba's per-thread generator.  The
public samplers accept a :class:`numpy.random.Generator` and reseed the
compiled generator from it, so every call is reproducible from the caller's
generator state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import integrate, special

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
LOG_2 = math.log(2.0)
LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
SQRT_2PI = math.sqrt(2.0 * math.pi)


class DomainError(ValueError):
    """Raised for invalid distribution parameters or arguments."""


@dataclass(frozen=True)
class SkewNormalParams:
    location: float
    scale_sq: float
    skew: float

    def __post_init__(self):
        if not (math.isfinite(self.location) and math.isfinite(self.skew)):
            raise DomainError("skew-normal location and skew must be finite")
        if not (self.scale_sq > 0 and math.isfinite(self.scale_sq)):
            raise DomainError(f"scale_sq must be positive, got {self.scale_sq}")

    @property
    def omega(self) -> float:
        """Azzalini scale, ``sqrt(scale_sq + skew**2)``."""
        return math.sqrt(self.scale_sq + self.skew**2)

    @property
    def shape(self) -> float:
        """Azzalini shape, ``skew / sqrt(scale_sq)``."""
        return self.skew / math.sqrt(self.scale_sq)

    def mean(self) -> float:
        return self.location + self.skew * SQRT_2_OVER_PI

    def var(self) -> float:
        # constructive form: Var(delta |N(0,1)|) = delta^2 (1 - 2/pi)
        return self.scale_sq + self.skew**2 * (1.0 - 2.0 / math.pi)


@dataclass(frozen=True)
class TruncationWindow:
    lower: float = -math.inf
    upper: float = math.inf

    def __post_init__(self):
        if math.isnan(self.lower) or math.isnan(self.upper) or not self.lower < self.upper:
            raise DomainError(f"invalid truncation window ({self.lower}, {self.upper})")


def _check_y(y):
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise DomainError("skew-normal density requires finite arguments")
    return y


# ---------------------------------------------------------------------------
# skew-normal


def sn_logpdf(y, p: SkewNormalParams):
    y = _check_y(y)
    s2 = p.scale_sq + p.skew**2
    r = y - p.location
    out = (
        LOG_2
        - 0.5 * math.log(s2)
        - LOG_SQRT_2PI
        - 0.5 * r * r / s2
        + special.log_ndtr(p.skew * r / (math.sqrt(p.scale_sq) * math.sqrt(s2)))
    )
    return out if out.ndim else float(out)


def sn_pdf(y, p: SkewNormalParams):
    """Skew-normal density.

    ``f(y) = 2 / sqrt(s2) * phi((y - mu) / sqrt(s2)) * Phi(delta (y - mu) / (sigma sqrt(s2)))``
    with ``s2 = sigma^2 + delta^2``.
    """
    out = np.exp(sn_logpdf(y, p))
    return out if np.ndim(out) else float(out)


def sn_cdf(y: float, p: SkewNormalParams, tol: float = 1e-10) -> float:
    """Skew-normal CDF by adaptive quadrature over the half-normal mixing variable.

    ``F(y) = E_Z[Phi((y - mu - delta Z) / sigma)]`` with ``Z ~ |N(0, 1)|``.
    """
    if math.isnan(y):
        raise DomainError("skew-normal CDF requires a non-NaN argument")
    if y == math.inf:
        return 1.0
    if y == -math.inf:
        return 0.0
    sigma = math.sqrt(p.scale_sq)
    r = y - p.location
    if p.skew == 0.0:
        return float(special.ndtr(r / sigma))

    def integrand(z):
        return 2.0 * math.exp(-0.5 * z * z) / SQRT_2PI * special.ndtr((r - p.skew * z) / sigma)

    # the Phi factor steps at z0 = r / delta; pass it as a breakpoint.  The
    # half-normal weight is below 1e-340 beyond z = 40.
    z0 = r / p.skew
    points = [z0] if 0.0 < z0 < 40.0 else None
    total, _ = integrate.quad(integrand, 0.0, 40.0, points=points, epsabs=tol, epsrel=tol,
                              limit=200)
    return float(min(max(total, 0.0), 1.0))


def sn_logcdf_vec(y, location, scale_sq, skew):
    """Vectorized log skew-normal CDF through Owen's T function.

    Used on hot paths (per-draw likelihoods); :func:`sn_cdf` is the
    quadrature reference it is tested against.
    """
    y, location, scale_sq, skew = np.broadcast_arrays(
        np.asarray(y, float), np.asarray(location, float),
        np.asarray(scale_sq, float), np.asarray(skew, float),
    )
    shape = y.shape
    y, location, scale_sq, skew = (np.ravel(v) for v in (y, location, scale_sq, skew))
    omega = np.sqrt(scale_sq + skew**2)
    h = (y - location) / omega
    a = skew / np.sqrt(scale_sq)
    cdf = special.ndtr(h) - 2.0 * special.owens_t(h, a)
    with np.errstate(divide="ignore"):
        out = np.log(np.clip(cdf, 0.0, 1.0))
    # symmetric case has an exact log-domain form
    sym = skew == 0
    out[sym] = special.log_ndtr(h[sym])
    # deep left tail: Phi(h) - 2T cancels catastrophically, use rescaled quadrature
    for k in np.flatnonzero(~sym & (cdf < 1e-12)):
        out[k] = _sn_logcdf_tail(y[k], location[k], scale_sq[k], skew[k])
    return out.reshape(shape) if shape else float(out[0])


def _sn_logcdf_tail(y, location, scale_sq, skew):
    # log E_Z[Phi((r - delta Z)/sigma)] by quadrature of the integrand rescaled by its peak
    sigma = math.sqrt(scale_sq)
    r = y - location

    def logf(z):
        return -0.5 * z * z + special.log_ndtr((r - skew * z) / sigma)

    grid = np.linspace(0.0, 40.0, 4001)
    vals = logf(grid)
    k = int(np.argmax(vals))
    peak = float(vals[k])
    if not math.isfinite(peak):
        return -math.inf
    zpk = float(grid[k])

    def integrand(z):
        return math.exp(logf(z) - peak)

    pts = [0.0] + ([zpk] if zpk > 0 else []) + [40.0]
    val = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        part, _ = integrate.quad(integrand, lo, hi, epsabs=0.0, epsrel=1e-10, limit=200)
        val += part
    return float(peak + math.log(2.0 * val / SQRT_2PI)) if val > 0 else -math.inf


def sn_sample(p: SkewNormalParams, rng: np.random.Generator, size=None):
    """Constructive draw ``location + N(0, scale_sq) + skew * |N(0, 1)|``."""
    zeta = rng.normal(0.0, math.sqrt(p.scale_sq), size=size)
    z = np.abs(rng.standard_normal(size=size))
    return p.location + zeta + p.skew * z


# ---------------------------------------------------------------------------
# truncated normal


@njit(cache=True)
def _seed(seed):
    np.random.seed(seed)


def reseed_from(rng: np.random.Generator) -> None:
    """Seed numba's generator from a numpy Generator."""
    _seed(int(rng.integers(0, 2**32 - 1)))


@njit(cache=True)
def _tn_onesided(a, b):
    # standardized draw on (a, b) with a >= 0
    lam = 0.5 * (a + math.sqrt(a * a + 4.0))
    # Robert (1995): uniform proposal wins on narrow windows
    width_cut = 2.0 * math.sqrt(math.e) / (a + math.sqrt(a * a + 4.0)) * math.exp(
        0.25 * (a * a - a * math.sqrt(a * a + 4.0)))
    if b - a < width_cut:
        while True:
            x = a + (b - a) * np.random.random()
            if x <= a or x >= b:
                continue
            if np.random.random() <= math.exp(0.5 * (a * a - x * x)):
                return x
    while True:
        x = a + np.random.exponential(1.0) / lam
        if x <= a or x >= b:
            continue
        d = x - lam
        if np.random.random() <= math.exp(-0.5 * d * d):
            return x


@njit(cache=True)
def truncnorm_std(a, b):
    """Standard normal restricted to the open interval (a, b)."""
    if a >= 0.0:
        return _tn_onesided(a, b)
    if b <= 0.0:
        return -_tn_onesided(-b, -a)
    if b - a >= SQRT_2PI:
        while True:
            x = np.random.standard_normal()
            if a < x < b:
                return x
    while True:
        x = a + (b - a) * np.random.random()
        if x <= a or x >= b:
            continue
        if np.random.random() <= math.exp(-0.5 * x * x):
            return x


@njit(cache=True)
def truncnorm_draw(mean, sd, lower, upper):
    """N(mean, sd^2) restricted to (lower, upper); infinite bounds allowed.

    Non-finite ``mean`` or ``sd`` returns NaN instead of entering a rejection
    loop that can never accept, so callers' non-finite guards can fire.
    """
    if not (math.isfinite(mean) and math.isfinite(sd) and sd > 0.0):
        return np.nan
    a = (lower - mean) / sd
    b = (upper - mean) / sd
    x = mean + sd * truncnorm_std(a, b)
    # guard against rounding pushing the rescaled draw onto a bound
    if x <= lower:
        x = np.nextafter(lower, np.inf)
    elif x >= upper:
        x = np.nextafter(upper, -np.inf)
    return x


@njit(cache=True)
def _truncnorm_many(mean, sd, lower, upper, out):
    for k in range(out.shape[0]):
        out[k] = truncnorm_draw(mean, sd, lower, upper)


def truncnorm_sample(mean: float, var: float, window: TruncationWindow,
                     rng: np.random.Generator, size=None):
    """Draw from N(mean, var) truncated to ``window``.

    Tail windows use exponential-proposal rejection, so windows many standard
    deviations from the mean are sampled without loss of validity.
    """
    if not var > 0:
        raise DomainError(f"variance must be positive, got {var}")
    if not math.isfinite(mean):
        raise DomainError("mean must be finite")
    reseed_from(rng)
    n = 1 if size is None else int(np.prod(size))
    out = np.empty(n)
    _truncnorm_many(float(mean), math.sqrt(var), float(window.lower), float(window.upper), out)
    if size is None:
        return float(out[0])
    return out.reshape(size)


def truncnorm_moments(mean: float, var: float, window: TruncationWindow):
    """Analytic mean and variance of a truncated normal."""
    sd = math.sqrt(var)
    a = (window.lower - mean) / sd
    b = (window.upper - mean) / sd
    sign = 1.0
    if a > 0.0:
        # mirror an upper-tail window so the normalizer is a difference of
        # small CDF values rather than of values near one
        a, b, sign = -b, -a, -1.0
    dist = special.ndtr(b) - special.ndtr(a)
    pa = 0.0 if math.isinf(a) else math.exp(-0.5 * a * a) / SQRT_2PI
    pb = 0.0 if math.isinf(b) else math.exp(-0.5 * b * b) / SQRT_2PI
    ta = 0.0 if math.isinf(a) else a * pa
    tb = 0.0 if math.isinf(b) else b * pb
    m = mean + sign * sd * (pa - pb) / dist
    v = var * (1.0 + (ta - tb) / dist - ((pa - pb) / dist) ** 2)
    return m, v


# ---------------------------------------------------------------------------
# conjugate-family samplers


def invgamma_sample(shape: float, rate: float, rng: np.random.Generator, size=None):
    if not (shape > 0 and rate > 0):
        raise DomainError("inverse-gamma needs positive shape and rate")
    return rate / rng.gamma(shape, 1.0, size=size)


def beta_sample(a: float, b: float, rng: np.random.Generator, size=None):
    if not (a > 0 and b > 0):
        raise DomainError("beta needs positive parameters")
    return rng.beta(a, b, size=size)


def bernoulli_sample(prob: float, rng: np.random.Generator, size=None):
    if not 0.0 <= prob <= 1.0:
        raise DomainError(f"bernoulli probability outside [0, 1]: {prob}")
    return (rng.random(size=size) < prob).astype(np.int8) if size is not None else int(rng.random() < prob)


def halfnormal_logpdf(z):
    z = np.asarray(z, float)
    with np.errstate(divide="ignore"):
        return np.where(z > 0, LOG_2 - LOG_SQRT_2PI - 0.5 * z * z, -np.inf)
