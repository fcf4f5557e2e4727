"""Statistical special functions shared by the whole certification engine.

Everything here is a pure function of its arguments.  Probabilities are
validated at construction so that out-of-range values fail loudly at the
boundary instead of corrupting a certificate three calls later.

Conventions:

* ``normal_cdf`` / ``normal_quantile`` are the standard normal CDF and its
  inverse.  The quantile is a rational-polynomial initial estimate refined
  by a Halley step against ``normal_cdf``, so the round-trip error is far
  below certificate reporting precision.
* ``clopper_pearson_lower`` is the exact one-sided binomial lower confidence
  limit, found by bisection on the binomial tail accumulated in log space.
* ``gaussian_ball_mass`` is the probability an isotropic Gaussian sample
  lands inside an L2 ball, i.e. the chi-distribution CDF of the scaled
  radius; its inverse is a bracketed bisection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import erfc, gammainc, gammaln, logsumexp

__all__ = [
    "Probability",
    "ConfidenceLevel",
    "BallMassQuery",
    "normal_cdf",
    "normal_quantile",
    "clopper_pearson_lower",
    "gaussian_ball_mass",
    "gaussian_ball_mass_inv",
]

_SQRT2 = math.sqrt(2.0)
_SQRT_2PI = math.sqrt(2.0 * math.pi)


class Probability(float):
    """A float constrained to [0, 1]."""

    __slots__ = ()

    def __new__(cls, value: float) -> "Probability":
        v = float(value)
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"probability must be in [0, 1], got {value!r}")
        return super().__new__(cls, v)


class ConfidenceLevel(float):
    """A confidence tail mass alpha, constrained to the open interval (0, 1)."""

    __slots__ = ()

    def __new__(cls, alpha: float) -> "ConfidenceLevel":
        a = float(alpha)
        if not 0.0 < a < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {alpha!r}")
        return super().__new__(cls, a)


@dataclass(frozen=True)
class BallMassQuery:
    """Parameters of an L2-ball mass query against N(0, sigma^2 I_dim)."""

    radius: float
    dim: int
    sigma: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.radius) and self.radius >= 0.0):
            raise ValueError(f"radius must be finite and >= 0, got {self.radius!r}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim!r}")
        if not (math.isfinite(self.sigma) and self.sigma > 0.0):
            raise ValueError(f"sigma must be finite and > 0, got {self.sigma!r}")


def normal_cdf(z):
    """Standard normal CDF.

    Accepts a scalar (returns :class:`Probability`) or an ndarray
    (returns an ndarray).  Non-finite input is rejected.
    """
    if isinstance(z, np.ndarray):
        if not np.all(np.isfinite(z)):
            raise ValueError("normal_cdf requires finite input")
        return 0.5 * erfc(-z / _SQRT2)
    zf = float(z)
    if not math.isfinite(zf):
        raise ValueError(f"normal_cdf requires finite input, got {z!r}")
    return Probability(0.5 * math.erfc(-zf / _SQRT2))


# Rational-polynomial inverse normal CDF (Acklam's coefficients), used as the
# initial estimate before Halley refinement.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _nq_estimate(p: np.ndarray) -> np.ndarray:
    a, b, c, d = _A, _B, _C, _D
    out = np.empty_like(p)

    low = p < _P_LOW
    high = p > 1.0 - _P_LOW
    mid = ~(low | high)

    if np.any(mid):
        q = p[mid] - 0.5
        r = q * q
        num = ((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]
        den = ((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0
        out[mid] = num * q / den

    def tail(q):
        num = ((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]
        den = (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
        return num / den

    if np.any(low):
        q = np.sqrt(-2.0 * np.log(p[low]))
        out[low] = tail(q)
    if np.any(high):
        q = np.sqrt(-2.0 * np.log(1.0 - p[high]))
        out[high] = -tail(q)
    return out


def _nq_array(p: np.ndarray) -> np.ndarray:
    x = _nq_estimate(p)
    # One Halley step against the CDF; skipped in the deep tail where
    # exp(x^2/2) would overflow (|x| > 37 means p is denormal-adjacent).
    safe = np.abs(x) < 37.0
    xs = x[safe]
    e = 0.5 * erfc(-xs / _SQRT2) - p[safe]
    u = e * _SQRT_2PI * np.exp(0.5 * xs * xs)
    x[safe] = xs - u / (1.0 + 0.5 * xs * u)
    return x


def _nq_scalar(p: float) -> float:
    a, b, c, d = _A, _B, _C, _D
    if _P_LOW <= p <= 1.0 - _P_LOW:
        q = p - 0.5
        r = q * q
        num = ((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]
        den = ((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0
        x = num * q / den
    else:
        tail_p = p if p < 0.5 else 1.0 - p
        q = math.sqrt(-2.0 * math.log(tail_p))
        num = ((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]
        den = (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
        x = num / den
        if p > 0.5:
            x = -x
    if abs(x) < 37.0:
        e = 0.5 * math.erfc(-x / _SQRT2) - p
        u = e * _SQRT_2PI * math.exp(0.5 * x * x)
        x -= u / (1.0 + 0.5 * x * u)
    return x


def normal_quantile(p):
    """Inverse standard normal CDF.

    Scalar input must lie strictly inside (0, 1); exact 0 or 1 raises so the
    caller decides whether clamping is statistically legitimate.  Array input
    is validated elementwise.
    """
    if isinstance(p, np.ndarray):
        if np.any(p <= 0.0) or np.any(p >= 1.0):
            raise ValueError("normal_quantile requires 0 < p < 1")
        return _nq_array(p.astype(float))
    pf = float(p)
    if not 0.0 < pf < 1.0:
        raise ValueError(f"normal_quantile requires 0 < p < 1, got {p!r}")
    return _nq_scalar(pf)


def _log_binom_tail_terms(k: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    # log C(n, i) for the shorter of the two tails around k
    if n - k + 1 <= k:
        i = np.arange(k, n + 1, dtype=float)
    else:
        i = np.arange(0, k, dtype=float)
    logc = gammaln(n + 1.0) - gammaln(i + 1.0) - gammaln(n - i + 1.0)
    return i, logc


@lru_cache(maxsize=4096)
def _cp_lower_cached(successes: int, trials: int, alpha: float) -> float:
    n, k = trials, successes
    i, logc = _log_binom_tail_terms(k, n)
    direct = n - k + 1 <= k  # True: terms are the upper tail itself

    def survival(p: float) -> float:
        # P[X >= k] for X ~ Binomial(n, p), accumulated in log space
        logp = math.log(p)
        log1mp = math.log1p(-p)
        s = logsumexp(logc + i * logp + (n - i) * log1mp)
        if direct:
            return math.exp(s)
        return -math.expm1(s) if s < 0.0 else 0.0

    lo, hi = 0.0, 1.0  # survival(0)=0 < alpha <= survival(1)=1 for k >= 1
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if survival(mid) < alpha:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-14:
            break
    return lo


def clopper_pearson_lower(successes: int, trials: int, alpha) -> Probability:
    """One-sided lower confidence limit for a binomial proportion.

    Returns the probability ``p`` at which observing at least ``successes``
    out of ``trials`` has tail mass ``alpha``, i.e. the exact one-sided
    Clopper-Pearson lower limit at confidence ``1 - alpha``.  Bisection runs
    on the exact binomial tail; the returned bracket endpoint is the
    conservative (lower) one.
    """
    a = ConfidenceLevel(alpha)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not 0 <= successes <= trials:
        raise ValueError(f"successes must be in [0, {trials}], got {successes}")
    if successes == 0:
        return Probability(0.0)
    return Probability(_cp_lower_cached(int(successes), int(trials), float(a)))


def gaussian_ball_mass(query: BallMassQuery) -> Probability:
    """Mass of N(0, sigma^2 I_dim) inside the L2 ball of the queried radius.

    Equals the regularized lower incomplete gamma P(dim/2, r^2 / (2 sigma^2)),
    the chi-distribution CDF of r/sigma with dim degrees of freedom.
    """
    x = (query.radius / query.sigma) ** 2 / 2.0
    return Probability(float(gammainc(query.dim / 2.0, x)))


def gaussian_ball_mass_inv(p, dim: int, sigma: float) -> float:
    """Radius whose Gaussian ball mass equals ``p``, by bracketed bisection.

    The upper bracket is grown geometrically until it encloses the target;
    bisection then runs to 1e-10 in probability (and a width criterion, so
    the radius itself is resolved even where the density is steep).
    """
    pf = float(p)
    if not 0.0 < pf < 1.0:
        raise ValueError(f"ball-mass inverse requires 0 < p < 1, got {p!r}")

    def mass(r: float) -> float:
        return gaussian_ball_mass(BallMassQuery(radius=r, dim=dim, sigma=sigma))

    lo = 0.0
    hi = sigma * (math.sqrt(dim) + 10.0)
    for _ in range(200):
        if mass(hi) >= pf:
            break
        hi *= 2.0
    else:
        raise ArithmeticError("bracket expansion failed")

    mid = 0.5 * (lo + hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        m = mass(mid)
        if abs(m - pf) <= 5e-11 and hi - lo <= 1e-10 * max(1.0, mid):
            break
        if m < pf:
            lo = mid
        else:
            hi = mid
    return mid
