"""Special functions used by the closed-form secrecy and energy-chain expressions.

Everything here is integer-order and real-argument only.  Functions accept
numpy arrays for the continuous arguments where that is cheap to support,
because the transition-matrix builder evaluates Rician CDFs on a whole grid
of energy levels at once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EULER_GAMMA = 0.57721566490153286060651209008240243
_FPMIN = 1e-300


class SpecialFunctionError(ArithmeticError):
    """Base class for failures inside the special-function kernel."""


class ConvergenceError(SpecialFunctionError):
    pass


class DomainError(SpecialFunctionError, ValueError):
    pass


@dataclass(frozen=True)
class Tolerance:
    abs_tol: float = 1e-12
    max_terms: int = 10_000

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise ValueError("abs_tol must be positive")
        if self.max_terms < 1:
            raise ValueError("max_terms must be >= 1")


DEFAULT_TOL = Tolerance()


def _poisson_term(n, y):
    """e^{-y} y^n / n! evaluated in log space, elementwise in y."""
    y = np.asarray(y, dtype=float)
    if n == 0:
        return np.exp(-y)
    with np.errstate(divide="ignore"):
        logy = np.log(y)
    return np.exp(-y + n * logy - math.lgamma(n + 1))


def _upper_gamma_sum(n, y):
    # e^{-y} sum_{k<n} y^k/k!; all terms positive so this is relatively accurate.
    total = np.zeros_like(y)
    for k in range(n):
        total = total + _poisson_term(k, y)
    return total


def _lower_gamma_series(n, y, tol):
    # e^{-y} y^n/n! * sum_j y^j / ((n+1)...(n+j)); ratio y/(n+j) < 1 for y < n+1.
    lead = _poisson_term(n, y)
    term = np.ones_like(y)
    acc = np.ones_like(y)
    for j in range(1, tol.max_terms + 1):
        term = term * y / (n + j)
        acc = acc + term
        if np.all(term <= 1e-17 * acc):
            return lead * acc
    raise ConvergenceError(f"lower gamma series for n={n} did not converge")


def _check_shape(n):
    if int(n) != n or n < 1:
        raise DomainError(f"gamma shape must be a positive integer, got {n!r}")
    return int(n)


def regularized_upper_gamma(n, x):
    """Gamma(n, x) / Gamma(n) for integer ``n >= 1`` and ``x >= 0``."""
    n = _check_shape(n)
    y = np.asarray(x, dtype=float)
    if np.any(y < 0) or np.any(np.isnan(y)):
        raise DomainError("regularized_upper_gamma needs x >= 0")
    out = np.clip(_upper_gamma_sum(n, y), 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def regularized_lower_gamma(n, x, tol: Tolerance = DEFAULT_TOL):
    """gamma(n, x) / Gamma(n), computed directly on the small side."""
    n = _check_shape(n)
    y = np.asarray(x, dtype=float)
    if np.any(y < 0) or np.any(np.isnan(y)):
        raise DomainError("regularized_lower_gamma needs x >= 0")
    y1 = np.atleast_1d(y)
    out = np.empty_like(y1)
    small = y1 < n
    if np.any(small):
        out[small] = _lower_gamma_series(n, y1[small], tol)
    if np.any(~small):
        out[~small] = 1.0 - _upper_gamma_sum(n, y1[~small])
    out = np.clip(out, 0.0, 1.0)
    return float(out[0]) if y.ndim == 0 else out.reshape(y.shape)


def _poisson_weights(lam, tol):
    """Poisson(lam) weights w_0..w_K with the neglected upper tail below tol."""
    weights = []
    log_lam = math.log(lam) if lam > 0 else -math.inf
    for k in range(tol.max_terms):
        if lam == 0:
            w = 1.0 if k == 0 else 0.0
        else:
            w = math.exp(-lam + k * log_lam - math.lgamma(k + 1))
        weights.append(w)
        if k + 2 > lam:
            # tail beyond k is bounded by a geometric series with ratio lam/(k+2)
            tail = w * lam / (k + 1) / (1.0 - lam / (k + 2))
            if tail < tol.abs_tol:
                return np.array(weights)
    raise ConvergenceError(
        f"Marcum Q series: Poisson weights (mean {lam:g}) need more than {tol.max_terms} terms"
    )


def _marcum_sides(m, a, b, tol):
    """Return (lower, upper) = (1 - Q_m(a, b), Q_m(a, b)), each summed directly.

    Q_m(a, b) is a Poisson(a^2/2) mixture of Gamma(m + k) upper tails at b^2/2.
    The upper tails are built by the stable upward recurrence, the lower tails
    by the stable downward one, so either side keeps relative accuracy.
    """
    w = _poisson_weights(0.5 * a * a, tol)
    y = 0.5 * np.asarray(b, dtype=float) ** 2
    top = m + len(w) - 1

    upper_k = _upper_gamma_sum(m, y)
    upper = w[0] * upper_k
    for k in range(1, len(w)):
        upper_k = upper_k + _poisson_term(m + k - 1, y)
        upper = upper + w[k] * upper_k

    lower_k = np.atleast_1d(regularized_lower_gamma(top, y, tol)).reshape(y.shape)
    lower = w[-1] * lower_k
    for k in range(len(w) - 2, -1, -1):
        lower_k = lower_k + _poisson_term(m + k, y)
        lower = lower + w[k] * lower_k
    return lower, upper


def _check_marcum_args(m, a, b):
    if int(m) != m or m < 1:
        raise DomainError(f"Marcum Q order must be a positive integer, got {m!r}")
    if a < 0 or math.isnan(a):
        raise DomainError("Marcum Q needs a >= 0")
    b = np.asarray(b, dtype=float)
    if np.any(b < 0) or np.any(np.isnan(b)):
        raise DomainError("Marcum Q needs b >= 0")
    return int(m), float(a), b


def marcum_q(m, a, b, tol: Tolerance = DEFAULT_TOL):
    """Generalized Marcum Q-function Q_m(a, b).

    Equals the probability that a noncentral chi-square variable with 2m
    degrees of freedom and noncentrality a^2 exceeds b^2.  ``b`` may be an
    array.
    """
    m, a, b = _check_marcum_args(m, a, b)
    lower, upper = _marcum_sides(m, a, b, tol)
    out = np.where(upper <= 0.5, upper, 1.0 - lower)
    out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def marcum_q_complement(m, a, b, tol: Tolerance = DEFAULT_TOL):
    """1 - Q_m(a, b), accurate when it is tiny (deep lower tail)."""
    m, a, b = _check_marcum_args(m, a, b)
    lower, upper = _marcum_sides(m, a, b, tol)
    out = np.where(lower <= 0.5, lower, 1.0 - upper)
    out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


# -- exponential integrals -------------------------------------------------

def _e1_series(t):
    # E1(t) = -gamma - ln t - sum_{k>=1} (-t)^k / (k k!), used for 0 < t <= 1
    s = 0.0
    term = 1.0
    for k in range(1, 60):
        term *= -t / k
        s += term / k
        if abs(term) < 1e-18:
            break
    return -EULER_GAMMA - math.log(t) - s


def scaled_expn(n, t, tol: Tolerance = DEFAULT_TOL):
    """e^t E_n(t) for integer n >= 1 and t > 1 (continued fraction, modified Lentz)."""
    if t <= 1.0:
        raise DomainError("scaled_expn continued fraction needs t > 1")
    nm1 = n - 1
    b = t + n
    c = 1.0 / _FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, tol.max_terms + 1):
        an = -i * (nm1 + i)
        b += 2.0
        d = 1.0 / (an * d + b)
        c = b + an / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            return h
    raise ConvergenceError(f"E_{n}({t}) continued fraction did not converge")


def scaled_ei_neg(y, tol: Tolerance = DEFAULT_TOL):
    """e^y Ei(-y) for y > 0, without forming e^y on its own."""
    if not y > 0:
        raise DomainError("scaled_ei_neg needs y > 0")
    if y <= 1.0:
        return -math.exp(y) * _e1_series(y)
    return -scaled_expn(1, y, tol)


def exp_integral_ei(x, tol: Tolerance = DEFAULT_TOL):
    """Ei(x) for strictly negative x."""
    x = float(x)
    if math.isnan(x) or x >= 0:
        raise DomainError(f"exp_integral_ei is only defined here for x < 0, got {x}")
    t = -x
    if t < 1e-300:
        raise OverflowError("Ei(x) diverges as x -> 0-")
    if t <= 1.0:
        return -_e1_series(t)
    # e^{-t} underflows past t ~ 745; Ei(x) is then indistinguishable from -0
    return -math.exp(-t) * scaled_expn(1, t, tol)
