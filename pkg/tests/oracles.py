"""Independent reference computations used by the tests.

Nothing here calls the closed forms under test.  Moments of a clamped
Gaussian come from high-precision quadrature, key-rate roots from the
covariance-matrix oracle.
"""

from __future__ import annotations

import math

import mpmath as mp

mp.mp.dps = 40


def clamped_normal_moments(mu: float, sigma: float, alpha: float) -> tuple[float, float, float]:
    """Mean, variance and E[(Y - mu) clip(Y)] for Y ~ N(mu, sigma^2) clipped to [-alpha, alpha]."""
    mu, sigma, alpha = mp.mpf(mu), mp.mpf(sigma), mp.mpf(alpha)

    def pdf(y):
        return mp.npdf(y, mu, sigma)

    p_lo = mp.ncdf(-alpha, mu, sigma)
    p_hi = 1 - mp.ncdf(alpha, mu, sigma)
    pts = [-alpha, mu, alpha] if -alpha < mu < alpha else [-alpha, alpha]
    m1 = mp.quad(lambda y: y * pdf(y), pts) - alpha * p_lo + alpha * p_hi
    m2 = mp.quad(lambda y: y * y * pdf(y), pts) + alpha**2 * (p_lo + p_hi)
    # E[(Y - mu) clip(Y)] = sigma^2 P(-alpha < Y < alpha) (Stein's lemma)
    cross = sigma**2 * (1 - p_lo - p_hi)
    return float(m1), float(m2 - m1 * m1), float(cross)


def saturated_statistics(v_a: float, t: float, gain: float, var_lin: float, delta: float, alpha: float):
    """(cov, var) of (X_A, clip(Y)) where Y = (t g / sqrt 2) X_A + noise + delta.

    Cov(X_A, clip(Y)) = Cov(X_A, Y)/Var(Y) * E[(Y - EY) clip(Y)] for jointly
    Gaussian (X_A, Y).
    """
    _, var, cross = clamped_normal_moments(delta, math.sqrt(var_lin), alpha)
    cov_ay = t * gain / math.sqrt(2.0) * v_a
    return cov_ay / var_lin * cross, var
