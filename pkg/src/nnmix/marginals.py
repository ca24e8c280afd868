"""Discrete marginal families and their continued (jittered) versions.

A count Y with cdf Q and pmf g is continued by an independent uniform O on
(0,1): Y* = Y - O.  The continued variable has the piecewise-linear cdf

    Q*(y*) = Q(floor(y*)) + (y* - floor(y*)) * g(floor(y*) + 1)

and piecewise-constant density g*(y*) = g(floor(y* + 1)).  The integer part
is taken as floor so the formulas stay valid on (-1, 0), where Y = 0.

Two families are provided: Poisson with a constant rate, and negative
binomial with a log-linear regression mean mu(v) = exp(x(v)' beta) and
dispersion r, pmf  C(y+r-1, y) p^r (1-p)^y  with p = r / (mu + r).
"""

from __future__ import annotations

import numpy as np
from scipy import special

__all__ = [
    "PoissonMarginal",
    "NegBinomMarginal",
    "poisson_logpmf",
    "poisson_cdf",
    "poisson_ppf",
    "nb_logpmf",
    "nb_cdf",
    "nb_ppf",
    "continued_cdf_value",
    "continued_inverse_value",
]


# ---------------------------------------------------------------------------
# vectorized family primitives (used by the samplers and prediction paths)

def poisson_logpmf(y, lam):
    y = np.asarray(y, dtype=float)
    return y * np.log(lam) - lam - special.gammaln(y + 1.0)


def poisson_cdf(k, lam):
    """P(Y <= k); exact 0 for k < 0."""
    k = np.asarray(k, dtype=float)
    out = np.where(k < 0, 0.0, special.pdtr(np.maximum(k, 0), lam))
    return out if out.ndim else float(out)


def poisson_ppf(t, lam):
    """Smallest k >= 0 with cdf(k) >= t, vectorized, with boundary repair."""
    t = np.asarray(t, dtype=float)
    k = np.asarray(
        np.where(t <= 0, 0.0, special.pdtrik(np.clip(t, 1e-300, 1 - 1e-16), lam))
    )
    k = np.ceil(k - 1e-9)
    k = np.maximum(k, 0.0)
    # repair off-by-one from the continuous inverse
    for _ in range(3):
        too_high = (k > 0) & (poisson_cdf(k - 1, lam) >= t)
        too_low = poisson_cdf(k, lam) < t
        if not (np.any(too_high) or np.any(too_low)):
            break
        k = k - too_high + too_low
    return k if k.ndim else float(k)


def nb_logpmf(y, mu, r):
    y = np.asarray(y, dtype=float)
    p = r / (mu + r)
    return (
        special.gammaln(y + r)
        - special.gammaln(r)
        - special.gammaln(y + 1.0)
        + r * np.log(p)
        + y * np.log1p(-p)
    )


def nb_cdf(k, mu, r):
    """P(Y <= k) = I_p(r, k+1) with p = r/(mu+r)."""
    k = np.asarray(k, dtype=float)
    p = r / (mu + r)
    kk = np.maximum(k, 0.0)
    out = np.where(k < 0, 0.0, special.betainc(r, kk + 1.0, p))
    return out if out.ndim else float(out)


def nb_ppf(t, mu, r):
    t = np.asarray(t, dtype=float)
    mu_b = np.broadcast_to(np.asarray(mu, dtype=float), t.shape)
    r_b = np.broadcast_to(np.asarray(r, dtype=float), t.shape)
    # crude gamma-mixture start, then repair
    var = mu_b + mu_b * mu_b / r_b
    k = np.maximum(np.floor(mu_b + np.sqrt(var) * special.ndtri(np.clip(t, 1e-15, 1 - 1e-15))), 0.0)
    for _ in range(200):
        too_high = (k > 0) & (nb_cdf(k - 1, mu_b, r_b) >= t)
        too_low = nb_cdf(k, mu_b, r_b) < t
        if not (np.any(too_high) or np.any(too_low)):
            break
        k = k - too_high + too_low
    return k if k.ndim else float(k)


def continued_cdf_value(ystar, cdf, pmf):
    """Q*(y*) from the marginal cdf/pmf callables (vectorized)."""
    ystar = np.asarray(ystar, dtype=float)
    if np.any(ystar <= -1.0):
        raise ValueError("continued value must exceed -1")
    m = np.floor(ystar)
    out = cdf(m) + (ystar - m) * pmf(m + 1.0)
    return out if out.ndim else float(out)


def continued_inverse_value(t, cdf, pmf, ppf):
    """The y* with Q*(y*) = t, via the quantile-and-interpolate formula."""
    t = np.asarray(t, dtype=float)
    if np.any((t <= 0) | (t >= 1)):
        raise ValueError("t must be in the open (0,1)")
    m = ppf(t)
    qm1 = cdf(m - 1.0)
    g = pmf(m)
    out = (m - 1.0) + (t - qm1) / g
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# site-indexed marginal models

class _CountMarginal:
    """Shared continued-cdf machinery; subclasses bind the family at a site."""

    def pmf(self, site, y):
        return float(np.exp(self.logpmf(site, y)))

    def continued_cdf(self, site, ystar):
        return continued_cdf_value(
            ystar, lambda k: self.cdf(site, k), lambda k: self._pmf_arr(site, k)
        )

    def continued_pmf(self, site, ystar):
        ystar = np.asarray(ystar, dtype=float)
        if np.any(ystar <= -1.0):
            raise ValueError("continued value must exceed -1")
        out = self._pmf_arr(site, np.floor(ystar + 1.0))
        return out if out.ndim else float(out)

    def continued_inverse(self, site, t):
        return continued_inverse_value(
            t,
            lambda k: self.cdf(site, k),
            lambda k: self._pmf_arr(site, k),
            lambda q: self.quantile(site, q),
        )

    def support_truncation(self, site, tol=1e-12):
        """Smallest M with 1 - Q(M) < tol, for summation oracles."""
        m = int(self.quantile(site, 1.0 - tol))
        while 1.0 - self.cdf(site, m) >= tol:
            m += 1
        return m


class PoissonMarginal(_CountMarginal):
    """Stationary Poisson marginal with rate lam at every site."""

    family = "poisson"

    def __init__(self, lam):
        if not (lam > 0 and np.isfinite(lam)):
            raise ValueError("Poisson rate must be positive")
        self.lam = float(lam)

    def logpmf(self, site, y):
        out = poisson_logpmf(y, self.lam)
        return out if np.ndim(out) else float(out)

    def _pmf_arr(self, site, y):
        return np.exp(poisson_logpmf(y, self.lam))

    def cdf(self, site, k):
        return poisson_cdf(k, self.lam)

    def quantile(self, site, t):
        return poisson_ppf(t, self.lam)

    def mean(self, site):
        return self.lam


class NegBinomMarginal(_CountMarginal):
    """Negative binomial marginals with log-link regression means.

    Parameters
    ----------
    beta : (p,) array
        Regression coefficients (intercept included in the design).
    r : float
        Dispersion; the variance at a site is mu + mu^2 / r.
    X : (n, p) array
        Per-site covariate design.
    """

    family = "negbinom"

    def __init__(self, beta, r, X):
        self.beta = np.asarray(beta, dtype=float)
        self.X = np.asarray(X, dtype=float)
        if self.X.ndim != 2 or self.X.shape[1] != self.beta.shape[0]:
            raise ValueError("design and coefficient dimensions disagree")
        if not (r > 0 and np.isfinite(r)):
            raise ValueError("dispersion r must be positive")
        self.r = float(r)
        self.mu = np.exp(self.X @ self.beta)
        if not np.all(np.isfinite(self.mu)):
            raise ValueError("non-finite marginal means exp(x'beta)")

    def logpmf(self, site, y):
        out = nb_logpmf(y, self.mu[site], self.r)
        return out if np.ndim(out) else float(out)

    def _pmf_arr(self, site, y):
        return np.exp(nb_logpmf(y, self.mu[site], self.r))

    def cdf(self, site, k):
        return nb_cdf(k, self.mu[site], self.r)

    def quantile(self, site, t):
        return nb_ppf(t, self.mu[site], self.r)

    def mean(self, site):
        return float(self.mu[site])
