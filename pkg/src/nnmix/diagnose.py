"""Model validation and predictive comparison.

Randomized quantile residuals: the standard-normal quantile of the continued
conditional cdf at each continued observation (the marginal cdf at the first
site).  Under a correctly specified model the residuals are iid standard
Gaussian.

Proper scoring rules on a holdout: RMSPE against the pooled predictive
median, empirical 95% interval coverage and width, the sample CRPS, the
energy score, and the variogram score of order one with unit weights.  CRPS
and ES use the all-pairs spread estimator, so ES at a single site reduces to
CRPS exactly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from . import copulas, mcmc, weights

__all__ = [
    "ScoreReport",
    "quantile_residuals",
    "residual_matrix",
    "scores",
    "anderson_darling_normal",
]

_F_EPS = 1e-15


@dataclass
class ScoreReport:
    rmspe: float
    ci95_cover: float
    ci95_width: float
    crps: float
    es: float
    vs: float

    def to_dict(self):
        return {
            "rmspe": self.rmspe,
            "ci95_cover": self.ci95_cover,
            "ci95_width": self.ci95_width,
            "crps": self.crps,
            "es": self.es,
            "vs": self.vs,
        }


def quantile_residuals(state, y, ref, model, X=None):
    """Per-site randomized quantile residuals under one posterior state."""
    y = np.asarray(y, dtype=np.int64)
    n = ref.n
    params = mcmc._state_params(model, state)
    cdf_ym1, pmf_y, _ = mcmc.marginal_arrays(model, y, X, params)
    u = np.clip(cdf_ym1 + (1.0 - state.o) * pmf_y, copulas.UEPS, 1 - copulas.UEPS)
    res = np.empty(n)
    res[0] = special.ndtri(np.clip(u[0], _F_EPS, 1 - _F_EPS))
    if n == 1:
        return res
    rstar = weights.cutoff_logits_grid(ref.neigh_dist, ref.nneigh, state.zeta)
    s = ref.sites
    mu = state.gamma[0] + state.gamma[1] * s[:, 0] + state.gamma[2] * s[:, 1]
    wgrid = weights.weight_grid(rstar, ref.nneigh, mu, float(np.sqrt(state.kappa2)))
    spec = copulas.CopulaSpec(model.copula, state.phi)
    theta = mcmc.theta_grid(spec, ref.neigh_dist)
    j = ref.neigh_idx[1:]
    cc = copulas.conditional_cdf(
        model.copula, theta[1:], u[1:, None], np.clip(u[j], copulas.UEPS, 1 - copulas.UEPS)
    )
    F = np.sum(wgrid[1:] * cc, axis=1)
    if np.any((F <= 0.0) | (F >= 1.0)):
        warnings.warn("conditional cdf hit 0/1 numerically; clamping residuals")
    res[1:] = special.ndtri(np.clip(F, _F_EPS, 1 - _F_EPS))
    return res


def residual_matrix(posterior, y, ref, model, X=None, max_samples=None):
    """Residuals per posterior sample: an (S, n) matrix."""
    S = posterior.n_samples
    take = range(S) if max_samples is None else range(0, S, max(S // max_samples, 1))
    rows = [
        quantile_residuals(posterior.state(k), y, ref, model, X=X) for k in take
    ]
    return np.asarray(rows)


def anderson_darling_normal(x):
    """Anderson-Darling normality statistic and its 5% critical value."""
    res = stats.anderson(np.asarray(x, dtype=float), dist="norm")
    crit5 = float(res.critical_values[list(res.significance_level).index(5.0)])
    return float(res.statistic), crit5


def _pairwise_mean_abs(col):
    """Mean |x_i - x_j| over all ordered pairs (including i == j)."""
    x = np.sort(col)
    d = len(x)
    k = np.arange(d)
    total = 2.0 * np.sum((2.0 * k - d + 1.0) * x)
    return total / (d * d)


def scores(y_test, draws) -> ScoreReport:
    """Score a predictive draw matrix (draws x sites) against observations."""
    y = np.asarray(y_test, dtype=float)
    X = np.asarray(draws, dtype=float)
    if X.ndim != 2 or X.shape[1] != y.shape[0]:
        raise ValueError("draw matrix must be (n_draws, n_sites) matching y")
    if len(X) < 2:
        raise ValueError("need at least two predictive draws")
    D, m = X.shape
    med = np.median(X, axis=0)
    rmspe = float(np.sqrt(np.mean((med - y) ** 2)))
    lo = np.quantile(X, 0.025, axis=0)
    hi = np.quantile(X, 0.975, axis=0)
    cover = float(np.mean((y >= lo) & (y <= hi)))
    width = float(np.mean(hi - lo))
    # CRPS, all-pairs estimator per site
    term1 = np.mean(np.abs(X - y[None, :]), axis=0)
    spread = np.array([_pairwise_mean_abs(X[:, jj]) for jj in range(m)])
    crps = float(np.mean(term1 - 0.5 * spread))
    # energy score over the site vector
    t1 = float(np.mean(np.sqrt(np.sum((X - y[None, :]) ** 2, axis=1))))
    norms = np.sum(X * X, axis=1)
    gram = X @ X.T
    d2 = np.maximum(norms[:, None] + norms[None, :] - 2.0 * gram, 0.0)
    t2 = float(np.mean(np.sqrt(d2)))
    es = t1 - 0.5 * t2
    # variogram score of order one, unit weights
    vs = 0.0
    for jj in range(m - 1):
        gaps_obs = np.abs(y[jj] - y[jj + 1:])
        gaps_pred = np.mean(np.abs(X[:, jj:jj + 1] - X[:, jj + 1:]), axis=0)
        vs += float(np.sum((gaps_obs - gaps_pred) ** 2))
    return ScoreReport(rmspe, cover, width, crps, es, float(vs))
