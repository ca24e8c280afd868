"""Synthetic count-field generators and forward simulation from the model.

Three generators:

* a copula-transformed skew-Gaussian Poisson field: z = sigma1 |w1| + sigma2 w2
  with w1, w2 independent unit-variance Gaussian fields (exponential
  correlation), mapped through the skew-normal marginal cdf and the Poisson
  quantile so every site has an exactly Poisson marginal;
* a Poisson random field with a log-linear trend plus a Gaussian process in
  the log mean (spatial GLMM style), used as a mismatched data-generating
  process;
* forward simulation from the mixture model itself along a reference
  ordering (component draw, conditional copula draw, continued inverse).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import copulas, jointpmf, marginals
from .errors import NumericalError

__all__ = [
    "SkewFieldConfig",
    "SglmmConfig",
    "SimulatedField",
    "unit_grid",
    "gp_sample",
    "skew_marginal_cdf",
    "skew_field_counts",
    "sglmm_counts",
    "nnmp_forward_sample",
]

GP_SITE_CAP = 3000
_JITTERS = (0.0, 1e-10, 1e-8, 1e-6)


@dataclass
class SkewFieldConfig:
    sigma1: float
    sigma2: float = 1.0
    gp_range: float = 0.1
    lam0: float = 5.0
    grid: int = 120
    n_sites: int = 1000
    seed: int = 0

    def __post_init__(self):
        if not (self.sigma2 > 0 and self.gp_range > 0 and self.lam0 > 0):
            raise ValueError("sigma2, gp_range and lam0 must be positive")


@dataclass
class SglmmConfig:
    beta: tuple = (1.5, 1.0, 2.0)
    gp_var: float = 0.2
    gp_range: float = 1.0 / 12.0
    grid: int = 120
    n_sites: int = 1000
    seed: int = 0

    def __post_init__(self):
        if not (self.gp_var >= 0 and self.gp_range > 0):
            raise ValueError("gp_var must be nonnegative and gp_range positive")


@dataclass
class SimulatedField:
    sites: np.ndarray
    counts: np.ndarray
    covariates: np.ndarray | None = None
    config: dict = field(default_factory=dict)


def unit_grid(resolution: int) -> np.ndarray:
    """Regular resolution x resolution grid on the unit square."""
    g = np.linspace(0.0, 1.0, resolution)
    xx, yy = np.meshgrid(g, g)
    return np.column_stack([xx.ravel(), yy.ravel()])


def _subsample(coords, n_sites, rng):
    if n_sites > len(coords):
        raise ValueError("cannot subsample more sites than the grid provides")
    idx = rng.choice(len(coords), size=n_sites, replace=False)
    return coords[np.sort(idx)]


def gp_sample(sites, range_, variance, rng):
    """One draw of a zero-mean Gaussian vector with exponential covariance.

    Dense Cholesky with escalating diagonal jitter; refuses more than
    ~3000 sites (sample only at the sites actually used).
    """
    sites = np.asarray(sites, dtype=float)
    n = len(sites)
    if n > GP_SITE_CAP:
        raise ValueError(
            f"dense GP sampling is capped at {GP_SITE_CAP} sites; "
            "subsample the grid first"
        )
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    z = rng.standard_normal(n)
    if n == 1:
        return np.sqrt(variance) * z
    dx = sites[:, 0][:, None] - sites[:, 0][None, :]
    dy = sites[:, 1][:, None] - sites[:, 1][None, :]
    K = variance * np.exp(-np.hypot(dx, dy) / range_)
    for jit in _JITTERS:
        try:
            L = np.linalg.cholesky(K + jit * variance * np.eye(n))
            return L @ z
        except np.linalg.LinAlgError:
            continue
    raise NumericalError("GP covariance factorization failed at maximum jitter")


def skew_marginal_cdf(z, sigma1, sigma2):
    """Marginal cdf of sigma1 |W1| + sigma2 W2 with W1, W2 iid standard normal.

    This is the skew-normal with scale sqrt(sigma1^2 + sigma2^2) and shape
    sigma1 / sigma2.
    """
    omega = np.hypot(sigma1, sigma2)
    return stats.skewnorm.cdf(np.asarray(z, dtype=float), sigma1 / sigma2,
                              loc=0.0, scale=omega)


def skew_field_counts(cfg: SkewFieldConfig) -> SimulatedField:
    """Poisson-marginal counts driven by a skew-Gaussian field."""
    rng = np.random.default_rng(cfg.seed)
    sites = _subsample(unit_grid(cfg.grid), cfg.n_sites, rng)
    w1 = gp_sample(sites, cfg.gp_range, 1.0, rng)
    w2 = gp_sample(sites, cfg.gp_range, 1.0, rng)
    z = cfg.sigma1 * np.abs(w1) + cfg.sigma2 * w2
    u = np.clip(skew_marginal_cdf(z, cfg.sigma1, cfg.sigma2), 1e-15, 1 - 1e-15)
    y = marginals.poisson_ppf(u, cfg.lam0).astype(np.int64)
    return SimulatedField(sites, y, None, {
        "kind": "skew",
        "sigma1": cfg.sigma1, "sigma2": cfg.sigma2, "gp_range": cfg.gp_range,
        "lam0": cfg.lam0, "grid": cfg.grid, "n_sites": cfg.n_sites,
        "seed": cfg.seed,
    })


def sglmm_counts(cfg: SglmmConfig) -> SimulatedField:
    """Poisson counts with a log-linear trend plus a GP in the log mean."""
    rng = np.random.default_rng(cfg.seed)
    sites = _subsample(unit_grid(cfg.grid), cfg.n_sites, rng)
    beta = np.asarray(cfg.beta, dtype=float)
    if cfg.gp_var > 0:
        z = gp_sample(sites, cfg.gp_range, cfg.gp_var, rng)
    else:
        z = np.zeros(len(sites))
    eta = beta[0] + beta[1] * sites[:, 0] + beta[2] * sites[:, 1] + z
    y = rng.poisson(np.exp(eta)).astype(np.int64)
    return SimulatedField(sites, y, sites.copy(), {
        "kind": "sglmm",
        "beta": list(cfg.beta), "gp_var": cfg.gp_var, "gp_range": cfg.gp_range,
        "grid": cfg.grid, "n_sites": cfg.n_sites, "seed": cfg.seed,
    })


def nnmp_forward_sample(ref, spec, marg, wparams, seed, n_rep=1):
    """Forward-simulate counts at the reference sites, vectorized over
    replicates.

    Site 0 draws from its continued marginal; every later site draws a
    component from its weight vector, then the continued value through the
    conditional copula given the chosen neighbor's continued value.
    Returns an ``(n_rep, n)`` integer array.
    """
    rng = np.random.default_rng(seed)
    n = ref.n
    ystar = np.empty((n_rep, n))
    wvecs = jointpmf.site_weight_vectors(ref, wparams)

    def cdf_i(i):
        return lambda k: marg.cdf(i, k)

    def pmf_i(i):
        return lambda k: marg._pmf_arr(i, k)

    def ppf_i(i):
        return lambda t: marg.quantile(i, t)

    u0 = rng.random(n_rep)
    ystar[:, 0] = marginals.continued_inverse_value(
        np.clip(u0, 1e-15, 1 - 1e-15), cdf_i(0), pmf_i(0), ppf_i(0)
    )
    for i in range(1, n):
        w = wvecs[i]
        cum = np.cumsum(w)
        cum[-1] = 1.0
        l = np.searchsorted(cum, rng.random(n_rep), side="right")
        l = np.minimum(l, len(w) - 1)
        idx = ref.neighbor_list(i)
        dists = ref.neighbor_distances(i)
        theta = copulas.link(spec, dists)
        theta_l = np.atleast_1d(theta)[l]
        j = idx[l]
        # continued cdf of the chosen neighbor's continued value
        u2 = np.empty(n_rep)
        for jj in np.unique(j):
            m = j == jj
            u2[m] = marginals.continued_cdf_value(
                ystar[m, jj], cdf_i(int(jj)), pmf_i(int(jj))
            )
        u2 = np.clip(u2, copulas.UEPS, 1.0 - copulas.UEPS)
        z = np.clip(rng.random(n_rep), 1e-15, 1 - 1e-15)
        t1 = copulas.conditional_sample(spec.family, theta_l, u2, z)
        t1 = np.clip(t1, 1e-15, 1 - 1e-15)
        ystar[:, i] = marginals.continued_inverse_value(
            t1, cdf_i(i), pmf_i(i), ppf_i(i)
        )
    return np.floor(ystar + 1.0).astype(np.int64)
