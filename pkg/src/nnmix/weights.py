"""Mixture weights: kernel-driven cutoff points and logit-Gaussian increments.

For a site with neighbors at distances d_1..d_m, the cutoffs partition [0,1]
with increments proportional to the exponential kernel exp(-d_l / zeta).
The mixture weight of component l is the probability that a Gaussian with
site-dependent mean mu(v) = gamma0 + gamma1 v1 + gamma2 v2 and variance
kappa^2 falls between the logit-transformed cutoffs, with the endpoints sent
to -inf / +inf so the intervals partition the whole real line (which makes
the auxiliary-variable augmentation exact).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

__all__ = ["WeightParams", "CutoffVector", "cutoffs", "mixture_weights",
           "cutoff_logits_grid", "weight_grid", "site_mean"]


@dataclass(frozen=True)
class WeightParams:
    """Logit-Gaussian weight parameters: mean coefficients, variance, kernel range."""

    gamma: np.ndarray  # (3,)
    kappa2: float
    zeta: float

    def __post_init__(self):
        object.__setattr__(self, "gamma", np.asarray(self.gamma, dtype=float))
        if self.gamma.shape != (3,):
            raise ValueError("gamma must be a 3-vector")
        if not (self.kappa2 > 0 and self.zeta > 0):
            raise ValueError("kappa2 and zeta must be positive")


@dataclass(frozen=True)
class CutoffVector:
    """Cutoffs 0 = r_0 < ... < r_m = 1 and their logits with +-inf endpoints."""

    r: np.ndarray       # (m+1,)
    r_star: np.ndarray  # (m+1,), r_star[0] = -inf, r_star[m] = +inf


def cutoffs(site, neighbors, zeta: float) -> CutoffVector:
    """Cutoff points for one site from the exponential kernel exp(-d/zeta)."""
    site = np.asarray(site, dtype=float)
    neighbors = np.atleast_2d(np.asarray(neighbors, dtype=float))
    if len(neighbors) < 1:
        raise ValueError("need at least one neighbor")
    d = np.hypot(neighbors[:, 0] - site[0], neighbors[:, 1] - site[1])
    k = np.exp(-d / zeta)
    incr = k / k.sum()
    r = np.concatenate(([0.0], np.cumsum(incr)))
    r[-1] = 1.0
    r_star = np.full_like(r, np.nan)
    r_star[0] = -np.inf
    r_star[-1] = np.inf
    interior = r[1:-1]
    r_star[1:-1] = np.log(interior / (1.0 - interior))
    return CutoffVector(r, r_star)


def site_mean(params: WeightParams, site) -> float:
    site = np.asarray(site, dtype=float)
    g = params.gamma
    return float(g[0] + g[1] * site[0] + g[2] * site[1])


def mixture_weights(cut: CutoffVector, params: WeightParams, site) -> np.ndarray:
    """Simplex of weights: Gaussian interval probabilities between the logits."""
    mu = site_mean(params, site)
    kappa = np.sqrt(params.kappa2)
    z = (cut.r_star - mu) / kappa
    probs = special.ndtr(z)
    w = np.diff(probs)
    return np.maximum(w, 0.0)


# ---------------------------------------------------------------------------
# grid versions used by the sampler, residuals and prediction

def cutoff_logits_grid(neigh_dist, nneigh, zeta):
    """Logit cutoffs for every site at once.

    Parameters
    ----------
    neigh_dist : (n, L) array, +inf padded
    nneigh : (n,) int array of neighbor counts
    zeta : float

    Returns
    -------
    (n, L+1) array; row i holds -inf, the nneigh[i]-1 interior logits, +inf,
    then +inf padding.
    """
    n, L = neigh_dist.shape
    k = np.where(np.isfinite(neigh_dist), np.exp(-neigh_dist / zeta), 0.0)
    tot = k.sum(axis=1, keepdims=True)
    tot[tot == 0.0] = 1.0
    r = np.cumsum(k / tot, axis=1)
    out = np.full((n, L + 1), np.inf)
    out[:, 0] = -np.inf
    cols = np.arange(1, L + 1)
    interior = cols[None, :] < nneigh[:, None]
    rv = np.clip(r[:, :L], 1e-15, 1.0 - 1e-15)
    logits = np.log(rv) - np.log1p(-rv)
    out[:, 1:][interior] = logits[interior]
    return out


def weight_grid(rstar, nneigh, mu, kappa):
    """Per-site weight vectors from precomputed logit cutoffs.

    Returns an (n, L) array; entries beyond a site's neighbor count are 0.
    """
    n = rstar.shape[0]
    L = rstar.shape[1] - 1
    z = (rstar - mu[:, None]) / kappa
    probs = special.ndtr(z)
    w = np.diff(probs, axis=1)
    valid = np.arange(L)[None, :] < nneigh[:, None]
    return np.where(valid, np.maximum(w, 0.0), 0.0)
