"""Pure-Python (numpy) implementations of the sampler's hot kernels.

These are the reference implementations; the compiled extension in
``_kernels.pyx`` mirrors them loop-for-loop.  The component update is
vectorized across sites (the draws are conditionally independent), while the
auxiliary-uniform sweep is inherently sequential and runs as a Python loop.

All random inputs are pre-drawn arrays so both backends consume the RNG
stream identically.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special

from .copulas import UEPS, pair_logdensity, transform

BACKEND = "python"

_MINP = 1e-300
_MAXP = 1.0 - 1e-16
_FAM_NAMES = ("gaussian", "gumbel", "clayton")


def _fam_name(family):
    return _FAM_NAMES[family] if not isinstance(family, str) else family


def transform_arrays(family, u):
    """Family-specific transforms of cdf-scale arguments (see copulas)."""
    return transform(family, u)


def tl_update(family, tr1, tr2, nneigh, neigh_idx, theta, rstar, mu, kappa,
              ucat, utn, t, ell):
    """Draw the component label and auxiliary Gaussian for sites i >= 2.

    For each site the label is categorical with probability proportional to
    (interval weight) x (copula density of the pair), then the Gaussian is
    drawn from the corresponding truncated interval by inverse cdf.  Returns
    the number of sites whose component mass vanished (0 on success).
    """
    fam = _fam_name(family)
    n, L = neigh_idx.shape
    if n <= 2:
        return 0
    rows = slice(2, n)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        z = (rstar[rows] - mu[rows, None]) / kappa
        pr = special.ndtr(z)
        w = np.diff(pr, axis=1)
        logw = np.where(w > 0.0, np.log(np.maximum(w, _MINP)), -np.inf)
        j = neigh_idx[rows]
        logc = pair_logdensity(
            fam,
            tr1[rows, None], tr2[rows, None],
            tr1[j], tr2[j],
            theta[rows],
        )
        valid = np.arange(L)[None, :] < nneigh[rows, None]
        logits = np.where(valid & np.isfinite(logw), logw + logc, -np.inf)
    m = logits.max(axis=1)
    bad = ~np.isfinite(m)
    if np.any(bad):
        return int(bad.sum())
    p = np.exp(logits - m[:, None])
    cum = np.cumsum(p, axis=1)
    target = ucat[rows] * cum[:, -1]
    lstar = (cum > target[:, None]).argmax(axis=1)
    idx = np.arange(2, n)
    lo = rstar[idx, lstar]
    hi = rstar[idx, lstar + 1]
    a = special.ndtr((lo - mu[rows]) / kappa)
    b = special.ndtr((hi - mu[rows]) / kappa)
    pdraw = np.clip(a + utn[rows] * (b - a), _MINP, _MAXP)
    tval = mu[rows] + kappa * special.ndtri(pdraw)
    # keep the draw strictly inside its interval despite rounding
    low_ok = np.isfinite(lo)
    hi_ok = np.isfinite(hi)
    tval = np.where(low_ok & (tval <= lo), np.nextafter(lo, np.inf), tval)
    tval = np.where(hi_ok & (tval >= hi), np.nextafter(hi, -np.inf), tval)
    t[rows] = tval
    ell[rows] = lstar.astype(ell.dtype)
    return 0


def _logc_scalar(family, a1, b1, a2, b2, theta):
    if family == 0:
        om = 1.0 - theta * theta
        return -0.5 * math.log(om) + (
            2.0 * theta * a1 * a2 - theta * theta * (a1 * a1 + a2 * a2)
        ) / (2.0 * om)
    if family == 1:
        x1 = theta * b1
        x2 = theta * b2
        m = x1 if x1 > x2 else x2
        ls = m + math.log(math.exp(x1 - m) + math.exp(x2 - m))
        y = math.exp(ls / theta)
        return (
            -y
            + math.log(y + theta - 1.0)
            + (1.0 / theta - 2.0) * ls
            + (theta - 1.0) * (b1 + b2)
            + a1
            + a2
        )
    x1 = -theta * a1
    x2 = -theta * a2
    m = x1 if x1 > x2 else x2
    if m < 0.0:
        m = 0.0
    ls = m + math.log(math.exp(x1 - m) + math.exp(x2 - m) - math.exp(-m))
    return math.log1p(theta) - (theta + 1.0) * (a1 + a2) - (2.0 + 1.0 / theta) * ls


def _transform_scalar(family, u):
    if u < UEPS:
        u = UEPS
    elif u > 1.0 - UEPS:
        u = 1.0 - UEPS
    if family == 0:
        return float(special.ndtri(u)), 0.0
    if family == 1:
        w = -math.log1p(u - 1.0)
        return w, math.log(w)
    return math.log(u), 0.0


def o_update(family, cdf_ym1, pmf_y, sel, theta_sel, dep_ptr, dep_idx,
             oprop, uacc, active, o, u, tr1, tr2):
    """Independence-Metropolis sweep over the auxiliary uniforms, in site order.

    Each proposal changes only the continued-cdf value of its own site; the
    acceptance ratio multiplies the own copula term (absent for site 0) with
    the terms of every site that selected this one as its component neighbor.
    Updates o, u, tr1, tr2 in place; returns the acceptance count.
    """
    fam = {"gaussian": 0, "gumbel": 1, "clayton": 2}.get(family, family)
    n = len(o)
    nacc = 0
    for i in range(n):
        if active is not None and not active[i]:
            continue
        up = cdf_ym1[i] + (1.0 - oprop[i]) * pmf_y[i]
        a_new, b_new = _transform_scalar(fam, up)
        delta = 0.0
        if i >= 1:
            jj = sel[i]
            th = theta_sel[i]
            delta += _logc_scalar(fam, a_new, b_new, tr1[jj], tr2[jj], th)
            delta -= _logc_scalar(fam, tr1[i], tr2[i], tr1[jj], tr2[jj], th)
        for q in range(dep_ptr[i], dep_ptr[i + 1]):
            k = dep_idx[q]
            th = theta_sel[k]
            delta += _logc_scalar(fam, tr1[k], tr2[k], a_new, b_new, th)
            delta -= _logc_scalar(fam, tr1[k], tr2[k], tr1[i], tr2[i], th)
        if math.log(uacc[i]) < delta:
            o[i] = oprop[i]
            u[i] = up
            tr1[i] = a_new
            tr2[i] = b_new
            nacc += 1
    return nacc


def pair_loglik_sum(family, tr1, tr2, sel, theta_sel):
    """Sum over sites i >= 1 of the log copula density pairing i with sel[i]."""
    j = sel[1:]
    vals = pair_logdensity(
        _fam_name(family), tr1[1:], tr2[1:], tr1[j], tr2[j], theta_sel[1:]
    )
    return float(np.sum(vals))
