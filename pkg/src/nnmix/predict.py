"""Posterior predictive sampling at new or reference locations.

For each posterior state a predictive count at a target comes from the
generative recipe: draw a mixture component from the target's weight vector,
take the continued-cdf value of the chosen neighbor's continued observation,
draw through the conditional copula, and invert the target's continued
marginal cdf.  New locations take the L closest reference sites as
neighbors; reference locations reuse their fitted neighbor lists (the first
site in the ordering has none and draws from its marginal).
"""

from __future__ import annotations

import numpy as np
from scipy import special

from . import copulas, geom, marginals, weights

__all__ = ["predict_at", "posterior_predict", "predictive_summary"]


def _target_neighbors(v0, ref):
    """Neighbor indices/distances for a target; reference sites are matched
    exactly and reuse their stored lists."""
    v = np.asarray(
        (v0.coord1, v0.coord2) if isinstance(v0, geom.Location) else v0,
        dtype=float,
    )
    hit = np.flatnonzero((ref.sites[:, 0] == v[0]) & (ref.sites[:, 1] == v[1]))
    if hit.size:
        i = int(hit[0])
        return v, ref.neighbor_list(i), ref.neighbor_distances(i)
    idx, dist = geom.neighbors_of_new(v, ref, ref.L)
    return v, idx, dist


def _marginal_fns(model, lam=None, beta=None, r=None, x0=None, mu=None):
    """cdf/pmf/ppf callables for a target's marginal, vectorized over counts."""
    if model.marginal == "poisson":
        return (
            lambda k: marginals.poisson_cdf(k, lam),
            lambda k: np.exp(marginals.poisson_logpmf(k, lam)),
            lambda t: marginals.poisson_ppf(t, lam),
        )
    if mu is None:
        mu = np.exp(np.dot(np.asarray(x0, dtype=float), beta))
    return (
        lambda k: marginals.nb_cdf(k, mu, r),
        lambda k: np.exp(marginals.nb_logpmf(k, mu, r)),
        lambda t: marginals.nb_ppf(t, mu, r),
    )


def predict_at(v0, state, y, ref, model, x0=None, X=None, rng=None):
    """One predictive count draw at ``v0`` under one posterior state.

    ``x0`` holds the target's covariates (negative binomial marginals only);
    ``X`` is the reference design, needed to evaluate neighbor marginals.
    """
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    v, idx, dist = _target_neighbors(v0, ref)
    if model.marginal == "negbinom" and x0 is None:
        hit = np.flatnonzero((ref.sites[:, 0] == v[0]) & (ref.sites[:, 1] == v[1]))
        if hit.size:
            x0 = X[int(hit[0])]
        else:
            raise ValueError("covariates at the target are required for "
                             "negative binomial marginals")
    cdf0, pmf0, ppf0 = _marginal_fns(
        model, lam=state.lam, beta=state.beta, r=state.r, x0=x0
    )
    if len(idx) == 0:
        t1 = float(np.clip(rng.random(), 1e-15, 1 - 1e-15))
    else:
        wp = weights.WeightParams(state.gamma, state.kappa2, state.zeta)
        cut = weights.cutoffs(v, ref.sites[idx], state.zeta)
        w = weights.mixture_weights(cut, wp, v)
        cum = np.cumsum(w)
        cum[-1] = 1.0
        l = min(int(np.searchsorted(cum, rng.random(), side="right")), len(w) - 1)
        j = int(idx[l])
        spec = copulas.CopulaSpec(model.copula, state.phi)
        theta = copulas.link(spec, float(dist[l]))
        cdfj, pmfj, _ = _marginal_fns(
            model, lam=state.lam, beta=state.beta, r=state.r,
            x0=None if X is None else X[j],
        )
        ystar_j = float(y[j]) - float(state.o[j])
        u2 = float(
            np.clip(
                marginals.continued_cdf_value(ystar_j, cdfj, pmfj),
                copulas.UEPS, 1.0 - copulas.UEPS,
            )
        )
        z = float(np.clip(rng.random(), 1e-15, 1 - 1e-15))
        t1 = float(np.clip(
            copulas.conditional_sample(model.copula, theta, u2, z),
            1e-15, 1 - 1e-15,
        ))
    ystar = marginals.continued_inverse_value(t1, cdf0, pmf0, ppf0)
    return int(np.floor(ystar + 1.0))


def posterior_predict(targets, posterior, y, ref, model, Xtargets=None, X=None,
                      seed=0, draws_per_sample=1):
    """Predictive count draws at each target, pooled over posterior samples.

    Vectorized across posterior samples per target; each target owns an
    independent RNG stream spawned from ``seed`` and the target index, so
    results do not depend on evaluation order.  Returns an integer array of
    shape ``(n_samples * draws_per_sample, n_targets)``.
    """
    targets = geom.as_coords(targets)
    m = len(targets)
    s = posterior.samples
    S = posterior.n_samples
    if S == 0:
        raise ValueError("empty posterior")
    if model.marginal == "negbinom":
        if Xtargets is None:
            raise ValueError("covariates at the targets are required for "
                             "negative binomial marginals")
        Xtargets = np.asarray(Xtargets, dtype=float)
        betas = s["beta"]
        rs = s["r"]
        mu_ref = np.exp(X @ betas.T)  # (n, S)
    else:
        lams = s["lam"]
    phis = s["phi"]
    zetas = s["zeta"]
    gammas = s["gamma"]
    kappas = np.sqrt(s["kappa2"])
    o = s["o"]
    y = np.asarray(y, dtype=float)
    children = np.random.SeedSequence(seed).spawn(m)
    out = np.empty((S * draws_per_sample, m), dtype=np.int64)
    for tau in range(m):
        rng = np.random.default_rng(children[tau])
        v, idx, dist = _target_neighbors(targets[tau], ref)
        mu0 = gammas[:, 0] + gammas[:, 1] * v[0] + gammas[:, 2] * v[1]
        if model.marginal == "negbinom":
            mu_t = np.exp(Xtargets[tau] @ betas.T)
        nc = len(idx)
        if nc:
            kern = np.exp(-dist[None, :] / zetas[:, None])  # (S, nc)
            rr = np.cumsum(kern / kern.sum(axis=1, keepdims=True), axis=1)
            rstar = np.empty((S, nc + 1))
            rstar[:, 0] = -np.inf
            rstar[:, -1] = np.inf
            if nc > 1:
                rv = np.clip(rr[:, : nc - 1], 1e-15, 1 - 1e-15)
                rstar[:, 1:nc] = np.log(rv) - np.log1p(-rv)
            pr = special.ndtr((rstar - mu0[:, None]) / kappas[:, None])
            w = np.maximum(np.diff(pr, axis=1), 0.0)
            cumw = np.cumsum(w, axis=1)
        for d in range(draws_per_sample):
            if nc == 0:
                t1 = np.clip(rng.random(S), 1e-15, 1 - 1e-15)
            else:
                ucomp = rng.random(S)
                l = (cumw > (ucomp * cumw[:, -1])[:, None]).argmax(axis=1)
                j = idx[l]
                theta = copulas.link_values(model.copula, dist[l], phis)
                ystar_j = y[j] - o[np.arange(S), j]
                mfloor = np.floor(ystar_j)
                if model.marginal == "poisson":
                    cdfm = marginals.poisson_cdf(mfloor, lams)
                    gnext = np.exp(marginals.poisson_logpmf(mfloor + 1.0, lams))
                else:
                    mu_j = mu_ref[j, np.arange(S)]
                    cdfm = marginals.nb_cdf(mfloor, mu_j, rs)
                    gnext = np.exp(marginals.nb_logpmf(mfloor + 1.0, mu_j, rs))
                u2 = np.clip(cdfm + (ystar_j - mfloor) * gnext,
                             copulas.UEPS, 1.0 - copulas.UEPS)
                z = np.clip(rng.random(S), 1e-15, 1 - 1e-15)
                t1 = np.clip(
                    copulas.conditional_sample(model.copula, theta, u2, z),
                    1e-15, 1 - 1e-15,
                )
            if model.marginal == "poisson":
                ystar0 = marginals.continued_inverse_value(
                    t1,
                    lambda k: marginals.poisson_cdf(k, lams),
                    lambda k: np.exp(marginals.poisson_logpmf(k, lams)),
                    lambda t: marginals.poisson_ppf(t, lams),
                )
            else:
                ystar0 = marginals.continued_inverse_value(
                    t1,
                    lambda k: marginals.nb_cdf(k, mu_t, rs),
                    lambda k: np.exp(marginals.nb_logpmf(k, mu_t, rs)),
                    lambda t: marginals.nb_ppf(t, mu_t, rs),
                )
            out[d * S:(d + 1) * S, tau] = np.floor(ystar0 + 1.0).astype(np.int64)
    return out


def predictive_summary(draws):
    """Pooled per-target summaries: integer-valued empirical quantiles.

    ``draws`` has one row per predictive draw and one column per target.
    """
    draws = np.asarray(draws)
    if draws.ndim != 2 or len(draws) < 1:
        raise ValueError("need a (draws, targets) matrix")
    med = np.quantile(draws, 0.5, axis=0, method="inverted_cdf")
    lo = np.quantile(draws, 0.025, axis=0, method="inverted_cdf")
    hi = np.quantile(draws, 0.975, axis=0, method="inverted_cdf")
    return {
        "median": med,
        "mean": draws.mean(axis=0),
        "lower95": lo,
        "upper95": hi,
        "n_draws": len(draws),
    }
