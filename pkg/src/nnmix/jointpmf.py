"""Joint pmf of the mixture model over a reference set, two ways.

The model's sequential definition multiplies per-site conditional mixtures
along the ordering.  Expanding the product of sums gives the equivalent
configuration-sum form: a product of marginal pmfs times a sum over all
component choices (l_2, ..., l_n) of products of weights and discrete copula
density ratios.  The expanded form is kept as an independent code path (a
brute-force nested enumeration) so equality of the two is a meaningful check
of the sequential machinery.

A continued-variable variant evaluates the same algebra for the jittered
model, where the component factors are continuous copula densities at the
continued-cdf arguments.
"""

from __future__ import annotations

import itertools

import numpy as np

from . import copulas, weights

__all__ = [
    "site_weight_vectors",
    "sequential_joint_pmf",
    "expanded_joint_pmf",
    "continued_config_logdensity",
]


def site_weight_vectors(ref, wparams: weights.WeightParams):
    """Mixture weight vector per site (index 0 gets an empty vector)."""
    out = [np.empty(0)]
    for i in range(1, ref.n):
        cut = weights.cutoffs(
            ref.sites[i], ref.sites[ref.neighbor_list(i)], wparams.zeta
        )
        out.append(weights.mixture_weights(cut, wparams, ref.sites[i]))
    return out


def _discrete_cratio(spec, dist, marg, i, j, yi, yj):
    """Discrete copula density ratio c(u, v) = f_UV(u, v) / (f_U(u) f_V(v))."""
    theta = copulas.link(spec, dist)
    f_uv = copulas.discrete_pmf(
        spec.family,
        theta,
        lambda k: marg.cdf(i, k),
        lambda k: marg.cdf(j, k),
        yi,
        yj,
    )
    return f_uv / (marg.pmf(i, yi) * marg.pmf(j, yj))


def sequential_joint_pmf(y, ref, spec, marg, wparams) -> float:
    """Joint pmf as the ordered product of conditional mixtures."""
    y = np.asarray(y)
    p = marg.pmf(0, int(y[0]))
    wvecs = site_weight_vectors(ref, wparams)
    for i in range(1, ref.n):
        idx = ref.neighbor_list(i)
        dists = ref.neighbor_distances(i)
        mix = 0.0
        for l, (j, d) in enumerate(zip(idx, dists)):
            c = _discrete_cratio(spec, d, marg, i, int(j), int(y[i]), int(y[j]))
            mix += wvecs[i][l] * c
        p *= mix * marg.pmf(i, int(y[i]))
    return p


def expanded_joint_pmf(y, ref, spec, marg, wparams) -> float:
    """Joint pmf by brute-force enumeration of all component configurations."""
    y = np.asarray(y)
    n = ref.n
    base = 1.0
    for i in range(n):
        base *= marg.pmf(i, int(y[i]))
    if n == 1:
        return base
    wvecs = site_weight_vectors(ref, wparams)
    # cache the component factors per (site, l)
    factors = []
    for i in range(1, n):
        idx = ref.neighbor_list(i)
        dists = ref.neighbor_distances(i)
        row = []
        for j, d in zip(idx, dists):
            row.append(_discrete_cratio(spec, d, marg, i, int(j), int(y[i]), int(y[j])))
        factors.append(row)
    total = 0.0
    ranges = [range(len(f)) for f in factors]
    for config in itertools.product(*ranges):
        term = 1.0
        for i, l in enumerate(config):
            term *= wvecs[i + 1][l] * factors[i][l]
        total += term
    return base * total


def continued_config_logdensity(ystar, ref, spec, marg, wparams, config) -> float:
    """Log density of the continued variables jointly with one configuration.

    ``config[i]`` is the component chosen at site i (0-based; ``config[1]``
    must be 0 and ``config[0]`` is ignored).  The value is the product of
    continued marginal densities, the chosen-component copula densities at
    the continued-cdf arguments, and the weights of the chosen components.
    """
    ystar = np.asarray(ystar, dtype=float)
    n = ref.n
    wvecs = site_weight_vectors(ref, wparams)
    u = np.array([marg.continued_cdf(i, ystar[i]) for i in range(n)])
    u = np.clip(u, copulas.UEPS, 1.0 - copulas.UEPS)
    total = sum(
        float(np.log(marg.continued_pmf(i, ystar[i]))) for i in range(n)
    )
    for i in range(1, n):
        l = int(config[i])
        j = int(ref.neighbor_list(i)[l])
        d = ref.neighbor_distances(i)[l]
        theta = copulas.link(spec, d)
        total += float(
            copulas.copula_logdensity(spec.family, theta, u[i], u[j])
        )
        total += float(np.log(wvecs[i][l]))
    return total
