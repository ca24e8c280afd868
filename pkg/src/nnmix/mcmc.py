"""Metropolis-within-Gibbs sampler for the augmented mixture model.

The augmented state couples each count y_i with a uniform o_i (the continued
value is y*_i = y_i - o_i), a component label ell_i for every site with
neighbors, and for sites with two or more neighbors a Gaussian auxiliary t_i
whose interval between logit cutoffs encodes the label.  One sweep updates,
in order: (t, ell) exactly; the o_i by independence Metropolis; gamma and
kappa^2 from their conjugate full conditionals; the marginal parameters
(lambda, or beta and r) by random-walk Metropolis; the copula link range phi
by random-walk Metropolis; and the kernel range zeta by random-walk
Metropolis subject to every t_i staying inside its current label's interval
under the proposed cutoffs.

Latent layers are updated first so the parameter blocks see a consistent
configuration.  Step sizes adapt during burn-in only (Robbins-Monro toward a
target acceptance rate) and are frozen afterwards, which preserves the
stationary law of the post-burn-in chain.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, special

from . import copulas, kernels, marginals, weights
from .errors import NumericalError

__all__ = [
    "Priors",
    "ModelSpec",
    "ChainConfig",
    "ModelState",
    "PosteriorSamples",
    "GibbsSampler",
    "run_chain",
    "fit",
]

_STEP_DEFAULTS = {"lam": 0.3, "r": 0.3, "beta": 0.08, "phi": 0.4, "zeta": 0.4}


# ---------------------------------------------------------------------------
# configuration containers

@dataclass
class Priors:
    """Prior hyperparameters.

    ``phi``, ``zeta`` and ``kappa2`` are inverse-gamma (shape, scale);
    ``lam`` and ``r`` are gamma (shape, rate); ``gamma`` is Gaussian with the
    given mean and covariance; ``beta`` is Gaussian with a common mean and a
    diagonal covariance ``beta_var * I``.
    """

    phi: tuple = (3.0, 1.0)
    zeta: tuple = (3.0, 1.0)
    kappa2: tuple = (3.0, 1.0)
    gamma_mean: tuple = (-1.5, 0.0, 0.0)
    gamma_cov: tuple = ((2.0, 0.0, 0.0), (0.0, 2.0, 0.0), (0.0, 0.0, 2.0))
    lam: tuple = (1.0, 1.0)
    r: tuple = (1.0, 1.0)
    beta_mean: float = 0.0
    beta_var: float = 100.0

    def __post_init__(self):
        for name in ("phi", "zeta", "kappa2", "lam", "r"):
            a, b = getattr(self, name)
            if not (a > 0 and b > 0):
                raise ValueError(f"prior hyperparameters for {name} must be positive")
        gm = np.asarray(self.gamma_mean, dtype=float)
        gc = np.asarray(self.gamma_cov, dtype=float)
        if gm.shape != (3,) or gc.shape != (3, 3):
            raise ValueError("gamma prior must be 3-dimensional")
        if not np.allclose(gc, gc.T) or np.any(np.linalg.eigvalsh(gc) <= 0):
            raise ValueError("gamma prior covariance must be symmetric positive definite")
        if not self.beta_var > 0:
            raise ValueError("beta prior variance must be positive")

    def to_dict(self):
        return {
            "phi": list(self.phi),
            "zeta": list(self.zeta),
            "kappa2": list(self.kappa2),
            "gamma_mean": list(self.gamma_mean),
            "gamma_cov": [list(row) for row in np.asarray(self.gamma_cov)],
            "lam": list(self.lam),
            "r": list(self.r),
            "beta_mean": self.beta_mean,
            "beta_var": self.beta_var,
        }

    @classmethod
    def from_dict(cls, d):
        kw = {k: v for k, v in d.items()}
        for name in ("phi", "zeta", "kappa2", "lam", "r"):
            if name in kw:
                kw[name] = tuple(kw[name])
        if "gamma_mean" in kw:
            kw["gamma_mean"] = tuple(kw["gamma_mean"])
        if "gamma_cov" in kw:
            kw["gamma_cov"] = tuple(tuple(row) for row in kw["gamma_cov"])
        return cls(**kw)


@dataclass(frozen=True)
class ModelSpec:
    """Marginal family, copula family and neighbor budget."""

    marginal: str
    copula: str
    L: int

    def __post_init__(self):
        if self.marginal not in ("poisson", "negbinom"):
            raise ValueError(f"unknown marginal family {self.marginal!r}")
        if self.copula not in copulas.FAMILIES:
            raise ValueError(f"unknown copula family {self.copula!r}")
        if self.L < 1:
            raise ValueError("L must be >= 1")

    def to_dict(self):
        return {"marginal": self.marginal, "copula": self.copula, "L": self.L}

    @classmethod
    def from_dict(cls, d):
        return cls(d["marginal"], d["copula"], int(d["L"]))


@dataclass
class ChainConfig:
    n_iter: int = 20000
    burnin: int = 4000
    thin: int = 4
    seed: int = 0
    steps: dict = field(default_factory=lambda: dict(_STEP_DEFAULTS))
    adapt: bool = True
    adapt_target: float = 0.35
    blocks: tuple | None = None      # restrict parameter blocks (tests)
    update_t_ell: bool = True
    update_o: bool = True
    likelihood_off: bool = False     # prior-recovery mode
    progress_every: int = 0

    def __post_init__(self):
        if not (self.n_iter >= self.burnin >= 0):
            raise ValueError("need n_iter >= burnin >= 0")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        merged = dict(_STEP_DEFAULTS)
        merged.update(self.steps)
        self.steps = merged

    def to_dict(self):
        return {
            "n_iter": self.n_iter,
            "burnin": self.burnin,
            "thin": self.thin,
            "seed": self.seed,
            "steps": dict(self.steps),
            "adapt": self.adapt,
            "adapt_target": self.adapt_target,
        }


@dataclass
class ModelState:
    """One MCMC state: parameters plus latent layers."""

    phi: float
    zeta: float
    gamma: np.ndarray
    kappa2: float
    o: np.ndarray
    t: np.ndarray
    ell: np.ndarray
    lam: float | None = None
    beta: np.ndarray | None = None
    r: float | None = None


# ---------------------------------------------------------------------------
# prior log densities (up to constants)

def _log_gamma_pdf(x, shape, rate):
    return (shape - 1.0) * np.log(x) - rate * x


def _log_invgamma_pdf(x, shape, scale):
    return -(shape + 1.0) * np.log(x) - scale / x


# ---------------------------------------------------------------------------
# shared array helpers

def marginal_arrays(model: ModelSpec, y, X, params):
    """Per-site (Q(y-1), g(y), log g(y)) under the given marginal parameters."""
    with np.errstate(all="ignore"):
        if model.marginal == "poisson":
            lam = params["lam"]
            logpmf = marginals.poisson_logpmf(y, lam)
            cdfm1 = marginals.poisson_cdf(y - 1, lam)
        else:
            eta = X @ params["beta"]
            mu = np.exp(eta)
            r = params["r"]
            logpmf = marginals.nb_logpmf(y, mu, r)
            cdfm1 = marginals.nb_cdf(y - 1, mu, r)
        pmf = np.exp(logpmf)
    return np.asarray(cdfm1, dtype=float), pmf, logpmf


def state_marginal(model: ModelSpec, state: ModelState, X=None):
    """Marginal model object for one posterior state."""
    if model.marginal == "poisson":
        return marginals.PoissonMarginal(state.lam)
    return marginals.NegBinomMarginal(state.beta, state.r, X)


_THETA_PAD = {"gaussian": 0.5, "gumbel": 1.0, "clayton": 1.0}


def theta_grid(spec: copulas.CopulaSpec, neigh_dist):
    """Copula link parameters on the neighbor grid.

    Padded columns get a family-valid neutral value; they are never read by
    the kernels but must not break parameter validation elsewhere.
    """
    out = np.full_like(neigh_dist, _THETA_PAD[spec.family])
    finite = np.isfinite(neigh_dist)
    out[finite] = copulas.link(spec, neigh_dist[finite])
    return np.ascontiguousarray(out)


# ---------------------------------------------------------------------------
# the sampler

class GibbsSampler:
    """Holds the model state and caches; one instance runs one chain."""

    def __init__(self, ref, y, model: ModelSpec, priors: Priors | None = None,
                 config: ChainConfig | None = None, X=None, backend=None):
        self.ref = ref
        self.y = np.asarray(y, dtype=np.int64)
        if len(self.y) != ref.n:
            raise ValueError("data and reference set sizes disagree")
        if np.any(self.y < 0):
            raise ValueError("counts must be nonnegative")
        if ref.n < 2:
            raise ValueError("the sampler needs at least two sites")
        self.model = model
        self.priors = priors if priors is not None else Priors()
        self.config = config if config is not None else ChainConfig()
        self.kern = kernels.get(backend)
        self.fam = copulas.FAMILY_CODES[model.copula]
        self.n = ref.n
        self.nneigh = np.ascontiguousarray(ref.nneigh, dtype=np.int32)
        self.neigh_idx = np.ascontiguousarray(ref.neigh_idx, dtype=np.int32)
        self.neigh_dist = np.ascontiguousarray(ref.neigh_dist, dtype=float)
        if model.marginal == "negbinom":
            if X is None:
                raise ValueError("negative binomial marginals need a covariate design X")
            self.X = np.asarray(X, dtype=float)
            if self.X.shape[0] != self.n:
                raise ValueError("design row count does not match the data")
        else:
            self.X = None
        self.rng = np.random.default_rng([int(self.config.seed), 1])
        self._accept = {}
        self._propose = {}
        self._adapt_k = {}
        self.steps = dict(self.config.steps)
        self._init_params()
        self._init_caches()
        self._init_latents()
        self._check_initial_target()

    # -- initialization -----------------------------------------------------

    def _init_params(self):
        pr = self.priors
        if self.model.marginal == "poisson":
            self.lam = max(float(np.mean(self.y)), 0.1)
        else:
            yy = np.log(self.y + 0.5)
            beta, *_ = np.linalg.lstsq(self.X, yy, rcond=None)
            self.beta = beta
            m = float(np.mean(self.y))
            v = float(np.var(self.y))
            r0 = m * m / (v - m) if v > m * 1.001 else 50.0
            self.r = float(np.clip(r0, 0.1, 100.0))
        self.phi = pr.phi[1] / (pr.phi[0] - 1.0) if pr.phi[0] > 1 else 1.0
        self.zeta = pr.zeta[1] / (pr.zeta[0] - 1.0) if pr.zeta[0] > 1 else 1.0
        self.gamma = np.asarray(pr.gamma_mean, dtype=float).copy()
        self.kappa2 = pr.kappa2[1] / (pr.kappa2[0] - 1.0) if pr.kappa2[0] > 1 else 1.0

    def _params(self):
        if self.model.marginal == "poisson":
            return {"lam": self.lam}
        return {"beta": self.beta, "r": self.r}

    def _init_caches(self):
        self.cdf_ym1, self.pmf_y, self.logpmf_y = marginal_arrays(
            self.model, self.y, self.X, self._params()
        )
        self.o = np.full(self.n, 0.5)
        self._refresh_u()
        self.theta = theta_grid(self._copspec(), self.neigh_dist)
        self.rstar = weights.cutoff_logits_grid(self.neigh_dist, self.nneigh, self.zeta)
        self._refresh_mu()

    def _init_latents(self):
        self.ell = np.zeros(self.n, dtype=np.int32)
        self.t = np.zeros(self.n)
        if self.n > 2:
            kappa = np.sqrt(self.kappa2)
            lo = (self.rstar[2:, 0] - self.mu[2:]) / kappa
            hi = (self.rstar[2:, 1] - self.mu[2:]) / kappa
            p = 0.5 * (special.ndtr(lo) + special.ndtr(hi))
            p = np.clip(p, 1e-12, 1.0 - 1e-12)
            tv = self.mu[2:] + kappa * special.ndtri(p)
            upper = self.rstar[2:, 1]
            tv = np.where(np.isfinite(upper) & (tv >= upper),
                          np.nextafter(upper, -np.inf), tv)
            self.t[2:] = tv
        self._sel_dirty = True

    def _check_initial_target(self):
        parts = {
            "marginal log pmf": float(np.sum(self.logpmf_y)),
            "copula pair terms": self._pair_sum_current(),
        }
        if self.n > 2:
            resid = self.t[2:] - self.mu[2:]
            parts["auxiliary Gaussian terms"] = float(
                -0.5 * np.sum(resid * resid) / self.kappa2
            )
        for name, val in parts.items():
            if not np.isfinite(val):
                raise NumericalError(
                    f"non-finite log target at initialization: {name}"
                )

    # -- cache maintenance ---------------------------------------------------

    def _copspec(self, phi=None):
        return copulas.CopulaSpec(self.model.copula, self.phi if phi is None else phi)

    def _refresh_u(self, cdf_ym1=None, pmf_y=None, o=None):
        cdf_ym1 = self.cdf_ym1 if cdf_ym1 is None else cdf_ym1
        pmf_y = self.pmf_y if pmf_y is None else pmf_y
        o = self.o if o is None else o
        u = cdf_ym1 + (1.0 - o) * pmf_y
        tr1, tr2 = self.kern.transform_arrays(self.fam, u)
        self.u, self.tr1, self.tr2 = u, tr1, tr2

    def _refresh_mu(self):
        s = self.ref.sites
        self.mu = self.gamma[0] + self.gamma[1] * s[:, 0] + self.gamma[2] * s[:, 1]

    def _refresh_selection(self):
        n = self.n
        sel = np.zeros(n, dtype=np.int32)
        if n > 1:
            sel[1:] = self.neigh_idx[np.arange(1, n), self.ell[1:]]
        self.sel = sel
        rows = np.arange(n)
        self.theta_sel = np.ascontiguousarray(self.theta[rows, self.ell])
        self.dist_sel = np.ascontiguousarray(self.neigh_dist[rows, self.ell])
        targets = sel[1:]
        order = np.argsort(targets, kind="stable").astype(np.int64) + 1
        counts = np.bincount(targets, minlength=n)
        self.dep_ptr = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)
        self.dep_idx = order.astype(np.int32)
        self._sel_dirty = False

    def _ensure_selection(self):
        if self._sel_dirty:
            self._refresh_selection()

    def _pair_sum_current(self):
        if self.config.likelihood_off or self.n < 2:
            return 0.0
        self._ensure_selection()
        return self.kern.pair_loglik_sum(
            self.fam, self.tr1, self.tr2, self.sel, self.theta_sel
        )

    # -- acceptance bookkeeping ----------------------------------------------

    def _record(self, name, accepted, post_burnin):
        if post_burnin:
            self._propose[name] = self._propose.get(name, 0) + 1
            if accepted:
                self._accept[name] = self._accept.get(name, 0) + 1

    def _adapt(self, name, aprob):
        self._adapt_k[name] = self._adapt_k.get(name, 0) + 1
        rate = self._adapt_k[name] ** -0.6
        step = self.steps[name] * np.exp(rate * (aprob - self.config.adapt_target))
        self.steps[name] = float(np.clip(step, 1e-4, 10.0))

    def acceptance_rates(self):
        return {
            k: self._accept.get(k, 0) / max(self._propose.get(k, 1), 1)
            for k in self._propose
        }

    # -- latent updates -------------------------------------------------------

    def update_t_and_ell(self):
        """Exact draw of the component labels and auxiliary Gaussians."""
        ucat = self.rng.random(self.n)
        utn = self.rng.random(self.n)
        if self.n <= 2:
            return
        if self.config.likelihood_off:
            # weights-only categorical: a zero-correlation Gaussian copula
            # at zero transforms makes every pair factor exactly 1
            zeros = np.zeros(self.n)
            nbad = self.kern.tl_update(
                0, zeros, zeros, self.nneigh, self.neigh_idx,
                np.zeros_like(self.theta), self.rstar, self.mu,
                float(np.sqrt(self.kappa2)), ucat, utn, self.t, self.ell,
            )
        else:
            nbad = self.kern.tl_update(
                self.fam, self.tr1, self.tr2, self.nneigh, self.neigh_idx,
                self.theta, self.rstar, self.mu, float(np.sqrt(self.kappa2)),
                ucat, utn, self.t, self.ell,
            )
        if nbad:
            raise NumericalError(
                f"zero component mass in the label update at {nbad} site(s)"
            )
        self._sel_dirty = True

    def update_o(self, active=None, post_burnin=True):
        """Independence-Metropolis sweep over the auxiliary uniforms."""
        self._ensure_selection()
        oprop = self.rng.random(self.n)
        uacc = self.rng.random(self.n)
        if self.config.likelihood_off:
            # flat full conditional: accept everything
            self.o = oprop if active is None else np.where(active, oprop, self.o)
            self._refresh_u()
            nacc = self.n
        else:
            nacc = self.kern.o_update(
                self.fam, self.cdf_ym1, self.pmf_y, self.sel, self.theta_sel,
                self.dep_ptr, self.dep_idx, oprop, uacc, active,
                self.o, self.u, self.tr1, self.tr2,
            )
        if post_burnin:
            self._propose["o"] = self._propose.get("o", 0) + self.n
            self._accept["o"] = self._accept.get("o", 0) + int(nacc)
        return nacc

    # -- conjugate updates -----------------------------------------------------

    def update_gamma_kappa2(self):
        self._update_gamma()
        self._update_kappa2()

    def _update_gamma(self):
        pr = self.priors
        vinv = np.linalg.inv(np.asarray(pr.gamma_cov, dtype=float))
        gmean = np.asarray(pr.gamma_mean, dtype=float)
        if self.n > 2:
            s = self.ref.sites[2:]
            D = np.column_stack([np.ones(len(s)), s[:, 0], s[:, 1]])
            prec = vinv + (D.T @ D) / self.kappa2
            rhs = vinv @ gmean + (D.T @ self.t[2:]) / self.kappa2
        else:
            prec = vinv
            rhs = vinv @ gmean
        cho = linalg.cho_factor(prec, lower=True)
        mean = linalg.cho_solve(cho, rhs)
        z = self.rng.standard_normal(3)
        self.gamma = mean + linalg.solve_triangular(cho[0], z, lower=True, trans="T")
        self._refresh_mu()

    def _update_kappa2(self):
        u0, v0 = self.priors.kappa2
        if self.n > 2:
            resid = self.t[2:] - self.mu[2:]
            shape = u0 + 0.5 * (self.n - 2)
            scale = v0 + 0.5 * float(np.sum(resid * resid))
        else:
            shape, scale = u0, v0
        self.kappa2 = scale / self.rng.gamma(shape)

    # -- Metropolis blocks -------------------------------------------------------

    def update_metropolis_block(self, block, adapt=False, post_burnin=True):
        if block in ("lam", "lambda"):
            self._update_lam(adapt, post_burnin)
        elif block == "r_or_lambda":
            if self.model.marginal == "poisson":
                self._update_lam(adapt, post_burnin)
            else:
                self._update_r(adapt, post_burnin)
        elif block == "r":
            self._update_r(adapt, post_burnin)
        elif block == "beta":
            self._update_beta(adapt, post_burnin)
        elif block == "phi":
            self._update_phi(adapt, post_burnin)
        elif block == "zeta":
            self._update_zeta(adapt, post_burnin)
        else:
            raise ValueError(f"unknown Metropolis block {block!r}")

    def _marginal_loglik(self, params):
        """Pair terms plus marginal pmf terms under candidate marginal params.

        Returns (loglik, caches) where caches are swapped in on acceptance.
        """
        cdf_ym1, pmf_y, logpmf_y = marginal_arrays(self.model, self.y, self.X, params)
        lp = float(np.sum(logpmf_y))
        if not np.isfinite(lp):
            return -np.inf, None
        u = cdf_ym1 + (1.0 - self.o) * pmf_y
        tr1, tr2 = self.kern.transform_arrays(self.fam, u)
        if self.config.likelihood_off:
            return 0.0, (cdf_ym1, pmf_y, logpmf_y, u, tr1, tr2)
        self._ensure_selection()
        pair = self.kern.pair_loglik_sum(self.fam, tr1, tr2, self.sel, self.theta_sel)
        total = pair + lp
        if not np.isfinite(total):
            return -np.inf, None
        return total, (cdf_ym1, pmf_y, logpmf_y, u, tr1, tr2)

    def _accept_marginal(self, caches):
        (self.cdf_ym1, self.pmf_y, self.logpmf_y,
         self.u, self.tr1, self.tr2) = caches

    def _mh_finish(self, name, dlt, adapt, post_burnin, uu):
        """Common accept/adapt bookkeeping; returns True when accepted."""
        with np.errstate(over="ignore", invalid="ignore"):
            aprob = float(min(1.0, np.exp(min(dlt, 0.0)))) if np.isfinite(dlt) else 0.0
        accepted = np.isfinite(dlt) and np.log(uu) < dlt
        self._record(name, accepted, post_burnin)
        if adapt:
            self._adapt(name, aprob)
        return accepted

    def _update_lam(self, adapt=False, post_burnin=True):
        z = self.rng.standard_normal()
        uu = self.rng.random()
        prop = self.lam * np.exp(self.steps["lam"] * z)
        ll_p, caches = self._marginal_loglik({"lam": prop})
        ll_c = self._pair_sum_current() + (
            0.0 if self.config.likelihood_off else float(np.sum(self.logpmf_y))
        )
        a, b = self.priors.lam
        dlt = (ll_p - ll_c
               + _log_gamma_pdf(prop, a, b) - _log_gamma_pdf(self.lam, a, b)
               + np.log(prop) - np.log(self.lam))
        if self._mh_finish("lam", dlt, adapt, post_burnin, uu):
            self.lam = float(prop)
            self._accept_marginal(caches)

    def _update_r(self, adapt=False, post_burnin=True):
        z = self.rng.standard_normal()
        uu = self.rng.random()
        prop = self.r * np.exp(self.steps["r"] * z)
        ll_p, caches = self._marginal_loglik({"beta": self.beta, "r": prop})
        ll_c = self._pair_sum_current() + (
            0.0 if self.config.likelihood_off else float(np.sum(self.logpmf_y))
        )
        a, b = self.priors.r
        dlt = (ll_p - ll_c
               + _log_gamma_pdf(prop, a, b) - _log_gamma_pdf(self.r, a, b)
               + np.log(prop) - np.log(self.r))
        if self._mh_finish("r", dlt, adapt, post_burnin, uu):
            self.r = float(prop)
            self._accept_marginal(caches)

    def _update_beta(self, adapt=False, post_burnin=True):
        p = len(self.beta)
        z = self.rng.standard_normal(p)
        uu = self.rng.random()
        prop = self.beta + self.steps["beta"] * z
        ll_p, caches = self._marginal_loglik({"beta": prop, "r": self.r})
        ll_c = self._pair_sum_current() + (
            0.0 if self.config.likelihood_off else float(np.sum(self.logpmf_y))
        )
        m, v = self.priors.beta_mean, self.priors.beta_var
        dlt = (ll_p - ll_c
               - 0.5 * float(np.sum((prop - m) ** 2 - (self.beta - m) ** 2)) / v)
        if self._mh_finish("beta", dlt, adapt, post_burnin, uu):
            self.beta = prop
            self._accept_marginal(caches)

    def _update_phi(self, adapt=False, post_burnin=True):
        z = self.rng.standard_normal()
        uu = self.rng.random()
        prop = self.phi * np.exp(self.steps["phi"] * z)
        self._ensure_selection()
        if self.config.likelihood_off:
            ll_p = ll_c = 0.0
            theta_sel_p = self.theta_sel
        else:
            spec_p = self._copspec(phi=prop)
            theta_sel_p = np.ones(self.n)
            theta_sel_p[1:] = copulas.link(spec_p, self.dist_sel[1:])
            ll_p = self.kern.pair_loglik_sum(
                self.fam, self.tr1, self.tr2, self.sel,
                np.ascontiguousarray(theta_sel_p),
            )
            ll_c = self._pair_sum_current()
        a, b = self.priors.phi
        dlt = (ll_p - ll_c
               + _log_invgamma_pdf(prop, a, b) - _log_invgamma_pdf(self.phi, a, b)
               + np.log(prop) - np.log(self.phi))
        if self._mh_finish("phi", dlt, adapt, post_burnin, uu):
            self.phi = float(prop)
            self.theta = theta_grid(self._copspec(), self.neigh_dist)
            self.theta_sel = np.ascontiguousarray(theta_sel_p)

    def _update_zeta(self, adapt=False, post_burnin=True):
        z = self.rng.standard_normal()
        uu = self.rng.random()
        prop = self.zeta * np.exp(self.steps["zeta"] * z)
        rstar_p = weights.cutoff_logits_grid(self.neigh_dist, self.nneigh, prop)
        ok = True
        if self.n > 2:
            idx = np.arange(2, self.n)
            lo = rstar_p[idx, self.ell[2:]]
            hi = rstar_p[idx, self.ell[2:] + 1]
            ok = bool(np.all((self.t[2:] > lo) & (self.t[2:] < hi)))
        a, b = self.priors.zeta
        if ok:
            dlt = (_log_invgamma_pdf(prop, a, b) - _log_invgamma_pdf(self.zeta, a, b)
                   + np.log(prop) - np.log(self.zeta))
        else:
            dlt = -np.inf
        if self._mh_finish("zeta", dlt, adapt, post_burnin, uu):
            self.zeta = float(prop)
            self.rstar = rstar_p

    # -- sweeps and the chain -------------------------------------------------

    def _blocks(self):
        if self.config.blocks is not None:
            return self.config.blocks
        if self.model.marginal == "poisson":
            return ("lam", "phi", "zeta")
        return ("beta", "r", "phi", "zeta")

    def sweep(self, adapt=False, post_burnin=True):
        if self.config.update_t_ell:
            self.update_t_and_ell()
        if self.config.update_o:
            self.update_o(post_burnin=post_burnin)
        self.update_gamma_kappa2()
        for block in self._blocks():
            self.update_metropolis_block(block, adapt=adapt, post_burnin=post_burnin)

    def state(self) -> ModelState:
        st = ModelState(
            phi=self.phi, zeta=self.zeta, gamma=self.gamma.copy(),
            kappa2=self.kappa2, o=self.o.copy(), t=self.t.copy(),
            ell=self.ell.copy(),
        )
        if self.model.marginal == "poisson":
            st.lam = self.lam
        else:
            st.beta = self.beta.copy()
            st.r = self.r
        return st

    def set_state(self, state: ModelState):
        """Install a full state and refresh every cache."""
        self.phi = float(state.phi)
        self.zeta = float(state.zeta)
        self.gamma = np.asarray(state.gamma, dtype=float).copy()
        self.kappa2 = float(state.kappa2)
        if self.model.marginal == "poisson":
            self.lam = float(state.lam)
        else:
            self.beta = np.asarray(state.beta, dtype=float).copy()
            self.r = float(state.r)
        self.o = np.asarray(state.o, dtype=float).copy()
        self.t = np.asarray(state.t, dtype=float).copy()
        self.ell = np.ascontiguousarray(state.ell, dtype=np.int32)
        self.cdf_ym1, self.pmf_y, self.logpmf_y = marginal_arrays(
            self.model, self.y, self.X, self._params()
        )
        self._refresh_u()
        self.theta = theta_grid(self._copspec(), self.neigh_dist)
        self.rstar = weights.cutoff_logits_grid(
            self.neigh_dist, self.nneigh, self.zeta
        )
        self._refresh_mu()
        self._sel_dirty = True

    def config_joint_loglik(self):
        """Log density of the continued data jointly with the current labels:
        marginal terms, chosen-pair copula terms and chosen-label weights."""
        self._ensure_selection()
        total = self._pair_sum_current() + float(np.sum(self.logpmf_y))
        if self.n > 2:
            wgrid = weights.weight_grid(
                self.rstar, self.nneigh, self.mu, float(np.sqrt(self.kappa2))
            )
            idx = np.arange(2, self.n)
            wsel = wgrid[idx, self.ell[2:]]
            total += float(np.sum(np.log(np.maximum(wsel, 1e-300))))
        return total

    def log_likelihood(self):
        """Log likelihood of the continued model: marginal terms plus the
        per-site log of the weight-mixed copula densities."""
        total = float(np.sum(self.logpmf_y))
        n = self.n
        if n < 2:
            return total
        wgrid = weights.weight_grid(
            self.rstar, self.nneigh, self.mu, float(np.sqrt(self.kappa2))
        )
        rows = slice(1, n)
        j = self.neigh_idx[rows]
        with np.errstate(divide="ignore", invalid="ignore"):
            logc = copulas.pair_logdensity(
                self.model.copula,
                self.tr1[rows, None], self.tr2[rows, None],
                self.tr1[j], self.tr2[j],
                self.theta[rows],
            )
            lw = np.where(wgrid[rows] > 0, np.log(np.maximum(wgrid[rows], 1e-300)),
                          -np.inf)
            logits = np.where(np.isfinite(lw), lw + logc, -np.inf)
        total += float(np.sum(special.logsumexp(logits, axis=1)))
        return total

    def run(self) -> "PosteriorSamples":
        cfg = self.config
        n_keep = (cfg.n_iter - cfg.burnin) // cfg.thin
        store = {
            "phi": np.empty(n_keep), "zeta": np.empty(n_keep),
            "kappa2": np.empty(n_keep), "gamma": np.empty((n_keep, 3)),
            "o": np.empty((n_keep, self.n)), "t": np.empty((n_keep, self.n)),
            "ell": np.empty((n_keep, self.n), dtype=np.int32),
        }
        if self.model.marginal == "poisson":
            store["lam"] = np.empty(n_keep)
        else:
            store["beta"] = np.empty((n_keep, len(self.beta)))
            store["r"] = np.empty(n_keep)
        kept = 0
        for it in range(cfg.n_iter):
            in_burnin = it < cfg.burnin
            self.sweep(adapt=cfg.adapt and in_burnin, post_burnin=not in_burnin)
            if cfg.progress_every and (it + 1) % cfg.progress_every == 0:
                print(f"iteration {it + 1}/{cfg.n_iter}", flush=True)
            if not in_burnin and (it - cfg.burnin) % cfg.thin == cfg.thin - 1:
                store["phi"][kept] = self.phi
                store["zeta"][kept] = self.zeta
                store["kappa2"][kept] = self.kappa2
                store["gamma"][kept] = self.gamma
                store["o"][kept] = self.o
                store["t"][kept] = self.t
                store["ell"][kept] = self.ell
                if self.model.marginal == "poisson":
                    store["lam"][kept] = self.lam
                else:
                    store["beta"][kept] = self.beta
                    store["r"][kept] = self.r
                kept += 1
        meta = {
            "seed": int(cfg.seed),
            "n_iter": cfg.n_iter,
            "burnin": cfg.burnin,
            "thin": cfg.thin,
            "n_sites": self.n,
            "backend": self.kern.BACKEND,
            "final_steps": {k: float(v) for k, v in self.steps.items()},
        }
        return PosteriorSamples(
            model=self.model, priors=self.priors, meta=meta,
            samples=store, acceptance=self.acceptance_rates(),
        )


def run_chain(ref, y, model, priors=None, config=None, X=None, backend=None):
    """Run one chain and return the thinned posterior samples."""
    sampler = GibbsSampler(ref, y, model, priors=priors, config=config, X=X,
                           backend=backend)
    return sampler.run()


def log_likelihood(ref, y, model, state, X=None, priors=None):
    """Log likelihood of the continued model under one state.

    For a single site this is just the continued marginal log density; with
    neighbors it adds the per-site logs of the weight-mixed copula densities.
    """
    y = np.asarray(y, dtype=np.int64)
    if ref.n == 1:
        arrs = marginal_arrays(model, y, X, _state_params(model, state))
        return float(arrs[2][0])
    s = GibbsSampler(ref, y, model, priors=priors,
                     config=ChainConfig(n_iter=1, burnin=0, thin=1), X=X)
    s.set_state(state)
    return s.log_likelihood()


def _state_params(model, state):
    if model.marginal == "poisson":
        return {"lam": state.lam}
    return {"beta": state.beta, "r": state.r}


def fit(sites, y, model, priors=None, config=None, X=None, backend=None):
    """Randomly order the sites (seeded) and run one chain.

    Returns ``(ref, posterior)``; the ordering seed derives from the chain
    seed so a fit is reproducible from its configuration alone.
    """
    from . import geom

    config = config if config is not None else ChainConfig()
    order_seed = np.random.SeedSequence([int(config.seed), 0])
    perm_rng = np.random.default_rng(order_seed)
    coords = geom.as_coords(sites)
    perm = perm_rng.permutation(len(coords))
    ref = geom.build_reference(coords[perm], model.L)
    ref = geom.OrderedReferenceSet(
        ref.sites, ref.L, ref.nneigh, ref.neigh_idx, ref.neigh_dist, perm
    )
    y_ord = np.asarray(y)[perm]
    X_ord = None if X is None else np.asarray(X, dtype=float)[perm]
    post = run_chain(ref, y_ord, model, priors=priors, config=config,
                     X=X_ord, backend=backend)
    post.meta["perm"] = [int(v) for v in perm]
    return ref, post


# ---------------------------------------------------------------------------
# posterior container and serialization

class PosteriorSamples:
    """Thinned chain of model states plus metadata and acceptance rates."""

    def __init__(self, model, priors, meta, samples, acceptance):
        self.model = model
        self.priors = priors
        self.meta = dict(meta)
        self.samples = samples
        self.acceptance = dict(acceptance)

    @property
    def n_samples(self):
        return len(self.samples["phi"])

    def state(self, k) -> ModelState:
        s = self.samples
        st = ModelState(
            phi=float(s["phi"][k]), zeta=float(s["zeta"][k]),
            gamma=np.asarray(s["gamma"][k]), kappa2=float(s["kappa2"][k]),
            o=np.asarray(s["o"][k]), t=np.asarray(s["t"][k]),
            ell=np.asarray(s["ell"][k], dtype=np.int32),
        )
        if self.model.marginal == "poisson":
            st.lam = float(s["lam"][k])
        else:
            st.beta = np.asarray(s["beta"][k])
            st.r = float(s["r"][k])
        return st

    def save(self, path):
        header = {
            "format": "nnmix-posterior",
            "version": 1,
            "model": self.model.to_dict(),
            "priors": self.priors.to_dict(),
            "meta": self.meta,
            "acceptance": self.acceptance,
            "n_samples": self.n_samples,
        }
        names = sorted(self.samples)
        with open(path, "w") as f:
            f.write(json.dumps(header, sort_keys=True) + "\n")
            for k in range(self.n_samples):
                rec = {}
                for name in names:
                    val = self.samples[name][k]
                    if np.ndim(val) == 0:
                        rec[name] = float(val)
                    elif name == "ell":
                        rec[name] = [int(v) for v in val]
                    else:
                        rec[name] = [float(v) for v in val]
                f.write(json.dumps(rec, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path):
        with open(path) as f:
            header = json.loads(f.readline())
            if header.get("format") != "nnmix-posterior":
                raise ValueError(f"{path} is not a posterior file")
            records = [json.loads(line) for line in f if line.strip()]
        model = ModelSpec.from_dict(header["model"])
        priors = Priors.from_dict(header["priors"])
        samples = {}
        if records:
            for name in records[0]:
                col = [rec[name] for rec in records]
                arr = np.asarray(col, dtype=np.int32 if name == "ell" else float)
                samples[name] = arr
        else:
            for name in ("phi", "zeta", "kappa2"):
                samples[name] = np.empty(0)
            samples["gamma"] = np.empty((0, 3))
            for name in ("o", "t"):
                samples[name] = np.empty((0, header["meta"].get("n_sites", 0)))
            samples["ell"] = np.empty(
                (0, header["meta"].get("n_sites", 0)), dtype=np.int32
            )
            if model.marginal == "poisson":
                samples["lam"] = np.empty(0)
            else:
                samples["r"] = np.empty(0)
                samples["beta"] = np.empty((0, 0))
        return cls(model, priors, header["meta"], samples, header["acceptance"])
