# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled sampler kernels; mirrors _kernels_py loop-for-loop.

The special functions come from scipy's cython_special so both backends run
the same cephes routines.  Constants here must match copulas.py (UEPS) and
_kernels_py (probability clamps).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, exp, fabs, isfinite, log, log1p, nextafter

from scipy.special.cython_special cimport ndtr, ndtri

BACKEND = "compiled"

cdef double UEPS = 1e-12
cdef double MINP = 1e-300
cdef double MAXP = 1.0 - 1e-16


cdef inline double _logc(int fam, double a1, double b1, double a2, double b2,
                         double theta) noexcept nogil:
    cdef double om, x1, x2, m, ls, y
    if fam == 0:
        om = 1.0 - theta * theta
        return -0.5 * log(om) + (
            2.0 * theta * a1 * a2 - theta * theta * (a1 * a1 + a2 * a2)
        ) / (2.0 * om)
    if fam == 1:
        x1 = theta * b1
        x2 = theta * b2
        m = x1 if x1 > x2 else x2
        ls = m + log(exp(x1 - m) + exp(x2 - m))
        y = exp(ls / theta)
        return (
            -y
            + log(y + theta - 1.0)
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
    ls = m + log(exp(x1 - m) + exp(x2 - m) - exp(-m))
    return log1p(theta) - (theta + 1.0) * (a1 + a2) - (2.0 + 1.0 / theta) * ls


cdef inline void _transform(int fam, double u, double* a, double* b) noexcept nogil:
    cdef double w
    if u < UEPS:
        u = UEPS
    elif u > 1.0 - UEPS:
        u = 1.0 - UEPS
    if fam == 0:
        a[0] = ndtri(u)
        b[0] = 0.0
    elif fam == 1:
        w = -log1p(u - 1.0)
        a[0] = w
        b[0] = log(w)
    else:
        a[0] = log(u)
        b[0] = 0.0


def transform_arrays(family, u):
    cdef int fam = <int> family
    u_arr = np.ascontiguousarray(u, dtype=np.float64)
    cdef double[::1] uv = u_arr.ravel()
    out1 = np.empty(uv.shape[0])
    out2 = np.empty(uv.shape[0])
    cdef double[::1] o1 = out1
    cdef double[::1] o2 = out2
    cdef Py_ssize_t i
    cdef double a, b
    for i in range(uv.shape[0]):
        _transform(fam, uv[i], &a, &b)
        o1[i] = a
        o2[i] = b
    return out1.reshape(np.shape(u)), out2.reshape(np.shape(u))


def tl_update(family,
              double[::1] tr1, double[::1] tr2,
              int[::1] nneigh, int[:, ::1] neigh_idx,
              double[:, ::1] theta, double[:, ::1] rstar,
              double[::1] mu, double kappa,
              double[::1] ucat, double[::1] utn,
              double[::1] t, int[::1] ell):
    cdef int fam = <int> family
    cdef Py_ssize_t n = neigh_idx.shape[0]
    cdef Py_ssize_t L = neigh_idx.shape[1]
    cdef Py_ssize_t i, l, j, lstar, il
    cdef int nbad = 0
    cdef double m, wl, pl, pu, lw, lc, total, cum, target
    cdef double lo, hi, a, b, pdraw, tval
    cdef double[64] logits  # large enough for any sane L
    if L > 64:
        raise ValueError("neighbor budget above compiled kernel limit (64)")
    with nogil:
        for i in range(2, n):
            il = nneigh[i]
            m = -INFINITY
            for l in range(il):
                pl = ndtr((rstar[i, l] - mu[i]) / kappa)
                pu = ndtr((rstar[i, l + 1] - mu[i]) / kappa)
                wl = pu - pl
                if wl > 0.0:
                    lw = log(wl if wl > MINP else MINP)
                    j = neigh_idx[i, l]
                    lc = _logc(fam, tr1[i], tr2[i], tr1[j], tr2[j], theta[i, l])
                    lw = lw + lc
                    if not isfinite(lw):
                        lw = -INFINITY
                else:
                    lw = -INFINITY
                logits[l] = lw
                if lw > m:
                    m = lw
            if not isfinite(m):
                nbad += 1
                continue
            total = 0.0
            for l in range(il):
                total += exp(logits[l] - m)
            target = ucat[i] * total
            cum = 0.0
            lstar = il - 1
            for l in range(il):
                cum += exp(logits[l] - m)
                if cum > target:
                    lstar = l
                    break
            lo = rstar[i, lstar]
            hi = rstar[i, lstar + 1]
            a = ndtr((lo - mu[i]) / kappa)
            b = ndtr((hi - mu[i]) / kappa)
            pdraw = a + utn[i] * (b - a)
            if pdraw < MINP:
                pdraw = MINP
            elif pdraw > MAXP:
                pdraw = MAXP
            tval = mu[i] + kappa * ndtri(pdraw)
            if isfinite(lo) and tval <= lo:
                tval = nextafter(lo, INFINITY)
            if isfinite(hi) and tval >= hi:
                tval = nextafter(hi, -INFINITY)
            t[i] = tval
            ell[i] = <int> lstar
    return nbad


def o_update(family,
             double[::1] cdf_ym1, double[::1] pmf_y,
             int[::1] sel, double[::1] theta_sel,
             long[::1] dep_ptr, int[::1] dep_idx,
             double[::1] oprop, double[::1] uacc, active,
             double[::1] o, double[::1] u,
             double[::1] tr1, double[::1] tr2):
    cdef int fam = <int> family
    cdef Py_ssize_t n = o.shape[0]
    cdef Py_ssize_t i, q, k, jj
    cdef int nacc = 0
    cdef double up, a_new, b_new, delta, th
    cdef cnp.uint8_t[::1] act
    cdef bint has_mask = active is not None
    if has_mask:
        act = np.ascontiguousarray(active, dtype=np.uint8)
    with nogil:
        for i in range(n):
            if has_mask and act[i] == 0:
                continue
            up = cdf_ym1[i] + (1.0 - oprop[i]) * pmf_y[i]
            _transform(fam, up, &a_new, &b_new)
            delta = 0.0
            if i >= 1:
                jj = sel[i]
                th = theta_sel[i]
                delta += _logc(fam, a_new, b_new, tr1[jj], tr2[jj], th)
                delta -= _logc(fam, tr1[i], tr2[i], tr1[jj], tr2[jj], th)
            for q in range(dep_ptr[i], dep_ptr[i + 1]):
                k = dep_idx[q]
                th = theta_sel[k]
                delta += _logc(fam, tr1[k], tr2[k], a_new, b_new, th)
                delta -= _logc(fam, tr1[k], tr2[k], tr1[i], tr2[i], th)
            if log(uacc[i]) < delta:
                o[i] = oprop[i]
                u[i] = up
                tr1[i] = a_new
                tr2[i] = b_new
                nacc += 1
    return nacc


def pair_loglik_sum(family,
                    double[::1] tr1, double[::1] tr2,
                    int[::1] sel, double[::1] theta_sel):
    cdef int fam = <int> family
    cdef Py_ssize_t n = tr1.shape[0]
    cdef Py_ssize_t i, j
    cdef double total = 0.0
    with nogil:
        for i in range(1, n):
            j = sel[i]
            total += _logc(fam, tr1[i], tr2[i], tr1[j], tr2[j], theta_sel[i])
    return total
