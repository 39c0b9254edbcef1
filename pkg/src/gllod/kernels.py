"""Hot element-loop kernels with a numba fast path and a numpy fallback.

Every kernel exists twice: a numba ``@njit`` version compiled lazily on
first use and a vectorized numpy version.  The active path is chosen at
import time: setting the environment variable ``GLLOD_NUMBA=0`` (or
``false``/``off``) forces the numpy fallback, as does an unavailable
numba installation.  Both paths are deterministic (no fastmath, fixed
summation order per path); see benchmarks/bench_kernels.py for a
side-by-side timing.

All kernels take raw arrays: ``tri`` is the (ne, 3) vertex-index array,
``bary`` the (q, 3) barycentric quadrature table, ``w`` the (q,) weights
summing to one, ``area`` the common element area.  Complex nodal fields
arrive as separate real/imaginary float arrays.
"""

import os

import numpy as np

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    numba = None
    HAS_NUMBA = False

_flag = os.environ.get("GLLOD_NUMBA", "1").strip().lower()
USE_NUMBA = HAS_NUMBA and _flag not in ("0", "false", "off")


def using_numba():
    """True when the compiled kernel path is active."""
    return USE_NUMBA


# ----------------------------------------------------------------------
# numpy implementations
# ----------------------------------------------------------------------

def quad_values_numpy(tri, vals, bary):
    """Values of a nodal field at the quadrature points, shape (ne, q)."""
    return vals[tri] @ bary.T


def quartic_integral_numpy(tri, vre, vim, bary, w, area):
    ure = vre[tri] @ bary.T
    uim = vim[tri] @ bary.T
    dens = ure * ure + uim * uim
    return area * float(((1.0 - dens) ** 2 @ w).sum())


def line_coeffs_numpy(tri, ure, uim, dre, dim_, bary, w, area):
    uq_re = ure[tri] @ bary.T
    uq_im = uim[tri] @ bary.T
    dq_re = dre[tri] @ bary.T
    dq_im = dim_[tri] @ bary.T
    s0 = uq_re * uq_re + uq_im * uq_im
    s1 = 2.0 * (uq_re * dq_re + uq_im * dq_im)
    s2 = dq_re * dq_re + dq_im * dq_im
    c = 1.0 - s0
    c0 = (c * c) @ w
    c1 = (-2.0 * c * s1) @ w
    c2 = (s1 * s1 - 2.0 * c * s2) @ w
    c3 = (2.0 * s1 * s2) @ w
    c4 = (s2 * s2) @ w
    return area * np.array([c0.sum(), c1.sum(), c2.sum(), c3.sum(), c4.sum()])


def cubic_load_numpy(tri, vre, vim, bary, w, area, nv):
    uq_re = vre[tri] @ bary.T
    uq_im = vim[tri] @ bary.T
    factor = (uq_re * uq_re + uq_im * uq_im) - 1.0
    fre = factor * uq_re
    fim = factor * uq_im
    wb = bary * w[:, None]  # (q, 3)
    contrib_re = area * (fre @ wb)  # (ne, 3)
    contrib_im = area * (fim @ wb)
    flat = tri.ravel()
    lre = np.bincount(flat, weights=contrib_re.ravel(), minlength=nv)
    lim = np.bincount(flat, weights=contrib_im.ravel(), minlength=nv)
    return lre, lim


def weighted_mass_local_numpy(weight, bary, w, area):
    """Local weighted-mass matrices, shape (ne, 3, 3); weight is (ne, q)."""
    return area * np.einsum("q,eq,qa,qb->eab", w, weight, bary, bary)


def density_quad_values_numpy(tri, vre, vim, bary):
    uq_re = vre[tri] @ bary.T
    uq_im = vim[tri] @ bary.T
    return uq_re * uq_re + uq_im * uq_im


# ----------------------------------------------------------------------
# numba implementations
# ----------------------------------------------------------------------

if HAS_NUMBA:
    _njit = numba.njit(cache=True, fastmath=False)

    @_njit
    def _quartic_integral_nb(tri, vre, vim, bary, w, area):
        ne = tri.shape[0]
        q = bary.shape[0]
        total = 0.0
        for e in range(ne):
            i0, i1, i2 = tri[e, 0], tri[e, 1], tri[e, 2]
            for k in range(q):
                ur = bary[k, 0] * vre[i0] + bary[k, 1] * vre[i1] + bary[k, 2] * vre[i2]
                ui = bary[k, 0] * vim[i0] + bary[k, 1] * vim[i1] + bary[k, 2] * vim[i2]
                r = 1.0 - (ur * ur + ui * ui)
                total += w[k] * r * r
        return area * total

    @_njit
    def _line_coeffs_nb(tri, ure, uim, dre, dim_, bary, w, area):
        ne = tri.shape[0]
        q = bary.shape[0]
        out = np.zeros(5)
        for e in range(ne):
            i0, i1, i2 = tri[e, 0], tri[e, 1], tri[e, 2]
            for k in range(q):
                b0, b1, b2 = bary[k, 0], bary[k, 1], bary[k, 2]
                ur = b0 * ure[i0] + b1 * ure[i1] + b2 * ure[i2]
                ui = b0 * uim[i0] + b1 * uim[i1] + b2 * uim[i2]
                dr = b0 * dre[i0] + b1 * dre[i1] + b2 * dre[i2]
                di = b0 * dim_[i0] + b1 * dim_[i1] + b2 * dim_[i2]
                s0 = ur * ur + ui * ui
                s1 = 2.0 * (ur * dr + ui * di)
                s2 = dr * dr + di * di
                c = 1.0 - s0
                wk = w[k]
                out[0] += wk * c * c
                out[1] += wk * (-2.0 * c * s1)
                out[2] += wk * (s1 * s1 - 2.0 * c * s2)
                out[3] += wk * (2.0 * s1 * s2)
                out[4] += wk * (s2 * s2)
        return area * out

    @_njit
    def _cubic_load_nb(tri, vre, vim, bary, w, area, nv):
        ne = tri.shape[0]
        q = bary.shape[0]
        lre = np.zeros(nv)
        lim = np.zeros(nv)
        for e in range(ne):
            i0, i1, i2 = tri[e, 0], tri[e, 1], tri[e, 2]
            for k in range(q):
                b0, b1, b2 = bary[k, 0], bary[k, 1], bary[k, 2]
                ur = b0 * vre[i0] + b1 * vre[i1] + b2 * vre[i2]
                ui = b0 * vim[i0] + b1 * vim[i1] + b2 * vim[i2]
                factor = area * w[k] * ((ur * ur + ui * ui) - 1.0)
                fr = factor * ur
                fi = factor * ui
                lre[i0] += b0 * fr
                lre[i1] += b1 * fr
                lre[i2] += b2 * fr
                lim[i0] += b0 * fi
                lim[i1] += b1 * fi
                lim[i2] += b2 * fi
        return lre, lim

    @_njit
    def _weighted_mass_local_nb(weight, bary, w, area):
        ne = weight.shape[0]
        q = bary.shape[0]
        out = np.zeros((ne, 3, 3))
        for e in range(ne):
            for k in range(q):
                c = area * w[k] * weight[e, k]
                for a in range(3):
                    ca = c * bary[k, a]
                    for b in range(3):
                        out[e, a, b] += ca * bary[k, b]
        return out

    @_njit
    def _density_quad_values_nb(tri, vre, vim, bary):
        ne = tri.shape[0]
        q = bary.shape[0]
        out = np.empty((ne, q))
        for e in range(ne):
            i0, i1, i2 = tri[e, 0], tri[e, 1], tri[e, 2]
            for k in range(q):
                ur = bary[k, 0] * vre[i0] + bary[k, 1] * vre[i1] + bary[k, 2] * vre[i2]
                ui = bary[k, 0] * vim[i0] + bary[k, 1] * vim[i1] + bary[k, 2] * vim[i2]
                out[e, k] = ur * ur + ui * ui
        return out


# ----------------------------------------------------------------------
# dispatch
# ----------------------------------------------------------------------

if USE_NUMBA:
    def quartic_integral(tri, vre, vim, bary, w, area):
        return _quartic_integral_nb(tri, vre, vim, bary, w, area)

    def line_coeffs(tri, ure, uim, dre, dim_, bary, w, area):
        return _line_coeffs_nb(tri, ure, uim, dre, dim_, bary, w, area)

    def cubic_load(tri, vre, vim, bary, w, area, nv):
        return _cubic_load_nb(tri, vre, vim, bary, w, area, nv)

    def weighted_mass_local(weight, bary, w, area):
        return _weighted_mass_local_nb(weight, bary, w, area)

    def density_quad_values(tri, vre, vim, bary):
        return _density_quad_values_nb(tri, vre, vim, bary)
else:
    quartic_integral = quartic_integral_numpy
    line_coeffs = line_coeffs_numpy
    cubic_load = cubic_load_numpy
    weighted_mass_local = weighted_mass_local_numpy
    density_quad_values = density_quad_values_numpy
