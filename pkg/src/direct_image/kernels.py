"""Hot numerical kernels, each with a numba and a pure-numpy implementation.

The public names dispatch on :data:`direct_image._accel.USE_NUMBA`; both
variants are importable directly so tests and the benchmark can compare them.
"""

import math

import numpy as np

from ._accel import USE_NUMBA, njit

_PI_QUARTER = math.pi ** -0.25


def _image_range(d, nlevels, kappa_r):
    # Hermite functions of level < nlevels are below ~1e-17 beyond |xi| = sqrt(2n+1) + 9.
    umax = (math.sqrt(2.0 * nlevels + 1.0) + 9.0) / math.sqrt(kappa_r)
    return int(math.ceil(umax)) + 2


def landau_values_numpy(x, y, d, nlevels, kappa_r, kappa_i):
    """Values of the Landau-level basis of a degree ``d`` line bundle.

    Column ``k * |d| + j`` holds level ``k``, guiding centre ``j``; points are
    given in lattice coordinates ``(x, y)``. Normalised to unit mass on the
    unit square.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    ad = abs(d)
    out = np.zeros((x.size, nlevels * ad), dtype=np.complex128)
    nimg = _image_range(d, nlevels, kappa_r)
    sq = math.sqrt(kappa_r)
    pref = kappa_r ** 0.25
    for j in range(ad):
        for l in range(-nimg, nimg + 1):
            u = x - j / d - l
            xi = sq * u
            if np.min(np.abs(xi)) > math.sqrt(2.0 * nlevels + 1.0) + 9.0:
                continue
            phase = pref * np.exp(-0.5j * kappa_i * u * u + 2j * math.pi * (j + l * d) * y)
            h_prev = np.zeros_like(xi)
            h = _PI_QUARTER * np.exp(-0.5 * xi * xi)
            for k in range(nlevels):
                out[:, k * ad + j] += h * phase
                h_next = math.sqrt(2.0 / (k + 1)) * xi * h - math.sqrt(k / (k + 1.0)) * h_prev
                h_prev, h = h, h_next
    return out


@njit
def _landau_values_loop(x, y, d, nlevels, kappa_r, kappa_i, nimg):
    ad = abs(d)
    npts = x.shape[0]
    out = np.zeros((npts, nlevels * ad), dtype=np.complex128)
    sq = math.sqrt(kappa_r)
    pref = kappa_r ** 0.25
    cut = math.sqrt(2.0 * nlevels + 1.0) + 9.0
    for p in range(npts):
        for j in range(ad):
            for l in range(-nimg, nimg + 1):
                u = x[p] - j / d - l
                xi = sq * u
                if abs(xi) > cut:
                    continue
                arg = -0.5 * kappa_i * u * u + 2.0 * math.pi * (j + l * d) * y[p]
                phase = pref * (math.cos(arg) + 1j * math.sin(arg))
                h_prev = 0.0
                h = _PI_QUARTER * math.exp(-0.5 * xi * xi)
                for k in range(nlevels):
                    out[p, k * ad + j] += h * phase
                    h_next = math.sqrt(2.0 / (k + 1)) * xi * h - math.sqrt(k / (k + 1.0)) * h_prev
                    h_prev = h
                    h = h_next
    return out


def landau_values_numba(x, y, d, nlevels, kappa_r, kappa_i):
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    nimg = _image_range(d, nlevels, kappa_r)
    return _landau_values_loop(x, y, int(d), int(nlevels), float(kappa_r), float(kappa_i), nimg)


def weighted_gram_numpy(basis, weights):
    """``B^H diag(w) B`` for a stack of quadrature weights."""
    return (basis.conj().T * weights) @ basis


@njit
def _pair_products(b):
    # K[a * n + c, p] = conj(b[p, a]) * b[p, c]
    npts, n = b.shape
    out = np.empty((n * n, npts), dtype=np.complex128)
    for a in range(n):
        for c in range(n):
            for p in range(npts):
                out[a * n + c, p] = np.conj(b[p, a]) * b[p, c]
    return out


@njit
def _tensor_gram_loop(b1, b2, w):
    # M[(a,b),(c,e)] = sum_{p,q} conj(b1[p,a]) b1[p,c] w[p,q] conj(b2[q,b]) b2[q,e]
    n1 = b1.shape[1]
    n2 = b2.shape[1]
    k1 = _pair_products(b1)
    k2 = _pair_products(b2)
    s = np.dot(np.dot(k1, w), k2.T)  # (a c, b e)
    out = np.empty((n1 * n2, n1 * n2), dtype=np.complex128)
    for a in range(n1):
        for c in range(n1):
            for b in range(n2):
                for e in range(n2):
                    out[a * n2 + b, c * n2 + e] = s[a * n1 + c, b * n2 + e]
    return out


def tensor_gram_numpy(b1, b2, w):
    """Weighted Gram of the tensor basis ``b1 (x) b2`` against weights ``w[p1, p2]``."""
    t = np.einsum("pa,pc,pq->acq", b1.conj(), b1, w, optimize=True)
    m = np.einsum("acq,qb,qe->abce", t, b2.conj(), b2, optimize=True)
    n1, n2 = b1.shape[1], b2.shape[1]
    return m.reshape(n1 * n2, n1 * n2)


def tensor_gram_numba(b1, b2, w):
    return _tensor_gram_loop(
        np.ascontiguousarray(b1, dtype=np.complex128),
        np.ascontiguousarray(b2, dtype=np.complex128),
        np.ascontiguousarray(w, dtype=np.complex128),
    )


if USE_NUMBA:
    landau_values = landau_values_numba
    tensor_gram = tensor_gram_numba
else:
    landau_values = landau_values_numpy
    tensor_gram = tensor_gram_numpy

weighted_gram = weighted_gram_numpy
