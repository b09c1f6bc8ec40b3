"""Pointwise exterior algebra of (p,q)-forms on C^N.

A form is a dict mapping ``(I, J)`` (sorted index tuples for the holomorphic
and antiholomorphic parts) to a coefficient, which may be a scalar or a numpy
array (one value per sample point). Frames are ``dz^I ^ dzbar^J`` with the
holomorphic block written first.
"""

from itertools import combinations

import numpy as np


def frame(N, p, q):
    """Frame multi-indices of (p,q)-forms on C^N in lexicographic order."""
    return [(I, J) for I in combinations(range(N), p) for J in combinations(range(N), q)]


def _merge(A, B):
    # sign of sorting the concatenation A + B, 0 when they overlap
    if set(A) & set(B):
        return 0, None
    seq = list(A) + list(B)
    inv = sum(1 for i in range(len(seq)) for j in range(i + 1, len(seq)) if seq[i] > seq[j])
    return (-1) ** inv, tuple(sorted(seq))


def add(*forms):
    out = {}
    for f in forms:
        for key, c in f.items():
            out[key] = out[key] + c if key in out else c
    return out


def scale(form, c):
    return {key: c * v for key, v in form.items()}


def wedge(a, b):
    out = {}
    for (I, J), ca in a.items():
        for (K, L), cb in b.items():
            s1, IK = _merge(I, K)
            if s1 == 0:
                continue
            s2, JL = _merge(J, L)
            if s2 == 0:
                continue
            sign = s1 * s2 * (-1) ** (len(J) * len(K))
            key = (IK, JL)
            term = sign * ca * cb
            out[key] = out[key] + term if key in out else term
    return out


def conj(a):
    return {(J, I): (-1) ** (len(I) * len(J)) * np.conj(c) for (I, J), c in a.items()}


def interior(v, a):
    """Contraction with the (1,0)-vector ``sum v[i] d/dz_i``."""
    out = {}
    for (I, J), c in a.items():
        for pos, i in enumerate(I):
            if v[i] is None:
                continue
            key = (I[:pos] + I[pos + 1:], J)
            term = (-1) ** pos * v[i] * c
            out[key] = out[key] + term if key in out else term
    return out


def interior_bar(v, a):
    """Contraction with the (0,1)-vector ``sum conj(v[j]) d/dzbar_j``."""
    out = {}
    for (I, J), c in a.items():
        for pos, j in enumerate(J):
            if v[j] is None:
                continue
            key = (I, J[:pos] + J[pos + 1:])
            term = (-1) ** (len(I) + pos) * np.conj(v[j]) * c
            out[key] = out[key] + term if key in out else term
    return out


def hermitian_11(h):
    """The real (1,1)-form ``(i/2) sum h[a][b] dz_a ^ dzbar_b``."""
    N = len(h)
    return {((a,), (b,)): 0.5j * h[a][b] for a in range(N) for b in range(N)
            if not (np.isscalar(h[a][b]) and h[a][b] == 0)}


def normalized_power(w, k):
    """``w^k / k!`` (empty product is the constant 1)."""
    out = {((), ()): 1.0}
    for j in range(1, k + 1):
        out = scale(wedge(out, w), 1.0 / j)
    return out


def top_coefficient(a, N):
    full = tuple(range(N))
    return a.get((full, full), 0.0)


def restrict(a, keep):
    """Pull back to the coordinate subspace spanned by indices in ``keep``."""
    ks = set(keep)
    return {(I, J): c for (I, J), c in a.items() if set(I) <= ks and set(J) <= ks}


def relabel(a, mapping):
    return {(tuple(mapping[i] for i in I), tuple(mapping[j] for j in J)): c for (I, J), c in a.items()}


def bidegree_part(a, p, q):
    return {(I, J): c for (I, J), c in a.items() if len(I) == p and len(J) == q}


def to_matrix(op, N, src, tgt):
    """Matrix of a linear map on frames ``(p,q) -> (p',q')`` given as a callable on forms."""
    sf = frame(N, *src)
    tf = frame(N, *tgt)
    index = {key: i for i, key in enumerate(tf)}
    mat = np.zeros((len(tf), len(sf)), dtype=complex)
    for col, key in enumerate(sf):
        for k2, c in op({key: 1.0}).items():
            if k2 in index:
                mat[index[k2], col] += c
            elif abs(c) > 0:
                raise ValueError(f"operator left the target bidegree at {k2}")
    return mat


def flat_frame_norms(N, p, q):
    """Squared pointwise norms of the frames for ``(i/2) sum dz ^ dzbar``."""
    return np.array([2.0 ** (p + q) for _ in frame(N, p, q)])
