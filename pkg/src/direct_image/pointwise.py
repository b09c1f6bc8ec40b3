"""Constant-coefficient pointwise operators on fiber frames.

The fiber Kaehler form is ``(i/2) sum dz_a ^ dzbar_a`` in flat coordinates, so
the Lefschetz operator, its adjoint, the primitive decomposition and the Hodge
star are constant matrices acting on frame components. All of them preserve
the per-factor charge ``[a in I] - [a in J]``, which is what lets them act on
modal coefficient blocks.
"""

from functools import lru_cache

import numpy as np
from scipy.linalg import null_space

from . import exterior as ext


def charge(I, J, n):
    return tuple(int(a in I) - int(a in J) for a in range(n))


@lru_cache(maxsize=None)
def kahler(n):
    return ext.hermitian_11(np.eye(n))


def in_range(n, p, q):
    return 0 <= p <= n and 0 <= q <= n


@lru_cache(maxsize=None)
def lefschetz(n, p, q, k=1):
    """Matrix of ``omega_k ^ .`` from (p,q) to (p+k,q+k) frames."""
    if not in_range(n, p + k, q + k):
        return np.zeros((0, len(ext.frame(n, p, q))), dtype=complex)
    wk = ext.normalized_power(kahler(n), k)
    return ext.to_matrix(lambda f: ext.wedge(wk, f), n, (p, q), (p + k, q + k))


@lru_cache(maxsize=None)
def lefschetz_adjoint(n, p, q):
    """Pointwise adjoint of ``omega ^ .``, mapping (p,q) to (p-1,q-1)."""
    L = lefschetz(n, p - 1, q - 1)
    ns = ext.flat_frame_norms(n, p - 1, q - 1)
    nt = ext.flat_frame_norms(n, p, q)
    return (L.conj().T * nt) / ns[:, None]


@lru_cache(maxsize=None)
def primitive_projectors(n, p, q):
    """``{r: P_r}`` with ``u = sum_r omega_r ^ (P_r u)`` and each ``P_r u`` primitive."""
    src = ext.frame(n, p, q)
    index = {key: i for i, key in enumerate(src)}
    rmin = max(0, p + q - n)
    rmax = min(p, q)
    out = {r: np.zeros((len(ext.frame(n, p - r, q - r)), len(src)), dtype=complex)
           for r in range(rmin, rmax + 1)}
    groups = {}
    for key in src:
        groups.setdefault(charge(*key, n), []).append(key)
    for ch, keys in groups.items():
        rows = [index[k] for k in keys]
        blocks = []
        for r in range(rmin, rmax + 1):
            fr = ext.frame(n, p - r, q - r)
            cols_r = [i for i, k in enumerate(fr) if charge(*k, n) == ch]
            deg = p + q - 2 * r
            kpow = n - deg + 1
            Lk = lefschetz(n, p - r, q - r, kpow)
            if Lk.shape[0]:
                Lsub = Lk[:, cols_r]
                Z = null_space(Lsub) if Lsub.size else np.eye(len(cols_r))
            else:
                Z = np.eye(len(cols_r))
            Wr = lefschetz(n, p - r, q - r, r) if r else np.eye(len(fr))
            blocks.append((r, cols_r, Z, Wr[np.ix_(rows, cols_r)] @ Z))
        big = np.hstack([b[3] for b in blocks])
        if big.shape[0] != big.shape[1]:
            raise RuntimeError("primitive decomposition is not square")
        inv = np.linalg.inv(big)
        start = 0
        for r, cols_r, Z, _ in blocks:
            m = Z.shape[1]
            out[r][np.ix_(cols_r, rows)] = Z @ inv[start:start + m]
            start += m
    for r in out:
        out[r][np.abs(out[r]) < 1e-14] = 0.0
    return out


def star_coefficient(p, q, r):
    return 1j ** ((p + q - 2 * r) ** 2) * (-1) ** (p - r)


@lru_cache(maxsize=None)
def star(n, p, q):
    """Matrix of the Hodge star from (p,q) to (n-q, n-p) frames."""
    tgt = (n - q, n - p)
    out = np.zeros((len(ext.frame(n, *tgt)), len(ext.frame(n, p, q))), dtype=complex)
    for r, P in primitive_projectors(n, p, q).items():
        k = n + r - p - q
        W = lefschetz(n, p - r, q - r, k) if k else np.eye(P.shape[0])
        out += star_coefficient(p, q, r) * (W @ P)
    out[np.abs(out) < 1e-14] = 0.0
    return out


@lru_cache(maxsize=None)
def star_inverse(n, p, q):
    """Inverse of the star that lands in (p,q); maps (p,q) to (n-q, n-p)."""
    return np.linalg.inv(star(n, n - q, n - p))


@lru_cache(maxsize=None)
def curvature_commutator_basis(n, p, q):
    """``C[a][b]`` = matrix of ``[(i/2) dz_a ^ dzbar_b ^ ., Lambda]`` on (p,q) frames."""
    out = []
    for a in range(n):
        row = []
        for b in range(n):
            theta = {((a,), (b,)): 0.5j}
            if in_range(n, p + 1, q + 1):
                up = ext.to_matrix(lambda f: ext.wedge(theta, f), n, (p, q), (p + 1, q + 1))
                lam_up = lefschetz_adjoint(n, p + 1, q + 1) @ up
            else:
                lam_up = np.zeros((len(ext.frame(n, p, q)),) * 2, dtype=complex)
            if in_range(n, p - 1, q - 1):
                down = ext.to_matrix(lambda f: ext.wedge(theta, f), n, (p - 1, q - 1), (p, q))
                up_lam = down @ lefschetz_adjoint(n, p, q)
            else:
                up_lam = np.zeros_like(lam_up)
            row.append(up_lam - lam_up)
        out.append(row)
    return out

