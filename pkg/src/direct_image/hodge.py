"""Fiberwise Hodge theory on a :class:`~direct_image.torus.FiberCalculus`."""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh

from . import pointwise as pw
from .errors import AmbiguousKernel, BidegreeError, NotSolvable, SingularCommutator
from .torus import FormSection, GridForm


@dataclass
class LefschetzSplit:
    bidegree: tuple
    components: dict  # r -> FormSection of bidegree (p-r, q-r)

    def reassemble(self, fiber):
        p, q = self.bidegree
        out = fiber.zero(p, q)
        for r, ur in self.components.items():
            if r:
                ur = FormSection((p, q), fiber.lefschetz(p - r, q - r, r) @ ur.coefficients)
            out = out + ur
        return out

    def primitivity_residuals(self, fiber):
        n = fiber.n
        res = {}
        for r, ur in self.components.items():
            a, b = ur.bidegree
            k = n - (a + b) + 1
            if not pw.in_range(n, a + k, b + k):
                res[r] = 0.0
                continue
            img = FormSection((a + k, b + k), fiber.lefschetz(a, b, k) @ ur.coefficients)
            nu = np.sqrt(max(fiber.inner(ur, ur).real, 0.0))
            res[r] = np.sqrt(max(fiber.inner(img, img).real, 0.0)) / nu if nu > 0 else 0.0
        return res


def lefschetz_decompose(fiber, u):
    p, q = u.bidegree
    n = fiber.n
    if not pw.in_range(n, p, q):
        raise BidegreeError(f"bidegree ({p},{q}) out of range")
    comps = {}
    for r, P in pw.primitive_projectors(n, p, q).items():
        mat = fiber.const_operator(P, (p, q), (p - r, q - r))
        comps[r] = FormSection((p - r, q - r), mat @ u.coefficients)
    return LefschetzSplit((p, q), comps)


def hodge_star(fiber, u):
    p, q = u.bidegree
    n = fiber.n
    return FormSection((n - q, n - p), fiber.star(p, q) @ u.coefficients)


def hodge_star_inverse(fiber, u):
    p, q = u.bidegree
    n = fiber.n
    return FormSection((n - q, n - p), fiber.star_inverse(p, q) @ u.coefficients)


def _canonical_phase(vecs):
    # largest-magnitude coefficient made real positive; returns the pivot indices
    pivots = np.argmax(np.abs(vecs), axis=0)
    for c, i in enumerate(pivots):
        z = vecs[i, c]
        vecs[:, c] *= np.conj(z) / abs(z)
    return pivots


@dataclass
class HarmonicProjector:
    bidegree: tuple
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # M-orthonormal columns, canonically ordered and phased
    dimension: int
    threshold: float
    gap_ratio: float  # smallest nonzero eigenvalue / threshold
    kernel_ratio: float  # largest kernel eigenvalue / threshold
    gram: np.ndarray

    @property
    def basis_matrix(self):
        return self.eigenvectors[:, : self.dimension]

    @property
    def basis(self):
        return [FormSection(self.bidegree, self.basis_matrix[:, i]) for i in range(self.dimension)]

    @property
    def projection(self):
        V = self.basis_matrix
        return V @ (V.conj().T @ self.gram)

    @property
    def green(self):
        V = self.eigenvectors[:, self.dimension:]
        lam = self.eigenvalues[self.dimension:]
        return (V / lam) @ (V.conj().T @ self.gram)

    def project(self, u):
        return FormSection(self.bidegree, self.projection @ u.coefficients)


def harmonic_projector(fiber, p, q, threshold=None):
    """Harmonic space, projector and Green operator of the dbar-Laplacian on (p,q)."""
    key = ("harmonic", p, q, threshold)
    if key in fiber._cache:
        return fiber._cache[key]
    thr_rel = fiber.threshold if threshold is None else float(threshold)
    M, A = fiber.laplacian_forms(p, q)
    lam, V = eigh(A, M)
    lam_max = float(np.max(np.abs(lam))) if lam.size else 0.0
    thr = thr_rel * lam_max if lam_max > 0 else thr_rel
    kernel = lam <= thr
    dim = int(kernel.sum())
    ambiguous = (lam > 0.1 * thr) & (lam < 10 * thr)
    if np.any(ambiguous):
        raise AmbiguousKernel(
            f"eigenvalues within a factor 10 of the threshold {thr:.3e} on ({p},{q})",
            eigenvalues=lam[ambiguous], threshold=thr)
    nonzero = lam[~kernel]
    gap_ratio = float(nonzero.min() / thr) if nonzero.size else float("inf")
    kernel_ratio = float(np.abs(lam[kernel]).max() / thr) if dim else 0.0
    V = V.copy()
    pivots = _canonical_phase(V)
    # eigenvalue order; within the kernel, order by pivot index
    order_key = [(0.0 if kernel[i] else lam[i], int(pivots[i]) if kernel[i] else 0, i) for i in range(len(lam))]
    order = [k[2] for k in sorted(order_key)]
    proj = HarmonicProjector((p, q), lam[order], V[:, order], dim, thr, gap_ratio, kernel_ratio, M)
    fiber._cache[key] = proj
    return proj


def exact_projection(fiber, p, q):
    """Orthogonal projection onto the image of dbar in (p,q)."""
    G = harmonic_projector(fiber, p, q).green
    if q == 0:
        return np.zeros_like(G)
    return fiber.dbar(p, q - 1) @ fiber.dbar_adj(p, q) @ G


def coexact_projection(fiber, p, q):
    """Orthogonal projection onto the image of dbar* in (p,q)."""
    G = harmonic_projector(fiber, p, q).green
    if q == fiber.n:
        return np.zeros_like(G)
    return fiber.dbar_adj(p, q + 1) @ fiber.dbar(p, q) @ G


def _norm(fiber, u):
    return float(np.sqrt(max(fiber.inner(u, u).real, 0.0)))


def dbar_minimal_solve(fiber, v, tol=1e-9):
    """L^2-minimal solution of ``dbar a = v`` for a dbar-exact v."""
    p, q1 = v.bidegree
    if q1 < 1:
        raise BidegreeError("right-hand side must have q >= 1")
    nv = _norm(fiber, v)
    if nv == 0:
        return fiber.zero(p, q1 - 1)
    closed = 0.0
    if q1 + 1 <= fiber.n:
        dv = FormSection((p, q1 + 1), fiber.dbar(p, q1) @ v.coefficients)
        closed = _norm(fiber, dv) / nv
    harm = _norm(fiber, harmonic_projector(fiber, p, q1).project(v)) / nv
    if closed > tol or harm > tol:
        raise NotSolvable(
            f"right-hand side is not exact: closedness residual {closed:.3e}, harmonic part {harm:.3e}",
            closed_residual=closed, harmonic_residual=harm)
    G = harmonic_projector(fiber, p, q1).green
    a = FormSection((p, q1 - 1), fiber.dbar_adj(p, q1) @ (G @ v.coefficients))
    return a


def fiber_curvature(fiber):
    """Pointwise Hermitian matrix of ``i Theta(E_t)`` relative to ``(i/2) dz ^ dzbar``."""
    n = fiber.n
    out = np.zeros((n, n, fiber.npoints), dtype=complex)
    bg = fiber.background_curvature()
    for a in range(n):
        out[a, a] += bg[a]
        for b in range(n):
            out[a, b] += 2 * fiber.weight.dz_dzbar(fiber.coords, fiber.factors, a, b)
    return out


def commutator_field(fiber, curvature, p, q):
    """Pointwise matrices of ``[i Theta, Lambda]`` on (p,q) frames, shape (npts, k, k)."""
    n = fiber.n
    C = pw.curvature_commutator_basis(n, p, q)
    k = C[0][0].shape[0]
    npts = curvature.shape[-1]
    Q = np.zeros((npts, k, k), dtype=complex)
    for a in range(n):
        for b in range(n):
            Q += curvature[a, b][:, None, None] * C[a][b][None]
    return Q


def default_eps(fiber, curvature=None, q=0):
    curv = fiber_curvature(fiber) if curvature is None else curvature
    Q = commutator_field(fiber, curv, fiber.n, min(q + 1, fiber.n))
    top = float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (Q + Q.conj().transpose(0, 2, 1)))))) if Q.size else 0.0
    return 1e-6 * (top if top > 0 else 1.0)


def commutator_inverse(fiber, curvature, eps, v):
    """Pointwise ``([i Theta, Lambda] + eps)^{-1} v`` for an (n, q+1)-form ``v``."""
    if isinstance(v, FormSection):
        v = fiber.synthesize(v)
    p, q1 = v.bidegree
    n = fiber.n
    if p != n or q1 < 1:
        raise BidegreeError(f"commutator inverse needs an (n, q+1)-form, got {v.bidegree}")
    if curvature is None:
        curvature = fiber_curvature(fiber)
    if eps < 0:
        raise ValueError("eps must be non-negative")
    Q = commutator_field(fiber, curvature, p, q1)
    Q = Q + eps * np.eye(Q.shape[1])[None]
    if eps == 0:
        ev = np.linalg.eigvalsh(0.5 * (Q + Q.conj().transpose(0, 2, 1)))
        bad = np.nonzero(ev.min(axis=1) <= 0)[0]
        if bad.size:
            raise SingularCommutator(f"commutator not positive at {bad.size} grid points", points=bad.tolist())
    comps = list(fiber.space(p, q1).comps)
    stack = np.stack([np.asarray(v.values.get(c, np.zeros(fiber.npoints)), dtype=complex) for c in comps], axis=1)
    sol = np.linalg.solve(Q, stack[..., None])[..., 0]
    return GridForm((p, q1), {c: sol[:, i] for i, c in enumerate(comps)})


def apply_commutator(fiber, curvature, eps, gf):
    p, q1 = gf.bidegree
    Q = commutator_field(fiber, curvature, p, q1) + eps * np.eye(len(fiber.space(p, q1).comps))[None]
    comps = list(fiber.space(p, q1).comps)
    stack = np.stack([np.asarray(gf.values.get(c, np.zeros(fiber.npoints)), dtype=complex) for c in comps], axis=1)
    out = np.einsum("pij,pj->pi", Q, stack)
    return GridForm((p, q1), {c: out[:, i] for i, c in enumerate(comps)})


def grid_inner(fiber, u, v):
    """Quadrature inner product of two pointwise forms of equal bidegree."""
    if u.bidegree != v.bidegree:
        raise BidegreeError("bidegree mismatch")
    p, q = u.bidegree
    total = 0j
    for c, val in u.values.items():
        if c in v.values:
            total += np.sum(fiber.measure * val * np.conj(v.values[c]))
    return complex(2.0 ** (p + q) * total)
