"""Discrete calculus of line-bundle-valued (p,q)-forms on flat tori and their products.

Sections are stored as modal coefficients in the per-factor spectral bases of
:mod:`direct_image.basis`; pointwise work uses the uniform grid of each factor
as quadrature. ``dbar`` is assembled from exact ladder matrices, adjoints are
conjugate transposes with respect to the weighted Gram matrices, and the
weighted (1,0) derivative is defined through the Hodge star so that both
complexes are exact as matrix products.
"""

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import exterior as ext
from . import kernels
from . import pointwise as pw
from .basis import FactorBasis
from .errors import BidegreeError, FluxInconsistency, NonRealWeight, OddResolution
from .fields import FourierMode


@dataclass(frozen=True)
class TorusFactor:
    tau: complex
    area: float = 1.0


@dataclass(frozen=True)
class TorusGeometry:
    factors: tuple
    resolution: int = 16

    def __post_init__(self):
        facs = tuple(f if isinstance(f, TorusFactor) else TorusFactor(*f) for f in self.factors)
        object.__setattr__(self, "factors", facs)
        if len(facs) not in (1, 2):
            raise ValueError("fiber dimension must be 1 or 2")
        for f in facs:
            if complex(f.tau).imag <= 0:
                raise ValueError(f"modulus {f.tau} is not in the upper half plane")
            if f.area <= 0:
                raise ValueError("factor areas must be positive")
        if int(self.resolution) != self.resolution or self.resolution < 8:
            raise ValueError("resolution must be an integer >= 8")
        if self.resolution % 2:
            raise OddResolution(f"resolution {self.resolution} is odd")

    @property
    def n(self):
        return len(self.factors)


@dataclass(frozen=True)
class LineBundleData:
    degrees: tuple
    background_weight: tuple = None
    characters: tuple = None  # per-factor flat twist (alpha, beta), degree-0 factors only

    def __post_init__(self):
        object.__setattr__(self, "degrees", tuple(int(d) for d in self.degrees))
        if self.characters is not None:
            chars = tuple((float(a), float(b)) for a, b in self.characters)
            if len(chars) != len(self.degrees):
                raise FluxInconsistency("one character per factor is required")
            for d, c in zip(self.degrees, chars):
                if d != 0 and any(c):
                    raise FluxInconsistency("character twists need degree-0 factors")
            object.__setattr__(self, "characters", chars)
        if self.background_weight is not None:
            object.__setattr__(self, "background_weight", tuple(float(b) for b in self.background_weight))


@dataclass(frozen=True)
class FiberWeight:
    """Real finite Fourier polynomial ``sum coef * mode`` on the fiber."""

    terms: tuple = ()

    def __post_init__(self):
        terms = []
        for coef, mode in self.terms:
            if np.iscomplexobj(coef) and abs(np.imag(coef)) > 0:
                raise NonRealWeight(f"weight coefficient {coef} is not real")
            if not isinstance(mode, FourierMode):
                mode = FourierMode(*mode)
            terms.append((float(np.real(coef)), mode))
        object.__setattr__(self, "terms", tuple(terms))

    def value(self, coords):
        out = np.zeros_like(np.asarray(coords[0][0], dtype=float))
        for c, m in self.terms:
            out = out + c * m.value(coords)
        return out

    def dz(self, coords, factors, a):
        out = np.zeros_like(np.asarray(coords[0][0], dtype=complex))
        for c, m in self.terms:
            out = out + c * m.dz(coords, factors, a)
        return out

    def dz_dzbar(self, coords, factors, a, b):
        out = np.zeros_like(np.asarray(coords[0][0], dtype=complex))
        for c, m in self.terms:
            out = out + c * m.dz_dzbar(coords, factors, a, b)
        return out


def link_phases(factor_basis):
    """Gauge link angles ``(theta_x, theta_y)`` on the N x N grid of one factor.

    ``theta_x[i, j]`` lives on the link (i, j) -> (i+1, j) and carries the
    transition function at the wrap ``i = N-1``; ``theta_y[i, j]`` is the line
    integral of the connection along (i, j) -> (i, j+1).
    """
    n = factor_basis.resolution
    d = factor_basis.degree
    xs = np.arange(n) / n
    theta_x = np.zeros((n, n))
    theta_x[-1, :] = -2 * math.pi * d * xs
    theta_y = np.repeat((2 * math.pi * d * xs / n)[:, None], n, axis=1)
    return theta_x, theta_y


def holonomy_flux(factor_basis):
    """Total flux: sum of the principal plaquette angles around the fundamental cell."""
    tx, ty = link_phases(factor_basis)
    ang = tx + np.roll(ty, -1, axis=0) - np.roll(tx, -1, axis=1) - ty
    ang = (ang + math.pi) % (2 * math.pi) - math.pi
    return float(ang.sum())


@dataclass(frozen=True)
class FormSpace:
    n: int
    p: int
    q: int
    comps: tuple
    charges: tuple
    sizes: tuple
    offsets: tuple

    @property
    def dim(self):
        return self.offsets[-1]

    def block(self, i):
        return slice(self.offsets[i], self.offsets[i + 1])

    def index(self, comp):
        return self.comps.index(comp)


@dataclass
class FormSection:
    """Modal coefficients of an E-valued (p,q)-form, concatenated over frame components."""

    bidegree: tuple
    coefficients: np.ndarray

    def __post_init__(self):
        self.bidegree = tuple(self.bidegree)
        self.coefficients = np.asarray(self.coefficients, dtype=complex)

    def __add__(self, other):
        _check_same(self, other)
        return FormSection(self.bidegree, self.coefficients + other.coefficients)

    def __sub__(self, other):
        _check_same(self, other)
        return FormSection(self.bidegree, self.coefficients - other.coefficients)

    def __mul__(self, c):
        return FormSection(self.bidegree, c * self.coefficients)

    __rmul__ = __mul__

    def __neg__(self):
        return FormSection(self.bidegree, -self.coefficients)


def _check_same(u, v):
    if u.bidegree != v.bidegree:
        raise BidegreeError(f"bidegree mismatch {u.bidegree} vs {v.bidegree}")


@dataclass
class GridForm:
    """Pointwise form: ``values[(I, J)]`` is a complex array over the fiber grid."""

    bidegree: tuple
    values: dict = field(default_factory=dict)


def default_levels(degree, resolution, n=1):
    if degree == 0:
        return max(2, resolution // 4) if n == 1 else max(2, resolution // 8)
    return max(4, resolution // 2) if n == 1 else max(3, resolution // 4)


class FiberCalculus:
    """Discrete model of one fiber ``(X_t, omega^t, E_t, h e^{-phi})``.

    Treat instances as immutable; derived matrices are cached on first use.
    """

    def __init__(self, geometry, bundle, weight=None, levels=None, threshold=1e-8):
        self.geometry = geometry
        self.bundle = bundle
        self.weight = weight if weight is not None else FiberWeight()
        self.threshold = float(threshold)
        n = geometry.n
        N = geometry.resolution
        if levels is None:
            levels = [default_levels(d, N, n) for d in bundle.degrees]
        elif np.isscalar(levels):
            levels = [int(levels)] * n
        self.levels = tuple(int(k) for k in levels)
        chars = bundle.characters or [(0.0, 0.0)] * n
        self.factors = [FactorBasis(f.tau, f.area, d, N, k, c)
                        for f, d, k, c in zip(geometry.factors, bundle.degrees, self.levels, chars)]
        self._cache = {}
        # lattice coordinates of every fiber point, flattened row-major over factors
        if n == 1:
            self.coords = [(self.factors[0].x, self.factors[0].y)]
            self.point_shape = (self.factors[0].npoints,)
        else:
            f1, f2 = self.factors
            n1, n2 = f1.npoints, f2.npoints
            self.coords = [(np.repeat(f1.x, n2), np.repeat(f1.y, n2)),
                           (np.tile(f2.x, n1), np.tile(f2.y, n1))]
            self.point_shape = (n1, n2)
        self.phi = self.weight.value(self.coords)
        self.quad_weight = float(np.prod([f.quad_weight for f in self.factors]))
        self.measure = self.quad_weight * np.exp(-self.phi)

    @property
    def n(self):
        return self.geometry.n

    @property
    def npoints(self):
        return int(np.prod(self.point_shape))

    def background_curvature(self):
        """Constant eigenvalues ``2 pi d / A`` of ``i Theta`` relative to the fiber form."""
        return [2 * math.pi * f.degree / f.area for f in self.factors]

    # spaces -----------------------------------------------------------------

    def space(self, p, q):
        key = ("space", p, q)
        if key not in self._cache:
            if not pw.in_range(self.n, p, q):
                raise BidegreeError(f"bidegree ({p},{q}) out of range for n={self.n}")
            comps = tuple(ext.frame(self.n, p, q))
            charges = tuple(pw.charge(I, J, self.n) for I, J in comps)
            sizes = tuple(int(np.prod([f.size(c) for f, c in zip(self.factors, ch)])) for ch in charges)
            offsets = tuple(np.concatenate([[0], np.cumsum(sizes)]).astype(int).tolist())
            self._cache[key] = FormSpace(self.n, p, q, comps, charges, sizes, offsets)
        return self._cache[key]

    def zero(self, p, q):
        return FormSection((p, q), np.zeros(self.space(p, q).dim, dtype=complex))

    def random_section(self, p, q, rng):
        dim = self.space(p, q).dim
        return FormSection((p, q), rng.standard_normal(dim) + 1j * rng.standard_normal(dim))

    # synthesis and projection ----------------------------------------------

    def basis_values(self, charge):
        return [f.values(c) for f, c in zip(self.factors, charge)]

    def synthesize_block(self, charge, coef):
        b = self.basis_values(charge)
        if self.n == 1:
            return b[0] @ coef
        c = coef.reshape(b[0].shape[1], b[1].shape[1])
        return (b[0] @ c @ b[1].T).ravel()

    def synthesize(self, u):
        sp = self.space(*u.bidegree)
        vals = {comp: self.synthesize_block(ch, u.coefficients[sp.block(i)])
                for i, (comp, ch) in enumerate(zip(sp.comps, sp.charges))}
        return GridForm(u.bidegree, vals)

    def _analysis_block(self, charge, values, extra=None):
        # B^H diag(measure * extra) values
        b = self.basis_values(charge)
        w = self.measure if extra is None else self.measure * extra
        if self.n == 1:
            return b[0].conj().T @ (w * values)
        g = (w * values).reshape(self.point_shape)
        return (b[0].conj().T @ g @ b[1].conj()).ravel()

    def project(self, gf):
        """Weighted L^2 projection of a pointwise form onto the discrete span."""
        p, q = gf.bidegree
        sp = self.space(p, q)
        out = np.zeros(sp.dim, dtype=complex)
        for i, (comp, ch) in enumerate(zip(sp.comps, sp.charges)):
            if comp not in gf.values:
                continue
            rhs = self._analysis_block(ch, np.asarray(gf.values[comp], dtype=complex))
            out[sp.block(i)] = self._gram_block_solve(ch, rhs)
        return FormSection((p, q), out)

    # Gram matrices ---------------------------------------------------------

    def gram_block(self, charge, extra=None):
        """Weighted Gram of one component span (without the frame norm)."""
        if extra is None:
            key = ("gram", charge)
            if key in self._cache:
                return self._cache[key]
        b = self.basis_values(charge)
        w = self.measure if extra is None else self.measure * extra
        if self.n == 1:
            g = kernels.weighted_gram(b[0], w)
        else:
            g = kernels.tensor_gram(b[0], b[1], np.ascontiguousarray(w.reshape(self.point_shape)))
        g = 0.5 * (g + g.conj().T) if extra is None or np.isrealobj(extra) else g
        if extra is None:
            self._cache[key] = g
        return g

    def _gram_block_solve(self, charge, rhs):
        key = ("gram_chol", charge)
        if key not in self._cache:
            self._cache[key] = cho_factor(self.gram_block(charge))
        return cho_solve(self._cache[key], rhs)

    def gram(self, p, q):
        key = ("gram_full", p, q)
        if key not in self._cache:
            sp = self.space(p, q)
            M = np.zeros((sp.dim, sp.dim), dtype=complex)
            for i, ch in enumerate(sp.charges):
                M[sp.block(i), sp.block(i)] = 2.0 ** (p + q) * self.gram_block(ch)
            self._cache[key] = M
        return self._cache[key]

    def gram_with(self, p, q, values):
        """``(f u, v)`` as a matrix, for a pointwise scalar function ``f``."""
        sp = self.space(p, q)
        M = np.zeros((sp.dim, sp.dim), dtype=complex)
        cache = {}
        for i, ch in enumerate(sp.charges):
            if ch not in cache:
                cache[ch] = self.gram_block(ch, values)
            M[sp.block(i), sp.block(i)] = 2.0 ** (p + q) * cache[ch]
        return M

    def multiplication(self, p, q, values):
        """Galerkin matrix of multiplication by a pointwise scalar function."""
        return np.linalg.solve(self.gram(p, q), self.gram_with(p, q, values))

    def inner(self, u, v):
        _check_same(u, v)
        return complex(np.vdot(v.coefficients, self.gram(*u.bidegree) @ u.coefficients))

    # constant pointwise operators on modal coefficients --------------------

    def const_operator(self, mat, src, tgt):
        """Lift a frame-level constant matrix to modal coefficients."""
        ss = self.space(*src)
        ts = self.space(*tgt)
        out = np.zeros((ts.dim, ss.dim), dtype=complex)
        for t in range(len(ts.comps)):
            for s in range(len(ss.comps)):
                c = mat[t, s]
                if c == 0:
                    continue
                if ts.charges[t] != ss.charges[s]:
                    raise RuntimeError("constant operator mixes incompatible spans")
                out[ts.block(t), ss.block(s)] = c * np.eye(ss.sizes[s])
        return out

    def star(self, p, q):
        key = ("star", p, q)
        if key not in self._cache:
            self._cache[key] = self.const_operator(pw.star(self.n, p, q), (p, q), (self.n - q, self.n - p))
        return self._cache[key]

    def star_inverse(self, p, q):
        """Inverse star landing in (p,q): maps (p,q) to (n-q, n-p)."""
        key = ("star_inv", p, q)
        if key not in self._cache:
            n = self.n
            self._cache[key] = self.const_operator(pw.star_inverse(n, p, q), (p, q), (n - q, n - p))
        return self._cache[key]

    def lefschetz(self, p, q, k=1):
        return self.const_operator(pw.lefschetz(self.n, p, q, k), (p, q), (p + k, q + k))

    # differential operators -------------------------------------------------

    def _derivative(self, p, q, antiholomorphic):
        n = self.n
        src = self.space(p, q)
        tgt = self.space(p, q + 1) if antiholomorphic else self.space(p + 1, q)
        out = np.zeros((tgt.dim, src.dim), dtype=complex)
        for s, (I, J) in enumerate(src.comps):
            ch = src.charges[s]
            for k in range(n):
                if antiholomorphic:
                    if k in J:
                        continue
                    sign = (-1) ** len(I) * (-1) ** sum(1 for j in J if j < k)
                    tcomp = (I, tuple(sorted(J + (k,))))
                    lad = self.factors[k].dbar(ch[k])
                else:
                    if k in I:
                        continue
                    sign = (-1) ** sum(1 for i in I if i < k)
                    tcomp = (tuple(sorted(I + (k,))), J)
                    lad = self.factors[k].dflat(ch[k])
                t = tgt.index(tcomp)
                if n == 1:
                    blk = lad
                elif k == 0:
                    blk = np.kron(lad, np.eye(self.factors[1].size(ch[1])))
                else:
                    blk = np.kron(np.eye(self.factors[0].size(ch[0])), lad)
                out[tgt.block(t), src.block(s)] += sign * blk
        return out

    def dbar(self, p, q):
        key = ("dbar", p, q)
        if key not in self._cache:
            if not pw.in_range(self.n, p, q + 1):
                raise BidegreeError(f"dbar out of range from ({p},{q})")
            self._cache[key] = self._derivative(p, q, True)
        return self._cache[key]

    def del_flat(self, p, q):
        """Unweighted (1,0) covariant derivative of the background connection."""
        key = ("del_flat", p, q)
        if key not in self._cache:
            if not pw.in_range(self.n, p + 1, q):
                raise BidegreeError(f"del out of range from ({p},{q})")
            self._cache[key] = self._derivative(p, q, False)
        return self._cache[key]

    def dbar_adj(self, p, q):
        """Adjoint of dbar, mapping (p,q) to (p,q-1)."""
        key = ("dbar_adj", p, q)
        if key not in self._cache:
            D = self.dbar(p, q - 1)
            self._cache[key] = np.linalg.solve(self.gram(p, q - 1), D.conj().T @ self.gram(p, q))
        return self._cache[key]

    def delE(self, p, q):
        """(1,0) part of the Chern connection of ``h e^{-phi}``, mapping (p,q) to (p+1,q)."""
        key = ("delE", p, q)
        if key not in self._cache:
            if not pw.in_range(self.n, p + 1, q):
                raise BidegreeError(f"delE out of range from ({p},{q})")
            n = self.n
            a = self.star_inverse(p, q)
            b = self.dbar_adj(n - q, n - p)
            c = self.star_inverse(n - q, n - p - 1)
            self._cache[key] = -(c @ b @ a)
        return self._cache[key]

    def delE_adj(self, p, q):
        """Adjoint of delE, mapping (p,q) to (p-1,q)."""
        key = ("delE_adj", p, q)
        if key not in self._cache:
            D = self.delE(p - 1, q)
            self._cache[key] = np.linalg.solve(self.gram(p - 1, q), D.conj().T @ self.gram(p, q))
        return self._cache[key]

    def laplacian_forms(self, p, q):
        """``(M, M Box)`` for the dbar-Laplacian on (p,q), both Hermitian."""
        M = self.gram(p, q)
        A = np.zeros_like(M)
        if q + 1 <= self.n:
            D = self.dbar(p, q)
            A += D.conj().T @ self.gram(p, q + 1) @ D
        if q >= 1:
            Dm = self.dbar(p, q - 1)
            Mm = self.gram(p, q - 1)
            X = Dm.conj().T @ M
            A += X.conj().T @ np.linalg.solve(Mm, X)
        return M, 0.5 * (A + A.conj().T)

    @cached_property
    def flux(self):
        return [holonomy_flux(f) for f in self.factors]


def build_fiber(geometry, bundle, weight=None, levels=None, threshold=1e-8):
    """Validate inputs and assemble the discrete fiber calculus."""
    if geometry.resolution % 2:
        raise OddResolution(f"resolution {geometry.resolution} is odd")
    if len(bundle.degrees) != geometry.n:
        raise FluxInconsistency("one degree per factor is required")
    if weight is not None and not isinstance(weight, FiberWeight):
        weight = FiberWeight(tuple(weight))
    fiber = FiberCalculus(geometry, bundle, weight, levels, threshold)
    for fb, flux in zip(fiber.factors, fiber.flux):
        if abs(flux - 2 * math.pi * fb.degree) > 1e-9 * max(1.0, abs(flux)):
            raise FluxInconsistency(f"holonomy flux {flux} does not match degree {fb.degree}")
    if bundle.background_weight is not None:
        for bw, fb in zip(bundle.background_weight, fiber.factors):
            expect = 2 * math.pi * fb.degree / fb.area
            if abs(bw - expect) > 1e-9 * max(1.0, abs(expect)):
                raise FluxInconsistency(
                    f"background weight {bw} inconsistent with degree {fb.degree} on area {fb.area}")
    return fiber


_SHIFTS = {"dbar": (0, 1), "delE": (1, 0), "dbar_adj": (0, -1), "delE_adj": (-1, 0)}


def apply_operator(fiber, which, u):
    if which not in _SHIFTS:
        raise ValueError(f"unknown operator {which!r}")
    p, q = u.bidegree
    dp, dq = _SHIFTS[which]
    if not pw.in_range(fiber.n, p + dp, q + dq):
        raise BidegreeError(f"{which} maps ({p},{q}) out of range")
    mat = getattr(fiber, which)(p, q)
    return FormSection((p + dp, q + dq), mat @ u.coefficients)


def inner_product(fiber, u, v):
    return fiber.inner(u, v)
