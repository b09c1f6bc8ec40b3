"""Total-space geometry of a model family: base charts, weights, Kaehler forms, curvature.

Total-space coordinates are ordered base first, ``(t_1, ..., t_m, z_1, ..., z_n)``.
Hermitian (1,1)-data is stored as a matrix field ``M`` of shape ``(N, N, npts)``
meaning ``(i/2) sum M[a, b] dzeta_a ^ dzetabar_b``.
"""

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from . import exterior as ext
from .errors import DegenerateKahlerForm, StencilIncomplete
from .fields import WeightField
from .hodge import fiber_curvature
from .torus import LineBundleData, build_fiber

# five-point central stencils: first and second derivative weights (times h, h^2)
FIRST = {-2: 1 / 12, -1: -8 / 12, 1: 8 / 12, 2: -1 / 12}
SECOND = {-2: -1 / 12, -1: 16 / 12, 0: -30 / 12, 1: 16 / 12, 2: -1 / 12}
CROSS = {(1, 1): 0.25, (1, -1): -0.25, (-1, 1): -0.25, (-1, -1): 0.25}


@dataclass(frozen=True)
class BaseGrid:
    """Flat chart of the base around ``center`` with the finite-difference step ``h_fd``."""

    m: int = 1
    center: tuple = (0j,)
    h_fd: float = 1e-2

    def __post_init__(self):
        c = tuple(complex(v) for v in np.atleast_1d(self.center))
        if len(c) == 1 and self.m > 1:
            c = c * self.m
        object.__setattr__(self, "center", c)
        if self.m not in (1, 2) or len(c) != self.m:
            raise ValueError("base dimension must be 1 or 2 with one center coordinate each")
        if not self.h_fd > 0:
            raise ValueError("h_fd must be positive")

    def point(self, offset):
        """Base point at the real offset vector ``(dx_1, dy_1, ...)`` in units of h_fd."""
        return tuple(c + self.h_fd * complex(offset[2 * j], offset[2 * j + 1])
                     for j, c in enumerate(self.center))

    def offsets(self):
        """All real offsets (units of h_fd) touched by :func:`base_derivatives`."""
        dim = 2 * self.m
        out = {(0.0,) * dim}
        for level in (1.0, 0.5):
            for r in range(dim):
                for s in (-2, -1, 1, 2):
                    o = [0.0] * dim
                    o[r] = s * level
                    out.add(tuple(o))
            for r, s in _mixed_pairs(self.m):
                for a, b in CROSS:
                    o = [0.0] * dim
                    o[r] = a * level
                    o[s] = b * level
                    out.add(tuple(o))
        return sorted(out)

    def points(self):
        return [self.point(o) for o in self.offsets()]


def _mixed_pairs(m):
    # real coordinate pairs needed by d/dt_j dtbar_k with j != k
    if m == 1:
        return []
    return [(0, 2), (0, 3), (1, 2), (1, 3)]


def base_derivatives(grid, sample, with_second=True):
    """First and mixed second complex base derivatives of ``sample`` at the center.

    ``sample(offset)`` returns an array for a real offset in units of h_fd. Returns
    ``(d, dbar, ddbar)`` with ``d[j] = d/dt_j``, ``dbar[k] = d/dtbar_k`` and
    ``ddbar[j][k] = d^2/dt_j dtbar_k``. Five-point stencils at h and h/2 combined
    by one Richardson step; cross derivatives use the four-point stencil with the
    matching h^2 Richardson step.
    """
    dim = 2 * grid.m
    h = grid.h_fd
    known = set(grid.offsets())
    cache = {}

    def f(o):
        o = tuple(float(v) for v in o)
        if o not in known:
            raise StencilIncomplete(f"offset {o} not in the base lattice")
        if o not in cache:
            cache[o] = np.asarray(sample(o))
        return cache[o]

    def unit(r, s):
        o = [0.0] * dim
        o[r] = s
        return o

    def first(r):
        est = []
        for level in (1.0, 0.5):
            est.append(sum(w * f(unit(r, s * level)) for s, w in FIRST.items()) / (h * level))
        return (16 * est[1] - est[0]) / 15

    def second(r):
        est = []
        for level in (1.0, 0.5):
            est.append(sum(w * f(unit(r, s * level)) for s, w in SECOND.items()) / (h * level) ** 2)
        return (16 * est[1] - est[0]) / 15

    def cross(r, s):
        est = []
        for level in (1.0, 0.5):
            tot = 0
            for (a, b), w in CROSS.items():
                o = [0.0] * dim
                o[r] = a * level
                o[s] = b * level
                tot = tot + w * f(o)
            est.append(tot / (h * level) ** 2)
        return (4 * est[1] - est[0]) / 3

    m = grid.m
    dx = [first(r) for r in range(dim)]
    d = [0.5 * (dx[2 * j] - 1j * dx[2 * j + 1]) for j in range(m)]
    dbar = [0.5 * (dx[2 * j] + 1j * dx[2 * j + 1]) for j in range(m)]
    if not with_second:
        return d, dbar, None
    ddbar = [[None] * m for _ in range(m)]
    for j in range(m):
        ddbar[j][j] = 0.25 * (second(2 * j) + second(2 * j + 1))
    if m == 2:
        xx, xy, yx, yy = (cross(0, 2), cross(0, 3), cross(1, 2), cross(1, 3))
        ddbar[0][1] = 0.25 * (xx + 1j * xy - 1j * yx + yy)
        ddbar[1][0] = 0.25 * (xx - 1j * xy + 1j * yx + yy)
    return d, dbar, ddbar


@dataclass(frozen=True)
class TotalKahlerForm:
    """``omega = omega_X + omega_B + i ddbar(rho)`` with constant base block.

    ``base_form`` is the Hermitian matrix ``B`` of ``omega_B = (i/2) sum B_jk dt_j ^ dtbar_k``.
    """

    base_form: tuple = ((1.0,),)
    twist: WeightField = field(default_factory=WeightField)

    def __post_init__(self):
        B = np.atleast_2d(np.asarray(self.base_form, dtype=complex))
        if not np.allclose(B, B.conj().T) or np.linalg.eigvalsh(B).min() <= 0:
            raise DegenerateKahlerForm("base form must be Hermitian positive definite")
        object.__setattr__(self, "base_form", tuple(tuple(r) for r in B.tolist()))

    @property
    def is_product(self):
        return self.twist.is_zero

    def matrix(self, t, coords, factors):
        """Coefficient field ``G`` of shape (m+n, m+n, npts)."""
        B = np.asarray(self.base_form, dtype=complex)
        m = B.shape[0]
        n = len(factors)
        blocks = np.eye(m + n, dtype=complex)
        blocks[:m, :m] = B
        npts = np.asarray(coords[0][0]).size
        G = np.repeat(blocks[:, :, None], npts, axis=2)
        if not self.twist.is_zero:
            G += 2 * total_hessian(self.twist, t, coords, factors)
        return G

    def horizontal_coefficients(self, t, coords, factors):
        """``c_{jk}(omega) = <V_j, V_k>`` for ``omega = i sum g``; shape (m, m, npts)."""
        G = self.matrix(t, coords, factors)
        m = len(self.base_form)
        Gbb = G[:m, :m]
        Gbf = G[:m, m:]
        Gff = G[m:, m:]
        sol = np.linalg.solve(Gff.transpose(2, 0, 1), G[m:, :m].transpose(2, 0, 1))
        schur = Gbb - np.einsum("jap,pak->jkp", Gbf, sol)
        return 0.5 * schur


def total_hessian(wf, t, coords, factors):
    """``d dbar`` of a weight field on the total space: ``out[a, b] = d^2 f / dzeta_a dzetabar_b``."""
    t = tuple(np.atleast_1d(t))
    m = len(t)
    n = len(factors)
    npts = np.asarray(coords[0][0]).size
    out = np.zeros((m + n, m + n, npts), dtype=complex)
    for j in range(m):
        for k in range(m):
            out[j, k] = wf.base_d_dbar(t, j, k, coords)
        for a in range(n):
            out[j, m + a] = wf.mixed(t, j, a, coords, factors)
            out[m + a, j] = wf.mixed_bar(t, a, j, coords, factors)
    for a in range(n):
        for b in range(n):
            out[m + a, m + b] = wf.fiber_dz_dzbar(t, a, b, coords, factors)
    return out


@dataclass
class HorizontalLift:
    """``V_j = d/dt_j + sum_a correction[a] d/dz_a`` sampled on the fiber grid."""

    j: int
    t: tuple
    correction: np.ndarray  # (n, npts)
    residual: float


@dataclass
class PositivityReport:
    passed: bool
    min_eigenvalue: float
    tolerance: float
    witness: dict = field(default_factory=dict)

    @property
    def verdict(self):
        return "pass" if self.passed else "fail"

    def as_dict(self):
        return {"verdict": self.verdict, "min_eigenvalue": self.min_eigenvalue,
                "tolerance": self.tolerance, "witness": self.witness}


def make_report(values, tol, witness):
    mn = float(values)
    return PositivityReport(bool(mn >= -tol), mn, float(tol), witness)


class FamilyModel:
    """A product family ``B x X`` with weight ``phi(z, t)`` and total Kaehler form ``omega``."""

    def __init__(self, geometry, bundle, weight=None, kahler=None, base=None, levels=None, threshold=1e-8,
                 holonomy=None):
        self.geometry = geometry
        self.bundle = bundle
        self.weight = weight if weight is not None else WeightField()
        self.base = base if base is not None else BaseGrid()
        if kahler is None:
            kahler = TotalKahlerForm(tuple(tuple(float(i == j) for j in range(self.base.m))
                                           for i in range(self.base.m)))
        if len(kahler.base_form) != self.base.m:
            raise ValueError("base form size does not match the base dimension")
        self.kahler = kahler
        self.levels = levels
        self.threshold = threshold
        # optional flat twist varying with t: character (Re, Im) of holonomy[a] * t_1 on factor a
        self.holonomy = None if holonomy is None else tuple(complex(c) for c in holonomy)
        self._fibers = {}

    @property
    def n(self):
        return self.geometry.n

    @property
    def m(self):
        return self.base.m

    @property
    def center(self):
        return self.base.center

    def fiber(self, t=None):
        t = self.center if t is None else tuple(complex(v) for v in np.atleast_1d(t))
        if t not in self._fibers:
            self._fibers[t] = build_fiber(self.geometry, self.bundle_at(t), self.weight.fiber_weight(t),
                                          self.levels, self.threshold)
        return self._fibers[t]

    def bundle_at(self, t):
        if self.holonomy is None:
            return self.bundle
        chars = tuple(((k * t[0]).real, (k * t[0]).imag) for k in self.holonomy)
        return LineBundleData(self.bundle.degrees, self.bundle.background_weight, chars)

    def fiber_at_offset(self, offset):
        return self.fiber(self.base.point(offset))

    def kahler_matrix(self, t=None):
        t = self.center if t is None else t
        fib = self.fiber(t)
        G = self.kahler.matrix(t, fib.coords, fib.factors)
        if not self.kahler.is_product:
            Gp = G.transpose(2, 0, 1)
            if np.linalg.eigvalsh(0.5 * (Gp + Gp.conj().transpose(0, 2, 1)))[:, 0].min() <= 0:
                raise DegenerateKahlerForm(f"total Kaehler form is not positive over t={t}")
        return G

    def curvature_scale(self):
        """Largest curvature coefficient at the center; 1 for flat data."""
        top = float(np.abs(total_curvature(self)).max())
        return top if top > 0 else 1.0


def total_curvature(family, t=None):
    """Coefficient field of ``i Theta(E, h)`` on the total space at base point ``t``."""
    t = family.center if t is None else tuple(complex(v) for v in np.atleast_1d(t))
    fib = family.fiber(t)
    m = family.m
    hess = total_hessian(family.weight, t, fib.coords, fib.factors)
    H = 2 * hess
    H[m:, m:] = fiber_curvature(fib)
    return H


def horizontal_lift(family, j, t=None):
    t = family.center if t is None else tuple(complex(v) for v in np.atleast_1d(t))
    fib = family.fiber(t)
    m = family.m
    G = family.kahler_matrix(t)
    Gff = G[m:, m:].transpose(2, 0, 1)
    if np.any(np.linalg.eigvalsh(0.5 * (Gff + Gff.conj().transpose(0, 2, 1)))[:, 0] <= 0):
        raise DegenerateKahlerForm("fiber block of omega is not positive")
    # sum_b v^b G[b, a] = -G[j, a] for every fiber index a
    v = np.linalg.solve(Gff.transpose(0, 2, 1), -G[j, m:].T[..., None])[..., 0].T
    res = G[m:, j] + np.einsum("abp,bp->ap", G[m:, m:], np.conj(v))
    scale = max(float(np.abs(G[m:, j]).max()), float(np.abs(G[m:, m:]).max()))
    return HorizontalLift(j, t, v, float(np.abs(res).max() / scale))


def q_semipositivity_values(H, G, q):
    """Pointwise minimum of the Hermitian form of ``omega_q ^ c_q {i Theta u, u}``.

    For a line bundle the form is diagonal in a ``G``-unitary frame, with eigenvalue
    the sum of the generalized eigenvalues of ``(H, G)`` over the complementary
    ``q + 1`` directions, relative to ``omega_{q+1} ^ c_q {u, u}``. Returns the
    per-point minimum and the generalized eigen-decomposition.
    """
    N = H.shape[0]
    if not 0 <= q <= N - 1:
        raise ValueError(f"q={q} out of range for total dimension {N}")
    Hp = H.transpose(2, 0, 1)
    Gp = G.transpose(2, 0, 1)
    L = np.linalg.cholesky(Gp)
    Li = np.linalg.inv(L)
    S = Li @ Hp @ Li.conj().transpose(0, 2, 1)
    lam, vec = np.linalg.eigh(0.5 * (S + S.conj().transpose(0, 2, 1)))
    return lam[:, : q + 1].sum(axis=1), lam


def covector_forms(H, G, q):
    """Brute-force matrices ``(F, W)`` of the q-positivity form and its reference norm at one point.

    ``F[a, b]`` and ``W[a, b]`` are the volume coefficients of
    ``omega_q ^ c_q i Theta ^ e_a ^ conj(e_b)`` and ``omega_{q+1} ^ c_q e_a ^ conj(e_b)`` over the
    frame of (N-q-1, 0)-covectors.
    """
    N = H.shape[0]
    k = N - q - 1
    cq = 1j ** (k * k)
    omega = ext.hermitian_11(G)
    theta = ext.hermitian_11(H)
    wq = ext.normalized_power(omega, q)
    wq1 = ext.normalized_power(omega, q + 1)
    top = ext.top_coefficient(ext.normalized_power(ext.hermitian_11(np.eye(N)), N), N)
    pre_f = ext.wedge(wq, theta)
    frames = ext.frame(N, k, 0)
    F = np.zeros((len(frames), len(frames)), dtype=complex)
    W = np.zeros_like(F)
    for a, fa in enumerate(frames):
        for b, fb in enumerate(frames):
            uu = ext.wedge({fa: 1.0}, ext.conj({fb: 1.0}))
            F[a, b] = cq * ext.top_coefficient(ext.wedge(pre_f, uu), N) / top
            W[a, b] = cq * ext.top_coefficient(ext.wedge(wq1, uu), N) / top
    return F, W


def check_q_semipositive(family, q, tol=None, points=None):
    """Sample q-semipositivity over the fiber grid and base lattice."""
    if not 0 <= q <= family.n:
        raise ValueError(f"q={q} must lie in [0, {family.n}]")
    pts = family.base.points() if points is None else points
    if tol is None:
        tol = 1e-8 * family.curvature_scale()
    best = math.inf
    witness = {}
    for t in pts:
        H = total_curvature(family, t)
        G = family.kahler_matrix(t)
        vals, lam = q_semipositivity_values(H, G, q)
        i = int(np.argmin(vals))
        if vals[i] < best:
            best = float(vals[i])
            fib = family.fiber(t)
            witness = {"base_point": [[float(c.real), float(c.imag)] for c in t],
                       "fiber_point": [float(fib.coords[a][r][i]) for a in range(family.n) for r in (0, 1)],
                       "eigenvalues": [float(v) for v in lam[i]]}
    return make_report(best, tol, witness)
