"""The bundle of fiberwise harmonic spaces over a base chart and its Chern connection."""

import math
from dataclasses import dataclass, field

import numpy as np

from . import exterior as ext
from .errors import DimensionJump, FrameDegenerate
from .family import base_derivatives, horizontal_lift
from .hodge import harmonic_projector
from .torus import FormSection, GridForm



def _zero_offset(family):
    return (0.0,) * (2 * family.m)


@dataclass
class DimensionReport:
    p: int
    q: int
    dims: dict  # offset -> dimension
    constant: bool
    offending: list  # base points whose dimension differs from the center
    min_gap_ratio: float

    def as_dict(self):
        return {"p": self.p, "q": self.q, "constant": self.constant,
                "dimension": self.dims[min(self.dims, key=lambda o: sum(abs(v) for v in o))],
                "offending": self.offending, "min_gap_ratio": self.min_gap_ratio}


def harmonic_dims(family, p, q, offsets=None):
    """Harmonic dimension at every lattice point and whether it is constant."""
    offs = family.base.offsets() if offsets is None else offsets
    dims = {}
    gap = math.inf
    for o in offs:
        hp = harmonic_projector(family.fiber_at_offset(o), p, q)
        dims[o] = hp.dimension
        gap = min(gap, hp.gap_ratio)
    ref = dims.get(_zero_offset(family), next(iter(dims.values())))
    offending = []
    for o, d in dims.items():
        if d != ref:
            t = family.base.point(o)
            offending.append({"base_point": [[float(c.real), float(c.imag)] for c in t], "dimension": d})
    return DimensionReport(p, q, dims, not offending, offending, float(gap))


@dataclass
class HarmonicFrame:
    """Harmonic frame of H^{p,q} over the base lattice, stored with explicit Gram matrices.

    ``sections[offset]`` has one column of modal coefficients per frame element;
    ``grams[offset][a, b] = (u_a, u_b)``.
    """

    p: int
    q: int
    mode: str
    representatives: np.ndarray
    sections: dict
    grams: dict
    center: tuple = field(default=None)

    @property
    def rank(self):
        return self.representatives.shape[1]

    def section(self, alpha, offset=None):
        o = self.center if offset is None else offset
        return FormSection((self.p, self.q), self.sections[o][:, alpha])

    def gram(self, offset=None):
        return self.grams[self.center if offset is None else offset]

    def condition_number(self):
        return float(max(np.linalg.cond(g) for g in self.grams.values()))


def _gram(fiber, U, p, q):
    M = fiber.gram(p, q)
    return (U.conj().T @ M @ U).T


def holomorphic_frame(family, p, q, mode="holomorphic", rank_tol=1e-10):
    """Frame ``u_a^t = H^t(u_a)`` for constant representatives ``u_a``.

    The representatives are the center's harmonic basis; when projection loses
    rank somewhere they are re-seeded from the nearest other lattice point.
    ``mode='orthonormal'`` returns the Gram-orthonormalized (non-holomorphic) frame.
    """
    if family.holonomy is not None:
        raise ValueError("frames need a fixed fiber basis; the family twists its holonomy")
    dims = harmonic_dims(family, p, q)
    if not dims.constant:
        raise DimensionJump(f"harmonic dimension of ({p},{q}) varies over the base", points=dims.offending)
    offs = family.base.offsets()
    zero = _zero_offset(family)
    seeds = sorted(offs, key=lambda o: (sum(v * v for v in o), o))
    for seed in seeds:
        reps = harmonic_projector(family.fiber_at_offset(seed), p, q).basis_matrix.copy()
        sections, grams = {}, {}
        ok = True
        for o in offs:
            fib = family.fiber_at_offset(o)
            U = harmonic_projector(fib, p, q).projection @ reps
            G = _gram(fib, U, p, q)
            ev = np.linalg.eigvalsh(0.5 * (G + G.conj().T))
            if ev.size and ev[0] <= rank_tol * ev[-1]:
                ok = False
                break
            if mode == "orthonormal":
                L = np.linalg.cholesky(G.T)
                U = U @ np.linalg.inv(L.conj().T)
                G = _gram(fib, U, p, q)
            sections[o] = U
            grams[o] = 0.5 * (G + G.conj().T)
        if ok:
            return HarmonicFrame(p, q, mode, reps, sections, grams, zero)
    raise FrameDegenerate(f"projected representatives of ({p},{q}) lose rank on every seed")


def dbar_t(family, frame, representative, j):
    """``dbar_{t^j}`` of a section given by its fiber restrictions, at the center.

    ``representative(offset)`` returns modal coefficients (or a FormSection) of
    the restriction to the fiber over that lattice point; the result is the
    harmonic projection of its ``d/dtbar_j`` derivative.
    """
    def sample(o):
        r = representative(o)
        return r.coefficients if isinstance(r, FormSection) else np.asarray(r, dtype=complex)

    _, dbar, _ = base_derivatives(family.base, sample, with_second=False)
    fib = family.fiber()
    P = harmonic_projector(fib, frame.p, frame.q).projection
    return FormSection((frame.p, frame.q), P @ dbar[j])


def frame_derivatives(family, frame):
    """``d/dt_j`` and ``d/dtbar_j`` of the frame sections at the center (finite differences)."""
    d, dbar, _ = base_derivatives(family.base, lambda o: frame.sections[o], with_second=False)
    return d, dbar


def contract_vector(fiber, u, field_values):
    """Pointwise ``delta_v u`` for the fiber (1,0)-field ``v = sum field_values[a] d/dz_a``."""
    gf = fiber.synthesize(u)
    p, q = u.bidegree
    vals = ext.interior(list(field_values), gf.values)
    return fiber.project(GridForm((p - 1, q), vals))


def lie_term(family, frame, j, derivs=None):
    """Columns ``i_t^* [d^E_{1,0}, delta_{V_j}] u_a`` at the center for the frame representatives.

    The representative of ``u_a`` is the family of its harmonic restrictions; the
    base derivative comes from finite differences, the fiber part from the
    horizontal lift.
    """
    fib = family.fiber()
    p, q = frame.p, frame.q
    t = family.center
    if derivs is None:
        derivs = frame_derivatives(family, frame)
    d = derivs[0][j]
    U = frame.sections[frame.center]
    phi_j = family.weight.base_d(t, j, fib.coords)
    out = d - fib.multiplication(p, q, phi_j) @ U
    if not family.kahler.is_product:
        lift = horizontal_lift(family, j)
        if p >= 1:
            D = fib.delE(p - 1, q)
            for a in range(U.shape[1]):
                w = contract_vector(fib, FormSection((p, q), U[:, a]), lift.correction)
                out[:, a] += D @ w.coefficients
    return out


def chern_D(family, frame, j, derivs=None):
    """``D_{t^j} u_a = H^t(i_t^* [d^E_{1,0}, delta_{V_j}] u_a)`` at the center, one column per frame element."""
    fib = family.fiber()
    P = harmonic_projector(fib, frame.p, frame.q).projection
    return P @ lie_term(family, frame, j, derivs)


def metric_compatibility(family, frame, j):
    """Max deviation of ``d(u_a, u_b)/dt_j`` from ``(D u_a, u_b) + (u_a, dbar u_b)``, relative to |G|."""
    derivs = frame_derivatives(family, frame)
    fib = family.fiber()
    p, q = frame.p, frame.q
    M = fib.gram(p, q)
    U = frame.sections[frame.center]
    DU = chern_D(family, frame, j, derivs)
    P = harmonic_projector(fib, p, q).projection
    dbarU = P @ derivs[1][j]
    lhs = base_derivatives(family.base, lambda o: frame.grams[o], with_second=False)[0][j]
    rhs = (U.conj().T @ M @ DU).T + (dbarU.conj().T @ M @ U).T
    return float(np.abs(lhs - rhs).max() / np.abs(frame.gram()).max())


def holomorphy_residual(family, frame):
    """``max_{j, a} ||dbar_{t^j} u_a|| / ||u_a||`` at the center."""
    fib = family.fiber()
    p, q = frame.p, frame.q
    P = harmonic_projector(fib, p, q).projection
    _, dbar = frame_derivatives(family, frame)
    worst = 0.0
    G = frame.gram()
    for j in range(family.m):
        R = P @ dbar[j]
        for a in range(frame.rank):
            r = FormSection((p, q), R[:, a])
            nr = math.sqrt(max(fib.inner(r, r).real, 0.0))
            worst = max(worst, nr / math.sqrt(G[a, a].real))
    return worst


@dataclass
class CurvatureTensor:
    """``theta[j, k, a, b] = (Theta_{jk} u_a, u_b)`` at the center of the base chart."""

    theta: np.ndarray
    gram: np.ndarray
    source: str = ""
    breakdown: dict = field(default_factory=dict)

    @property
    def m(self):
        return self.theta.shape[0]

    @property
    def rank(self):
        return self.theta.shape[2]

    def nakano_matrix(self):
        """Hermitian ``Q`` with ``x^H Q x = sum theta[j,k,a,b] x_{ja} conj(x_{kb})``."""
        m, r = self.m, self.rank
        return self.theta.transpose(1, 3, 0, 2).reshape(m * r, m * r)

    def reference_matrix(self):
        return np.kron(np.eye(self.m), self.gram.T)

    def griffiths_matrix(self, xi):
        """Form on frame coefficients for the rank-one tuple ``u_j = xi_j u``."""
        xi = np.asarray(xi, dtype=complex)
        return np.einsum("j,k,jkab->ba", xi, xi.conj(), self.theta)

    def hermitian_residual(self):
        T = self.theta
        other = np.conj(T.transpose(1, 0, 3, 2))
        return float(np.abs(T - other).max() / max(np.abs(T).max(), 1e-300))

    def frobenius(self):
        return float(np.linalg.norm(self.theta))

    def relative_error(self, other, floor=0.0):
        """Frobenius distance relative to the larger norm, or to ``floor`` when both are smaller."""
        diff = float(np.linalg.norm(self.theta - other.theta))
        scale = max(self.frobenius(), other.frobenius(), floor)
        return diff / scale if scale > 0 else diff


def fd_curvature_oracle(family, frame):
    """Chern curvature of the L^2 metric from finite differences of the frame Gram field.

    In a holomorphic frame ``Theta_{jk} = dG G^{-1} dbarG - d dbar G`` (matrix
    layout ``G[a, b] = (u_a, u_b)``); derivatives use the Richardson-extrapolated
    five-point stencils of the base lattice.
    """
    d, dbar, ddbar = base_derivatives(family.base, lambda o: frame.grams[o])
    G = frame.gram()
    Gi = np.linalg.inv(G)
    m = family.m
    r = frame.rank
    theta = np.zeros((m, m, r, r), dtype=complex)
    for j in range(m):
        for k in range(m):
            theta[j, k] = d[j] @ Gi @ dbar[k] - ddbar[j][k]
    return CurvatureTensor(theta, G, "fd-oracle")
