"""Kodaira-Spencer classes and the Weil-Petersson metric of the modular family of elliptic curves.

The fiber over ``tau`` is the real torus ``[0,1)^2`` with complex coordinate
``w = x + tau*y`` and area-normalized flat form. Vector fields and
(co)tangent-valued forms use the global frames ``d/dz`` and ``dz`` of the flat
coordinate ``z = s*w``, and the metric on ``T*`` is the one induced by the
fiber form, so ``|dz|^2 = 2`` and ``|d/dz|^2 = 1/2``.

A lift of ``d/dtau`` is ``V = d/dtau + (y + chi(x, y)) d/dw`` with ``chi`` a
periodic correction (``chi = 0`` is the flat choice); every choice gives the
same Kodaira-Spencer class.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import StencilIncomplete
from .family import BaseGrid, base_derivatives, q_semipositivity_values
from .fields import FourierMode
from .hodge import harmonic_projector
from .torus import FormSection, GridForm, LineBundleData, TorusGeometry, build_fiber


@dataclass(frozen=True)
class ModularFamily:
    center: complex = 2j
    step: float = 1e-2
    grid: int = 9
    resolution: int = 16
    area: float = 1.0
    lift_amplitude: float = 0.0  # amplitude of the periodic correction chi = amp * cos(2 pi (x + y))
    constant: bool = False  # fiber complex structure frozen at the center

    def __post_init__(self):
        for t in self.points():
            if t.imag <= 0:
                raise ValueError(f"grid point {t} leaves the upper half-plane")

    def points(self):
        h = self.step
        k = self.grid // 2
        return [complex(self.center) + h * (i + 1j * j) for i in range(-k, k + 1) for j in range(-k, k + 1)]

    def fiber_tau(self, tau):
        return complex(self.center) if self.constant else complex(tau)

    def fiber(self, tau, resolution=None):
        geom = TorusGeometry(((self.fiber_tau(tau), self.area),), resolution or self.resolution)
        return build_fiber(geom, LineBundleData((0,)))

    def scale(self, tau):
        return math.sqrt(self.area / self.fiber_tau(tau).imag)

    def chi_mode(self):
        return FourierMode("cos", ((1, 1),))


def _dbar_lift_values(family, tau, fib):
    """Coefficient of ``dbar V|_X`` in the frame ``dzbar (x) d/dz`` on the fiber grid."""
    ft = family.fiber_tau(tau)
    s = family.scale(tau)
    # V's fiber part is s (y + chi) d/dz; dbar_z y = i / (2 s Im tau). A constant family has no y term.
    flat = 0.0 if family.constant else 1j / (2 * ft.imag)
    coef = np.full(fib.npoints, flat, dtype=complex)
    if family.lift_amplitude:
        coef = coef + s * family.lift_amplitude * family.chi_mode().dzbar(fib.coords, fib.factors, 0)
    return coef


@dataclass
class KSClass:
    tau: complex
    representative: FormSection  # (0,1)-coefficients of dbar V in dzbar (x) d/dz
    harmonic: FormSection
    harmonicity_residual: float
    norm: float  # L^2 norm of the harmonic class
    flat_norm: float  # L^2 norm of dbar V itself


def _tx_norm(fib, u):
    # |dzbar|^2 |d/dz|^2 = 2 * 1/2
    return math.sqrt(max(fib.inner(u, u).real, 0.0) * 0.5)


def ks_class(family, tau):
    """Harmonic representative of the Kodaira-Spencer class of ``d/dtau`` at ``tau``."""
    fib = family.fiber(tau)
    vals = _dbar_lift_values(family, tau, fib)
    rep = fib.project(GridForm((0, 1), {((), (0,)): vals}))
    hp = harmonic_projector(fib, 0, 1)
    harm = hp.project(rep)
    M, A = fib.laplacian_forms(0, 1)
    nh = math.sqrt(max(fib.inner(harm, harm).real, 0.0))
    res = float(np.sqrt(abs(np.vdot(harm.coefficients, A @ harm.coefficients))) / nh) if nh > 0 else 0.0
    return KSClass(complex(tau), rep, harm, res, _tx_norm(fib, harm), _tx_norm(fib, rep))


def quadratic_differential_frame(family, tau):
    """Holomorphic frame ``dw (x) dw`` of ``H^{1,0}(T*)``, as the (1,0)-coefficient in ``dz (x) dz``."""
    fib = family.fiber(tau)
    s = family.scale(tau)
    vals = np.full(fib.npoints, s ** -2, dtype=complex)
    return fib, fib.project(GridForm((1, 0), {((0,), ()): vals}))


def pairing(fib, u, kappa):
    """``int u ^ kappa`` with the ``T* x T`` contraction, for ``u = g dz (x) dz`` and ``kappa = f dzbar (x) d/dz``."""
    g = fib.synthesize(u).values[((0,), ())]
    f = fib.synthesize(kappa).values[((), (0,))]
    # dz ^ dzbar = -2i dA
    return complex(-2j * np.sum(fib.quad_weight * g * f))


def ks_holomorphy_check(family, tau=None, h=None):
    """``|d/dtaubar|`` of ``tau -> int (dw (x) dw) ^ dbar V`` relative to its size (finite differences)."""
    tau = complex(family.center) if tau is None else complex(tau)
    base = BaseGrid(1, (tau,), family.step if h is None else h)

    def sample(o):
        t = base.point(o)[0]
        fib, u = quadratic_differential_frame(family, t)
        return np.array([pairing(fib, u, ks_class(family, t).representative)])

    d, dbar, _ = base_derivatives(base, sample, with_second=False)
    val = sample((0.0, 0.0))[0]
    size = max(abs(val), abs(d[0][0]))
    return float(abs(dbar[0][0]) / size) if size > 0 else 0.0


@dataclass
class KSWPData:
    family: ModularFamily
    taus: list
    g_wp: np.ndarray  # per grid point
    flat_bound: np.ndarray  # ||dbar V|_X||^2 per grid point
    ks_norms: np.ndarray
    pairings: np.ndarray
    residuals: np.ndarray = field(default=None)

    def table(self):
        rows = []
        for t, g, b in zip(self.taus, self.g_wp, self.flat_bound):
            rows.append({"re_tau": t.real, "im_tau": t.imag, "g_wp": float(g), "bound": float(b),
                         "g_wp_im_tau_sq": float(g * t.imag ** 2)})
        return rows


def wp_metric(family):
    """Generalized Weil-Petersson metric ``||d/dtau||^2_WP`` on the tau grid (dual-norm pairing)."""
    taus = family.points()
    g, bound, norms, pairs, res = [], [], [], [], []
    for t in taus:
        k = ks_class(family, t)
        fib = family.fiber(t)
        hp = harmonic_projector(fib, 1, 0)
        if hp.dimension == 0:
            raise ValueError("no holomorphic quadratic differentials to pair with")
        basis = hp.basis
        p = np.array([pairing(fib, u, k.representative) for u in basis])
        # T*-valued Gram: |dz|^2_{T*} = 2
        G = np.array([[2.0 * fib.inner(ua, ub) for ub in basis] for ua in basis]).T
        val = float(np.real(p.conj() @ np.linalg.solve(G.T, p)))
        g.append(val)
        bound.append(k.flat_norm ** 2)
        norms.append(k.norm)
        pairs.append(p[0])
        res.append(k.harmonicity_residual)
    return KSWPData(family, taus, np.array(g), np.array(bound), np.array(norms), np.array(pairs), np.array(res))


@dataclass
class PSHReport:
    passed: bool
    identically_minus_infinity: bool
    min_hessian: float
    tolerance: float
    hessian: np.ndarray
    cotangent_semipositive: bool

    @property
    def verdict(self):
        return "pass" if self.passed else "fail"

    def as_dict(self):
        return {"verdict": self.verdict, "identically_minus_infinity": self.identically_minus_infinity,
                "min_hessian": self.min_hessian, "tolerance": self.tolerance,
                "cotangent_semipositive": self.cotangent_semipositive}


def complex_hessian_9pt(values, h):
    """``d^2/dtau dtaubar`` on interior points of a square grid (isotropic nine-point Laplacian / 4)."""
    f = np.asarray(values, dtype=float)
    if f.shape[0] < 3 or f.shape[1] < 3:
        raise StencilIncomplete("the nine-point stencil needs a grid of at least 3x3")
    c = f[1:-1, 1:-1]
    edges = f[2:, 1:-1] + f[:-2, 1:-1] + f[1:-1, 2:] + f[1:-1, :-2]
    corners = f[2:, 2:] + f[:-2, :-2] + f[2:, :-2] + f[:-2, 2:]
    lap = (4 * edges + corners - 20 * c) / (6 * h * h)
    return 0.25 * lap


def cotangent_check(family, tau):
    """q=0 semipositivity of ``T*_{X/B}`` with the induced metric ``|dw|^2 = 2 Im tau / area``."""
    if family.constant:
        H = np.zeros((2, 2, 1))
    else:
        # phi = -log(2 Im tau / area): d dbar phi = 1 / (4 (Im tau)^2), fiber-flat
        H = np.zeros((2, 2, 1))
        H[0, 0, 0] = 2 * 0.25 / tau.imag ** 2
    G = np.eye(2)[:, :, None].astype(complex)
    vals, _ = q_semipositivity_values(H.astype(complex), G, 0)
    return bool(vals.min() >= -1e-12)


def psh_check(data, tol=1e-8):
    """Plurisubharmonicity of ``log ||d/dtau||_WP`` on the interior of the grid."""
    fam = data.family
    k = fam.grid
    g = np.asarray(data.g_wp).reshape(k, k)
    semi = cotangent_check(fam, complex(fam.center))
    # the pairing vanishes up to roundoff on a trivial family
    floor = 1e-14 / complex(fam.center).imag ** 2
    if np.all(g <= floor):
        return PSHReport(True, True, -math.inf, float(tol), np.zeros((k - 2, k - 2)), semi)
    if np.any(g <= floor):
        raise ValueError("WP metric vanishes on part of the grid")
    logn = 0.5 * np.log(g)
    hess = complex_hessian_9pt(logn, fam.step)
    mn = float(hess.min())
    return PSHReport(bool(mn >= -tol), False, mn, float(tol), hess, semi)
