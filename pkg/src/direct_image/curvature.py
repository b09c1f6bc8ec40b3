"""Term-by-term curvature of the bundle of harmonic (p,q)-forms.

Every term is stored as a tensor ``T[j, k, a, b]`` so that for a tuple
``u_j = sum_a x[j, a] u_a`` of frame combinations the scalar is
``sum T[j, k, a, b] x[j, a] conj(x[k, b])``. The assembled curvature is

    ||b||^2 - ||a||^2 + A + B + Nak + Gri.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh, null_space
from scipy.optimize import minimize

from . import exterior as ext
from . import pointwise as pw
from .bundle import CurvatureTensor, chern_D, frame_derivatives, lie_term
from .errors import BidegreeError, SingularCommutator, TermContractViolated
from .family import PositivityReport, check_q_semipositive, horizontal_lift, total_curvature
from .hodge import (coexact_projection, commutator_field, commutator_inverse, default_eps, dbar_minimal_solve,
                    exact_projection, fiber_curvature, grid_inner, harmonic_projector)
from .torus import FormSection, GridForm

ASSEMBLY = ("b", "a", "A", "B", "Nak", "Gri")
SIGNS = {"b": 1.0, "a": -1.0, "A": 1.0, "B": 1.0, "Nak": 1.0, "Gri": 1.0}


@dataclass
class TermBreakdown:
    p: int
    q: int
    eps: float
    terms: dict  # name -> (m, m, r, r) tensor
    norms: dict = field(default_factory=dict)  # "a", "b", "c" -> (m, r) pointwise-form norms
    checks: dict = field(default_factory=dict)
    rhs: list = field(default_factory=list, repr=False)  # per j: Galerkin columns of dbar a_j
    a_columns: list = field(default_factory=list, repr=False)

    def assembled(self):
        return sum(SIGNS[k] * self.terms[k] for k in ASSEMBLY)

    def scalar(self, name, x):
        x = np.asarray(x, dtype=complex)
        return complex(np.einsum("jkab,ja,kb->", self.terms[name], x, x.conj()))

    def scalars(self, x):
        return {name: self.scalar(name, x).real for name in self.terms}

    def form(self, name):
        T = self.terms[name]
        m, r = T.shape[0], T.shape[2]
        return T.transpose(1, 3, 0, 2).reshape(m * r, m * r)

    def min_form(self, name, gram):
        """Smallest eigenvalue of a term's Hermitian form relative to the frame Gram."""
        m = self.terms[name].shape[0]
        return _min_generalized(self.form(name), np.kron(np.eye(m), gram.T))

    def min_rank_one(self, name, gram):
        return _griffiths_min(self.terms[name], gram)[0]

    def invariants(self, gram, tol):
        """Sign conditions the terms satisfy whenever the formula's hypotheses hold."""
        out = {"Nak": self.min_form("Nak", gram), "Gri": self.min_rank_one("Gri", gram)}
        if "R_eps" in self.terms:
            out["R_eps"] = self.min_form("R_eps", gram)
        return {k: {"min": v, "ok": bool(v >= -tol)} for k, v in out.items()}

    def as_dict(self, gram=None):
        x = np.zeros(self.terms["a"].shape[::2][:2], dtype=complex)
        x[0, 0] = 1.0
        d = {"p": self.p, "q": self.q, "eps": self.eps,
             "scalars_first_element": {k: float(v) for k, v in self.scalars(x).items()},
             "frobenius": {k: float(np.linalg.norm(v)) for k, v in self.terms.items()},
             "checks": {k: float(v) for k, v in self.checks.items()}}
        if gram is not None:
            d["min_forms"] = {k: float(self.min_form(k, gram)) for k in self.terms}
        return d


def _min_generalized(Q, R):
    Q = 0.5 * (Q + Q.conj().T)
    R = 0.5 * (R + R.conj().T)
    L = np.linalg.cholesky(R)
    Li = np.linalg.inv(L)
    S = Li @ Q @ Li.conj().T
    return float(np.linalg.eigvalsh(0.5 * (S + S.conj().T))[0])


def xi_net(m, size=32):
    """Fixed net of unit directions in C^m (up to phase)."""
    if m == 1:
        return [np.ones(1, dtype=complex)]
    if m != 2:
        rng = np.random.default_rng(0)
        v = rng.standard_normal((size, m)) + 1j * rng.standard_normal((size, m))
        return [r / np.linalg.norm(r) for r in v]
    out = []
    for i in range(4):
        th = (i + 0.5) * math.pi / 8
        for k in range(8):
            out.append(np.array([math.cos(th), math.sin(th) * np.exp(2j * math.pi * k / 8)]))
    return out


def _griffiths_min(theta, gram):
    """Minimum of the form over rank-one tuples ``xi (x) u``, returning (value, xi)."""
    m = theta.shape[0]
    Gt = gram.T

    def along(xi):
        xi = xi / np.linalg.norm(xi)
        M = np.einsum("j,k,jkab->ba", xi, xi.conj(), theta)
        return _min_generalized(M, Gt)

    best = (math.inf, None)
    for xi in xi_net(m):
        v = along(xi)
        if v < best[0]:
            best = (v, xi)
    if m == 2:
        def obj(s):
            return along(np.array([math.cos(s[0]), math.sin(s[0]) * np.exp(1j * s[1])]))

        x0 = best[1]
        s0 = [math.atan2(abs(x0[1]), abs(x0[0])), float(np.angle(x0[1]) - np.angle(x0[0]))]
        res = minimize(obj, s0, method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-14})
        if res.fun < best[0]:
            s = res.x
            best = (float(res.fun), np.array([math.cos(s[0]), math.sin(s[0]) * np.exp(1j * s[1])]))
    return best


def positivity_verdict(tensor, gram=None, mode="griffiths", tol=None):
    """Griffiths or Nakano semipositivity of a curvature tensor relative to the frame Gram."""
    theta = tensor.theta if isinstance(tensor, CurvatureTensor) else np.asarray(tensor)
    if gram is None:
        gram = tensor.gram
    gram = np.asarray(gram)
    m, r = theta.shape[0], theta.shape[2]
    if tol is None:
        tol = 1e-6 * max(float(np.abs(theta).max() / np.abs(gram).max()), 1.0)
    if mode == "nakano":
        Q = theta.transpose(1, 3, 0, 2).reshape(m * r, m * r)
        val = _min_generalized(Q, np.kron(np.eye(m), gram.T))
        witness = {"mode": mode}
    elif mode == "griffiths":
        val, xi = _griffiths_min(theta, gram)
        witness = {"mode": mode, "xi": [[float(z.real), float(z.imag)] for z in xi]}
    else:
        raise ValueError(f"unknown positivity mode {mode!r}")
    return PositivityReport(bool(val >= -tol), float(val), float(tol), witness)


# pointwise helpers -------------------------------------------------------------

def _volume(n):
    return ext.top_coefficient(ext.normalized_power(ext.hermitian_11(np.eye(n)), n), n)


def top_pairing(fiber, alpha, beta):
    """``int {alpha, beta}`` over the fiber, for pointwise forms whose degrees fill the top."""
    dens = ext.top_coefficient(ext.wedge(alpha, ext.conj(beta)), fiber.n)
    return complex(np.sum(fiber.measure * dens) / _volume(fiber.n))


def _columns(fiber, bidegree, U):
    return [fiber.synthesize(FormSection(bidegree, U[:, a])).values for a in range(U.shape[1])]


def _sesq(fiber, bidegree, X, Y, weight=None):
    """``T[a, b] = (f X_a, Y_b)`` for Galerkin columns, with pointwise weight ``f``."""
    M = fiber.gram(*bidegree) if weight is None else fiber.gram_with(*bidegree, weight)
    return (Y.conj().T @ M @ X).T


def _grid_dzbar(fiber, values, b):
    """Spectral ``d/dzbar_b`` of a periodic function sampled on the fiber grid."""
    fac = fiber.factors[b]
    N = fac.resolution
    shape = tuple(2 * [N] * fiber.n)
    g = np.asarray(values, dtype=complex).reshape(shape)
    k = np.fft.fftfreq(N, 1.0 / N)
    k[N // 2] = 0.0
    ax_x, ax_y = 2 * b, 2 * b + 1

    def deriv(ax):
        kk = (2j * math.pi * k).reshape([-1 if i == ax else 1 for i in range(len(shape))])
        return np.fft.ifft(kk * np.fft.fft(g, axis=ax), axis=ax)

    out = (fac.tau * deriv(ax_x) - deriv(ax_y)) / (2j * fac.scale * fac.tau2)
    return out.ravel()


def _wedge_dzbar(coeffs, form, n):
    """``sum_b coeffs[b] dzbar_b ^ form`` for pointwise coefficient arrays."""
    one = {((), (b,)): coeffs[b] for b in range(n)}
    return ext.wedge(one, form)


def _to_grid(fiber, bidegree, d):
    return GridForm(bidegree, {c: v for c, v in d.items()})


def _l2(fiber, u):
    return math.sqrt(max(fiber.inner(u, u).real, 0.0))


# shared terms -----------------------------------------------------------------

def _cjk(family, fib):
    return family.kahler.horizontal_coefficients(family.center, fib.coords, fib.factors)


def a_term_pointwise(family, fib, U, q, cjk=None):
    """``A`` from ``i^{(n-q)^2} int c_jk omega_{q-1} ^ i Theta ^ *u_j ^ conj(*u_k)``."""
    n = fib.n
    m, r = family.m, U.shape[1]
    out = np.zeros((m, m, r, r), dtype=complex)
    if q == 0:
        return out
    cjk = _cjk(family, fib) if cjk is None else cjk
    stars = _columns(fib, (n - q, 0), fib.star(n, q) @ U)
    theta = ext.hermitian_11(fiber_curvature(fib))
    pre = ext.wedge(ext.normalized_power(pw.kahler(n), q - 1), theta)
    phase = 1j ** ((n - q) ** 2)
    for a in range(r):
        left = ext.wedge(pre, stars[a])
        for b in range(r):
            dens = ext.top_coefficient(ext.wedge(left, ext.conj(stars[b])), n) / _volume(n)
            for j in range(m):
                for k in range(m):
                    out[j, k, a, b] = phase * np.sum(fib.measure * cjk[j, k] * dens)
    return out


def a_term_spectral(family, fib, U, q, cjk=None):
    """``A`` from ``-i i^{(n-q)^2} int {c_jk omega_{q-1} ^ *u_j, d^E dbar *u_k}`` (spectral d^E dbar)."""
    n = fib.n
    m, r = family.m, U.shape[1]
    out = np.zeros((m, m, r, r), dtype=complex)
    if q == 0:
        return out
    cjk = _cjk(family, fib) if cjk is None else cjk
    S = fib.star(n, q) @ U
    stars = _columns(fib, (n - q, 0), S)
    second = _columns(fib, (n - q + 1, 1), fib.delE(n - q, 1) @ fib.dbar(n - q, 0) @ S)
    wq = ext.normalized_power(pw.kahler(n), q - 1)
    phase = -1j * 1j ** ((n - q) ** 2)
    for a in range(r):
        left = ext.wedge(wq, stars[a])
        for b in range(r):
            dens = ext.top_coefficient(ext.wedge(left, ext.conj(second[b])), n) / _volume(n)
            for j in range(m):
                for k in range(m):
                    out[j, k, a, b] = phase * np.sum(fib.measure * cjk[j, k] * dens)
    return out


def nak_term(family, fib, U, q, cjk=None):
    """``Nak = sum (c_jk dbar *u_j, dbar *u_k)``."""
    n = fib.n
    m, r = family.m, U.shape[1]
    out = np.zeros((m, m, r, r), dtype=complex)
    if n - q + 0 > n or q == 0:
        return out
    cjk = _cjk(family, fib) if cjk is None else cjk
    W = fib.dbar(n - q, 0) @ fib.star(n, q) @ U
    for j in range(m):
        for k in range(m):
            out[j, k] = _sesq(fib, (n - q, 1), W, W, cjk[j, k])
    return out


def _c_eps(fib, cforms, p, q, eps, curvature=None):
    """``C_eps[j, k, a, b] = ((Q_eps)^{-1} c_j^{u_a}, c_k^{u_b})`` for pointwise (n, q+1)-forms."""
    m, r = len(cforms), len(cforms[0])
    out = np.zeros((m, m, r, r), dtype=complex)
    curv = fiber_curvature(fib) if curvature is None else curvature
    solved = [[commutator_inverse(fib, curv, eps, _to_grid(fib, (p, q + 1), c)) for c in row] for row in cforms]
    for j in range(m):
        for k in range(m):
            for a in range(r):
                for b in range(r):
                    out[j, k, a, b] = grid_inner(fib, solved[j][a], _to_grid(fib, (p, q + 1), cforms[k][b]))
    return out


def _tensor_from_columns(fib, bidegree, cols):
    """``T[j, k, a, b] = (cols[j][:, a], cols[k][:, b])``."""
    m = len(cols)
    r = cols[0].shape[1]
    out = np.zeros((m, m, r, r), dtype=complex)
    for j in range(m):
        for k in range(m):
            out[j, k] = _sesq(fib, bidegree, cols[j], cols[k])
    return out


def _pointwise_tensor(fib, bidegree, forms):
    m, r = len(forms), len(forms[0])
    out = np.zeros((m, m, r, r), dtype=complex)
    for j in range(m):
        for k in range(m):
            for a in range(r):
                for b in range(r):
                    out[j, k, a, b] = grid_inner(fib, GridForm(bidegree, forms[j][a]), GridForm(bidegree, forms[k][b]))
    return out


# product case -----------------------------------------------------------------

def product_curvature(family, frame, q=None, eps=None):
    """Curvature of the harmonic bundle for a product Kaehler form, term by term."""
    if not family.kahler.is_product:
        raise ValueError("product_curvature needs a product Kaehler form; use general_curvature")
    p = frame.p
    q = frame.q if q is None else q
    if q != frame.q:
        raise BidegreeError("q does not match the frame")
    fib = family.fiber()
    t = family.center
    n, m = fib.n, family.m
    U = frame.sections[frame.center]
    r = U.shape[1]
    Pco = coexact_projection(fib, p, q)
    Pex = exact_projection(fib, p, q)
    a_cols, lb_cols, rhs = [], [], []
    for j in range(m):
        fj = family.weight.base_d(t, j, fib.coords)
        Phi = fib.multiplication(p, q, fj)
        if q < n:
            # minimal solution of dbar a = dbar(phi_j) ^ u
            V = fib.dbar(p, q) @ Phi @ U
            rhs.append(V)
            cols = [dbar_minimal_solve(fib, FormSection((p, q + 1), V[:, a])).coefficients for a in range(r)]
            a_cols.append(np.column_stack(cols))
        else:
            a_cols.append(Pco @ Phi @ U)
        lb_cols.append(Pex @ fib.multiplication(p, q, np.conj(fj)) @ U)
    terms = {"a": _tensor_from_columns(fib, (p, q), a_cols), "b": np.zeros((m, m, r, r), dtype=complex)}
    B = np.zeros((m, m, r, r), dtype=complex)
    for j in range(m):
        for k in range(m):
            B[j, k] = _sesq(fib, (p, q), U, U, family.weight.base_d_dbar(t, j, k, fib.coords))
    terms["B"] = B
    gri = np.zeros((m, m, r, r), dtype=complex)
    for j in range(m):
        for k in range(m):
            gri[j, k] = _sesq(fib, (p, q), lb_cols[k], lb_cols[j])
    terms["Gri"] = gri
    checks = {}
    if p == n:
        cjk = _cjk(family, fib)
        terms["A"] = a_term_pointwise(family, fib, U, q, cjk)
        terms["A_alt"] = a_term_spectral(family, fib, U, q, cjk)
        terms["Nak"] = nak_term(family, fib, U, q, cjk)
        fl = _floor(frame, fib)
        checks["A_two_route"] = _rel(terms["A"], terms["A_alt"], fl)
        checks["A_plus_Nak"] = _rel(terms["A"] + terms["Nak"], 0.0 * B,
                                    max(np.linalg.norm(terms["A"]), np.linalg.norm(terms["Nak"]), fl))
    else:
        terms["A"] = np.zeros_like(B)
        terms["Nak"] = np.zeros_like(B)
    if q < n and p == n:
        eps = default_eps(fib, q=q) if eps is None else eps
        cforms = [[_c_form(fib, family, t, j, U[:, a], p, q, None) for a in range(r)] for j in range(m)]
        terms["C_eps"] = _c_eps(fib, cforms, p, q, eps)
        terms["R_eps"] = terms["C_eps"] - terms["a"]
    bd = TermBreakdown(p, q, float(eps) if eps is not None else 0.0, terms, _norms(terms), checks, rhs, a_cols)
    # A + Nak vanish identically for a product form; assemble without them
    theta = terms["B"] - terms["a"] + terms["Gri"]
    return CurvatureTensor(theta, frame.gram(), "product", {"terms": bd}), bd


def _rel(x, y, floor=0.0):
    s = max(np.linalg.norm(x), np.linalg.norm(y), floor)
    return float(np.linalg.norm(x - y) / s) if s > 0 else 0.0


def _floor(frame, fib):
    # size below which a term counts as zero: 1e-12 of |G| times the curvature size
    curv = float(np.abs(fiber_curvature(fib)).max())
    return 1e-12 * float(np.linalg.norm(frame.gram())) * max(curv, 1.0)


def _norms(terms):
    out = {}
    for name in ("a", "b"):
        if name in terms:
            T = terms[name]
            out[name] = np.sqrt(np.maximum(np.einsum("jjaa->ja", T).real, 0.0))
    return out


def _c_form(fib, family, t, j, ucoef, p, q, lift):
    """Pointwise ``(V_j -| Theta)|_X ^ u`` as an exterior dict."""
    n, m = fib.n, family.m
    H = total_curvature(family, t)
    coeffs = []
    for b in range(n):
        c = H[j, m + b].copy()
        if lift is not None:
            for a in range(n):
                c = c + lift.correction[a] * H[m + a, m + b]
        coeffs.append(0.5 * c)
    u = fib.synthesize(FormSection((p, q), ucoef)).values
    return _wedge_dzbar(coeffs, u, n)


# general case -----------------------------------------------------------------

def _b_form(fib, lift, ucoef, p, q):
    """Pointwise ``dbar V_j|_X -| u = sum_a dbar(v^a) ^ (d/dz_a -| u)``."""
    n = fib.n
    u = fib.synthesize(FormSection((p, q), ucoef)).values
    out = {}
    for a in range(n):
        grads = [_grid_dzbar(fib, lift.correction[a], b) for b in range(n)]
        unit = [None] * n
        unit[a] = 1.0
        out = ext.add(out, _wedge_dzbar(grads, ext.interior(unit, u), n))
    return out


def general_curvature(family, frame, q=None, eps=None, contract_tol=1e-8):
    """Curvature of the bundle of harmonic (n,q)-forms for a twisted total Kaehler form.

    ``a_j`` is the minimal solution of ``dbar a = d^E b_j + c_j``; the same
    quantity computed from its definition ``D_j u - L_j u`` must satisfy the term
    contracts (``dbar* a = 0`` and the dbar-equation) or ``TermContractViolated``
    is raised.
    """
    p = frame.p
    q = frame.q if q is None else q
    fib = family.fiber()
    n, m = fib.n, family.m
    if p != n or q != frame.q:
        raise BidegreeError("general_curvature needs (n,q)-forms matching the frame")
    if frame.mode != "holomorphic":
        raise ValueError("general_curvature needs a holomorphic frame")
    if not family.kahler.is_product and (n != 1 or q != 0):
        raise ValueError("twisted Kaehler forms are supported for (1,0)-forms on curves only")
    t = family.center
    U = frame.sections[frame.center]
    r = U.shape[1]
    lifts = [horizontal_lift(family, j) for j in range(m)]
    derivs = frame_derivatives(family, frame)
    H = total_curvature(family, t)
    cjk = _cjk(family, fib)

    bforms, cforms, a_cols, rhs_cols = [], [], [], []
    contract = {"dbar_adjoint": 0.0, "equation": 0.0, "definition": 0.0}
    for j in range(m):
        brow = [_b_form(fib, lifts[j], U[:, a], p, q) for a in range(r)] if q < n else None
        crow = [_c_form(fib, family, t, j, U[:, a], p, q, lifts[j]) for a in range(r)] if q < n else None
        bforms.append(brow)
        cforms.append(crow)
        if q == n:
            a_cols.append(np.zeros_like(U))
            continue
        a_def = chern_D(family, frame, j, derivs) - lie_term(family, frame, j, derivs)
        cols, rcols = [], []
        for a in range(r):
            bproj = fib.project(GridForm((n - 1, q + 1), brow[a])).coefficients if n >= 1 else 0
            rhs = fib.delE(n - 1, q + 1) @ bproj + fib.project(GridForm((n, q + 1), crow[a])).coefficients
            v = FormSection((n, q + 1), rhs)
            rcols.append(rhs)
            sol = dbar_minimal_solve(fib, v, tol=1e-7)
            cols.append(sol.coefficients)
            ad = FormSection((n, q), a_def[:, a])
            scale = max(_l2(fib, sol), _l2(fib, v), 1e-300)
            if q >= 1:
                contract["dbar_adjoint"] = max(contract["dbar_adjoint"],
                                               _l2(fib, FormSection((n, q - 1), fib.dbar_adj(n, q) @ ad.coefficients)) / scale)
            eq = FormSection((n, q + 1), fib.dbar(n, q) @ ad.coefficients - rhs)
            contract["equation"] = max(contract["equation"], _l2(fib, eq) / scale)
            contract["definition"] = max(contract["definition"], _l2(fib, ad - sol) / scale)
        a_cols.append(np.column_stack(cols))
        rhs_cols.append(np.column_stack(rcols))
    bad = {k: v for k, v in contract.items() if v > contract_tol}
    if bad:
        raise TermContractViolated(f"term contracts fail: {bad}", residuals=contract)

    zero = np.zeros((m, m, r, r), dtype=complex)
    terms = {"a": _tensor_from_columns(fib, (n, q), a_cols)}
    terms["b"] = _pointwise_tensor(fib, (n - 1, q + 1), bforms) if q < n and n >= 1 else zero.copy()
    B = np.zeros_like(zero)
    for j in range(m):
        for k in range(m):
            Vj = np.vstack([np.repeat(np.eye(m)[j][:, None], fib.npoints, axis=1), lifts[j].correction])
            Vk = np.vstack([np.repeat(np.eye(m)[k][:, None], fib.npoints, axis=1), lifts[k].correction])
            f = 0.5 * np.einsum("ap,abp,bp->p", Vj, H, Vk.conj())
            B[j, k] = _sesq(fib, (n, q), U, U, f)
    terms["B"] = B
    terms["A"] = a_term_pointwise(family, fib, U, q, cjk)
    terms["A_alt"] = a_term_spectral(family, fib, U, q, cjk)
    terms["Nak"] = nak_term(family, fib, U, q, cjk)
    # a_kbar^u = dbar_t u^t + dbar_X(delta_{conj v_k} u)
    lb = []
    for k in range(m):
        X = derivs[1][k].copy()
        if q >= 1:
            for a in range(r):
                u = fib.synthesize(FormSection((n, q), U[:, a])).values
                w = fib.project(GridForm((n, q - 1), ext.interior_bar(list(lifts[k].correction), u)))
                X[:, a] += fib.dbar(n, q - 1) @ w.coefficients
        lb.append(X)
    gri = np.zeros_like(zero)
    for j in range(m):
        for k in range(m):
            gri[j, k] = _sesq(fib, (n, q), lb[k], lb[j])
    terms["Gri"] = gri
    if q < n:
        eps = default_eps(fib, q=q) if eps is None else eps
        terms["C_eps"] = _c_eps(fib, cforms, n, q, eps)
        terms["R_eps"] = terms["C_eps"] + terms["b"] - terms["a"]
    checks = {"A_two_route": _rel(terms["A"], terms["A_alt"], _floor(frame, fib))}
    checks.update({f"contract_{k}": v for k, v in contract.items()})
    checks["lift_residual"] = max(lf.residual for lf in lifts)
    bd = TermBreakdown(n, q, float(eps) if eps is not None else 0.0, terms, _norms(terms), checks,
                       rhs_cols, a_cols)
    return CurvatureTensor(bd.assembled(), frame.gram(), "general", {"terms": bd}), bd


# regularized identity: A + B + eps sum (c_jk u_j, u_k) - C_eps >= 0 ----------------------------

@dataclass
class RegularizedIdentityReport:
    eps: float
    route_formula: np.ndarray  # (m, m, r, r)
    route_integral: np.ndarray
    agreement: float
    min_value: float  # smallest eigenvalue of the I_eps form relative to the Gram
    tolerance: float
    precondition: bool
    hormander: dict
    passed: bool

    def as_dict(self):
        return {"eps": self.eps, "agreement": self.agreement, "min_value": self.min_value,
                "tolerance": self.tolerance, "precondition": self.precondition,
                "hormander": self.hormander, "verdict": "pass" if self.passed else "fail"}


def _curvature_terms(family, frame, eps):
    if family.kahler.is_product:
        return product_curvature(family, frame, eps=eps)[1]
    return general_curvature(family, frame, eps=eps)[1]


def _relabel_fiber(form, m):
    return {(tuple(i + m for i in I), tuple(j + m for j in J)): c for (I, J), c in form.items()}


def _total_forms(family, eps, q):
    """``T_eps = omega_q ^ i Theta + eps omega_{q+1}`` on the total space, pointwise over the center fiber."""
    G = family.kahler_matrix()
    H = total_curvature(family)
    omega = ext.hermitian_11(G)
    T = ext.add(ext.wedge(ext.normalized_power(omega, q), ext.hermitian_11(H)),
                ext.scale(ext.normalized_power(omega, q + 1), eps))
    return T


def _lift_vector(family, lift, j):
    m = family.m
    return [1.0 if i == j else None for i in range(m)] + list(lift.correction)


def integral_route(family, frame, eps):
    """``I_eps`` from the fiber integral of ``c_q {T_eps ^ u*, u*}`` with constrained dual representatives."""
    fib = family.fiber()
    n, m = fib.n, family.m
    p, q = frame.p, frame.q
    if p != n or q >= n:
        raise BidegreeError("the dual-representative construction needs (n,q)-forms with q < n")
    N = m + n
    U = frame.sections[frame.center]
    r = U.shape[1]
    fiber_idx = list(range(m, N))
    T = _total_forms(family, eps, q)
    Tt = ext.restrict(T, fiber_idx)
    stars = [_relabel_fiber(s, m) for s in _columns(fib, (n - q, 0), fib.star(n, q) @ U)]
    # pointwise matrix of w -> T^t ^ w from (n-q-1, 0) to (n, q+1)
    src = [_relabel_fiber({f: 1.0}, m) for f in ext.frame(n, n - q - 1, 0)]
    tgt = [next(iter(_relabel_fiber({f: 1.0}, m))) for f in ext.frame(n, n, q + 1)]
    npts = fib.npoints
    mat = np.zeros((npts, len(tgt), len(src)), dtype=complex)
    for col, e in enumerate(src):
        img = ext.wedge(Tt, e)
        for row, key in enumerate(tgt):
            mat[:, row, col] = img.get(key, 0.0)
    sv = np.linalg.svd(mat, compute_uv=False)
    bad = np.nonzero(sv[:, -1] <= 1e-12 * max(sv.max(), 1e-300))[0]
    if bad.size:
        raise SingularCommutator(f"dual-representative constraint singular at {bad.size} grid points",
                                 points=bad.tolist())
    lifts = [horizontal_lift(family, j) for j in range(m)]
    dt = {(tuple(range(m)), ()): 1.0}
    vol = ext.top_coefficient(ext.wedge(_relabel_fiber(ext.normalized_power(pw.kahler(n), n), m),
                                        ext.scale(ext.wedge(dt, ext.conj(dt)), 1j ** (m * m))), N)
    cq = 1j ** ((m + n - q - 1) ** 2)
    ustar = {}
    for j in range(m):
        V = _lift_vector(family, lifts[j], j)
        dV_dt = ext.interior(V[:m] + [None] * n, dt)
        for a in range(r):
            rhs = ext.restrict(ext.interior(V, ext.wedge(T, stars[a])), fiber_idx)
            b = np.stack([np.asarray(rhs.get(key, np.zeros(npts)), dtype=complex) * np.ones(npts) for key in tgt], axis=1)
            w = np.linalg.solve(mat, -b[..., None])[..., 0]
            wform = {next(iter(e)): w[:, i] for i, e in enumerate(src)}
            full = ext.add(stars[a], ext.wedge({((j,), ()): 1.0}, wform))
            ustar[j, a] = ext.wedge(full, dV_dt)
    out = np.zeros((m, m, r, r), dtype=complex)
    for (j, a), uj in ustar.items():
        left = ext.wedge(T, uj)
        for (k, b), uk in ustar.items():
            dens = ext.top_coefficient(ext.wedge(left, ext.conj(uk)), N)
            out[j, k, a, b] = cq * np.sum(fib.measure * dens) / vol
    return out


def formula_route(family, frame, eps, terms=None):
    """``I_eps = A + B + eps sum (c_jk u_j, u_k) - C_eps`` from the curvature terms."""
    fib = family.fiber()
    bd = _curvature_terms(family, frame, eps) if terms is None else terms
    U = frame.sections[frame.center]
    cjk = _cjk(family, fib)
    m = family.m
    E = np.zeros_like(bd.terms["B"])
    for j in range(m):
        for k in range(m):
            E[j, k] = _sesq(fib, (frame.p, frame.q), U, U, cjk[j, k])
    return bd.terms["A"] + bd.terms["B"] + eps * E - bd.terms["C_eps"]


def hormander_bound(family, frame, eps=None, terms=None):
    """Compare ``||a||^2`` with ``I(v) = inf_{v = d^E b + c} ||b||^2 + (Q^{-1} c, c)`` as Hermitian forms.

    ``v = sum_j dbar a_j`` ranges over frame tuples; the infimum runs over the
    discrete (n-1, q+1) space. Uses ``Q = [i Theta, Lambda]`` itself when it is
    positive at every grid point and ``Q + eps`` otherwise.
    """
    fib = family.fiber()
    n, q = fib.n, frame.q
    bd = _curvature_terms(family, frame, eps) if terms is None else terms
    curv = fiber_curvature(fib)
    Qf = commutator_field(fib, curv, n, q + 1)
    lam = np.linalg.eigvalsh(0.5 * (Qf + Qf.conj().transpose(0, 2, 1)))
    use_eps = 0.0 if lam.min() > 1e-12 * max(abs(lam).max(), 1.0) else (bd.eps if eps is None else eps)
    Mc = fib.gram(n, q + 1)
    dim = Mc.shape[0]
    P = np.zeros((dim, dim), dtype=complex)
    for i in range(dim):
        e = np.zeros(dim, dtype=complex)
        e[i] = 1.0
        P[:, i] = fib.project(commutator_inverse(fib, curv, use_eps, FormSection((n, q + 1), e))).coefficients
    K = Mc @ P
    K = 0.5 * (K + K.conj().T)
    if n >= 1:
        D = fib.delE(n - 1, q + 1)
        Mb = fib.gram(n - 1, q + 1)
        S = Mb + D.conj().T @ K @ D
        KD = K @ D
        Kred = K - KD @ np.linalg.solve(S, KD.conj().T)
    else:
        Kred = K
    m, r = len(bd.rhs), bd.rhs[0].shape[1]
    I = np.zeros((m, m, r, r), dtype=complex)
    for j in range(m):
        for k in range(m):
            I[j, k] = (bd.rhs[k].conj().T @ Kred @ bd.rhs[j]).T
    gap = I - bd.terms["a"]
    G = frame.gram()
    gmin = _min_generalized(gap.transpose(1, 3, 0, 2).reshape(m * r, m * r), np.kron(np.eye(m), G.T))
    return {"eps": float(use_eps), "min_gap": gmin,
            "I_min": _min_generalized(I.transpose(1, 3, 0, 2).reshape(m * r, m * r), np.kron(np.eye(m), G.T)),
            "a_norm_max": float(np.abs(bd.terms["a"]).max()), "I": I}


def regularized_identity_check(family, frame, q=None, eps=None, tol=None, precondition=None):
    """Evaluate ``I_eps`` by the term formula and by the fiber integral, and test the Hoermander bound."""
    q = frame.q if q is None else q
    if q != frame.q:
        raise BidegreeError("q does not match the frame")
    fib = family.fiber()
    if frame.p != fib.n or q >= fib.n:
        raise BidegreeError("the regularized identity needs p = n and q < n")
    eps = default_eps(fib, q=q) if eps is None else float(eps)
    scale = family.curvature_scale()
    tol = 1e-8 * scale if tol is None else tol
    if precondition is None:
        precondition = check_q_semipositive(family, q).passed
    bd = _curvature_terms(family, frame, eps)
    f = formula_route(family, frame, eps, bd)
    g = integral_route(family, frame, eps)
    agree = _rel(f, g, _floor(frame, fib))
    G = frame.gram()
    m, r = f.shape[0], f.shape[2]
    low = _min_generalized(f.transpose(1, 3, 0, 2).reshape(m * r, m * r), np.kron(np.eye(m), G.T))
    horm = hormander_bound(family, frame, eps, bd)
    hd = {k: v for k, v in horm.items() if k != "I"}
    hd["ok"] = bool(horm["min_gap"] >= -tol)
    passed = bool(precondition and agree <= 1e-6 and low >= -tol and hd["ok"])
    return RegularizedIdentityReport(eps, f, g, agree, low, float(tol), bool(precondition), hd, passed)


# the bundle of dbar-closed forms ------------------------------------------------

@dataclass
class KBundleForm:
    basis: np.ndarray  # M-orthonormal columns spanning the truncated subspace
    nakano: np.ndarray  # (m*r, m*r) Hermitian form on tuples
    report: PositivityReport


def closed_subspace(fib, p, q, cutoff=None):
    """M-orthonormal basis of the discrete ``ker dbar`` ordered by Laplace eigenvalue; first ``cutoff`` kept."""
    M, A = fib.laplacian_forms(p, q)
    if q < fib.n:
        Z = null_space(fib.dbar(p, q))
    else:
        Z = np.eye(M.shape[0], dtype=complex)
    lam, W = eigh(Z.conj().T @ A @ Z, Z.conj().T @ M @ Z)
    B = Z @ W
    if cutoff is not None:
        B = B[:, : int(cutoff)]
    return B


def kbundle_form(family, p, q, basis):
    """Curvature ``sum (phi_jk e_j, e_k) - ||sum P_coex(phi_j e_j)||^2`` on tuples from ``basis``."""
    fib = family.fiber()
    t = family.center
    m = family.m
    Pco = coexact_projection(fib, p, q)
    r = basis.shape[1]
    theta = np.zeros((m, m, r, r), dtype=complex)
    cols = [Pco @ fib.multiplication(p, q, family.weight.base_d(t, j, fib.coords)) @ basis for j in range(m)]
    for j in range(m):
        for k in range(m):
            theta[j, k] = (_sesq(fib, (p, q), basis, basis, family.weight.base_d_dbar(t, j, k, fib.coords))
                           - _sesq(fib, (p, q), cols[j], cols[k]))
    return theta


def kbundle_curvature(family, q, cutoff=12, p=None, tol=None):
    """Nakano verdict for the bundle of dbar-closed (p,q)-forms on a truncated basis."""
    if not family.kahler.is_product:
        raise ValueError("kbundle_curvature needs a product Kaehler form")
    fib = family.fiber()
    p = fib.n if p is None else p
    basis = closed_subspace(fib, p, q, cutoff)
    theta = kbundle_form(family, p, q, basis)
    gram = _sesq(fib, (p, q), basis, basis)
    tol = 1e-6 * family.curvature_scale() if tol is None else tol
    rep = positivity_verdict(CurvatureTensor(theta, gram), gram, "nakano", tol)
    rep.witness["dimension"] = int(basis.shape[1])
    m, r = theta.shape[0], theta.shape[2]
    return KBundleForm(basis, theta.transpose(1, 3, 0, 2).reshape(m * r, m * r), rep)


def kbundle_fd_check(family, p, q, cutoff=12):
    """FD curvature of the Gram of the full discrete ``ker dbar``, restricted to its lowest modes.

    Returns ``(fd, formula)`` on the first ``cutoff`` modes. High modes leak out of
    the discrete span under multiplication, so only the low block is comparable.
    """
    from .family import base_derivatives

    fib = family.fiber()
    full = closed_subspace(fib, p, q)

    def gram_at(o):
        return _sesq(family.fiber_at_offset(o), (p, q), full, full)

    d, dbar, ddbar = base_derivatives(family.base, gram_at)
    G = gram_at(tuple([0.0] * (2 * family.m)))
    Gi = np.linalg.inv(G)
    m = family.m
    k = min(int(cutoff), full.shape[1])
    fd = np.zeros((m, m, k, k), dtype=complex)
    for j in range(m):
        for l in range(m):
            fd[j, l] = (d[j] @ Gi @ dbar[l] - ddbar[j][l])[:k, :k]
    return fd, kbundle_form(family, p, q, full[:, :k])
