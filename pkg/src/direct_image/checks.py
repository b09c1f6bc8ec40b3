"""The checks a scenario can request. Each returns a :class:`CheckResult`."""

import math
from dataclasses import dataclass, field

import numpy as np

from . import pointwise as pw
from .bundle import (fd_curvature_oracle, harmonic_dims, holomorphic_frame, holomorphy_residual,
                     metric_compatibility)
from .curvature import (general_curvature, kbundle_curvature, positivity_verdict, product_curvature,
                        regularized_identity_check)
from .errors import DirectImageError
from .family import check_q_semipositive
from .hodge import default_eps
from .modular import ks_holomorphy_check, psh_check, wp_metric
from .scenario import build_family, center_fiber, refine_ladder
from .torus import FormSection


@dataclass
class CheckResult:
    verdict: str
    scalars: dict = field(default_factory=dict)
    table: list = field(default_factory=list)  # rows for <check>.csv
    witness: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def as_dict(self):
        d = {"verdict": self.verdict, "scalars": self.scalars}
        if self.witness:
            d["witness"] = self.witness
        d.update(self.extra)
        return d


def _verdict(ok):
    return "pass" if ok else "fail"


def _norm(fib, u):
    return math.sqrt(max(fib.inner(u, u).real, 0.0))


def _bidegrees(n):
    return [(p, q) for p in range(n + 1) for q in range(n + 1)]


# fiber calculus --------------------------------------------------------------------

def check_complex(sc, fam, ctx):
    """``dbar^2 = 0``, ``(del^E)^2 = 0`` and adjointness on random sections of every bidegree."""
    fib = center_fiber(sc, fam)
    n = fib.n
    rng = np.random.default_rng(sc.seed)
    samples = 100
    rows = []
    worst_sq = worst_adj = 0.0
    for p, q in _bidegrees(n):
        sq = adj = 0.0
        for _ in range(samples):
            u = fib.random_section(p, q, rng)
            nu = _norm(fib, u)
            for op, adj_op, dp, dq in (("dbar", "dbar_adj", 0, 1), ("delE", "delE_adj", 1, 0)):
                if not pw.in_range(n, p + dp, q + dq):
                    continue
                D = getattr(fib, op)(p, q)
                du = FormSection((p + dp, q + dq), D @ u.coefficients)
                if pw.in_range(n, p + 2 * dp, q + 2 * dq):
                    ddu = FormSection((p + 2 * dp, q + 2 * dq), getattr(fib, op)(p + dp, q + dq) @ du.coefficients)
                    sq = max(sq, _norm(fib, ddu) / nu)
                v = fib.random_section(p + dp, q + dq, rng)
                av = FormSection((p, q), getattr(fib, adj_op)(p + dp, q + dq) @ v.coefficients)
                lhs = fib.inner(du, v)
                rhs = fib.inner(u, av)
                scale = max(_norm(fib, du) * _norm(fib, v), nu * _norm(fib, av), 1e-300)
                adj = max(adj, abs(lhs - rhs) / scale)
        rows.append({"p": p, "q": q, "samples": samples, "square_residual": sq, "adjoint_residual": adj})
        worst_sq = max(worst_sq, sq)
        worst_adj = max(worst_adj, adj)
    ok = worst_sq <= sc.tol("complex") and worst_adj <= sc.tol("adjoint")
    return CheckResult(_verdict(ok), {"square_residual": worst_sq, "adjoint_residual": worst_adj,
                                      "tolerance_square": sc.tol("complex"), "tolerance_adjoint": sc.tol("adjoint")},
                       rows)


def check_hodge_star(sc, fam, ctx):
    """Star isometry on random forms; on curves also the three closed-form values."""
    fib = center_fiber(sc, fam)
    n = fib.n
    rng = np.random.default_rng(sc.seed + 1)
    rows = []
    iso = 0.0
    for p, q in _bidegrees(n):
        S = fib.star(p, q)
        r = 0.0
        for _ in range(20):
            u = fib.random_section(p, q, rng)
            su = FormSection((n - q, n - p), S @ u.coefficients)
            r = max(r, abs(_norm(fib, su) - _norm(fib, u)) / _norm(fib, u))
        rows.append({"case": f"isometry ({p},{q})", "residual": r})
        iso = max(iso, r)
    closed = 0.0
    if n == 1:
        L = fib.lefschetz(0, 0)
        f = fib.random_section(0, 0, rng)
        g = fib.random_section(1, 0, rng)
        w = FormSection((1, 1), L @ f.coefficients)  # f * omega
        cases = [("star(f dz) = -i f dz", fib.star(1, 0) @ g.coefficients, -1j * g.coefficients),
                 ("star(f) = f omega", fib.star(0, 0) @ f.coefficients, w.coefficients),
                 ("star(f omega) = f", fib.star(1, 1) @ w.coefficients, f.coefficients)]
        for name, got, want in cases:
            r = float(np.abs(got - want).max() / np.abs(want).max())
            rows.append({"case": name, "residual": r})
            closed = max(closed, r)
    ok = iso <= sc.tol("star") and closed <= sc.tol("star")
    return CheckResult(_verdict(ok), {"isometry_residual": iso, "closed_form_residual": closed,
                                      "tolerance": sc.tol("star")}, rows)


def check_dimensions(sc, fam, ctx):
    """Harmonic dimensions at the center against the expected table, spectral gap, constancy over the base."""
    expected = sc.expect.get("dimensions") or {(sc.p, sc.q): None}
    want_const = sc.expect.get("constant_dimension", True)
    rows = []
    ok = True
    min_gap = math.inf
    constant = True
    offending = []
    for (p, q), want in sorted(expected.items()):
        rep = harmonic_dims(fam, p, q)
        got = rep.as_dict()["dimension"]
        match = want is None or got == want
        gap_ok = rep.min_gap_ratio >= sc.tol("gap")
        ok = ok and match and gap_ok
        min_gap = min(min_gap, rep.min_gap_ratio)
        constant = constant and rep.constant
        offending.extend(rep.offending)
        rows.append({"p": p, "q": q, "expected": "" if want is None else want, "dimension": got,
                     "min_gap_ratio": rep.min_gap_ratio, "constant": rep.constant})
    ok = ok and (constant == want_const)
    wit = {"offending": offending} if offending else {}
    return CheckResult(_verdict(ok), {"min_gap_ratio": min_gap, "constant_over_base": constant,
                                      "expected_constant": want_const, "gap_threshold": sc.tol("gap")},
                       rows, wit)


def check_q_semipositive_(sc, fam, ctx):
    rep = ctx.gate(fam)
    return CheckResult(rep.verdict, {"q": sc.q, "min_eigenvalue": rep.min_eigenvalue, "tolerance": rep.tolerance},
                       [{"q": sc.q, "min_eigenvalue": rep.min_eigenvalue}], rep.witness)


# curvature ---------------------------------------------------------------------------

def _curvature(sc, fam, eps):
    frame = holomorphic_frame(fam, sc.p, sc.q)
    if fam.kahler.is_product:
        theta, bd = product_curvature(fam, frame, eps=eps)
    else:
        theta, bd = general_curvature(fam, frame, eps=eps)
    return frame, theta, bd


def _tensor_rows(name, T):
    rows = []
    m, r = T.shape[0], T.shape[2]
    for j in range(m):
        for k in range(m):
            for a in range(r):
                for b in range(r):
                    z = complex(T[j, k, a, b])
                    rows.append({"tensor": name, "j": j, "k": k, "a": a, "b": b, "re": z.real, "im": z.imag})
    return rows


def check_curvature(sc, fam, ctx):
    """Term formula against the finite-difference oracle; Griffiths/Nakano verdicts gated by q-semipositivity."""
    eps = ctx.eps(fam)
    frame, theta, bd = _curvature(sc, fam, eps)
    fd = fd_curvature_oracle(fam, frame)
    # flat data: compare against the size of the Gram instead of two roundoff-level tensors
    floor = sc.tol("closed_form_abs") * float(np.linalg.norm(frame.gram()))
    err = theta.relative_error(fd, floor)
    scalars = {"oracle_error": err, "oracle_tolerance": sc.tol("oracle"), "rank": frame.rank,
               "frame_condition": frame.condition_number(),
               "holomorphy_residual": holomorphy_residual(fam, frame),
               "metric_compatibility": max(metric_compatibility(fam, frame, j) for j in range(fam.m)),
               "hermitian_residual": theta.hermitian_residual(), "curvature_frobenius": theta.frobenius(),
               "eps": bd.eps, "formula": theta.source}
    scalars.update({f"check_{k}": v for k, v in bd.checks.items()})
    gate = ctx.gate(fam)
    scale = fam.curvature_scale()
    tol = sc.tol("positivity") * scale
    gri = positivity_verdict(theta, frame.gram(), "griffiths", tol)
    nak = positivity_verdict(theta, frame.gram(), "nakano", tol)
    scalars.update({"gate_q_semipositive": gate.passed, "gate_min_eigenvalue": gate.min_eigenvalue,
                    "griffiths_min": gri.min_eigenvalue, "griffiths": gri.verdict,
                    "nakano_min": nak.min_eigenvalue, "nakano": nak.verdict, "positivity_tolerance": tol})
    # the sign claims are only asserted when the gate passes; Nakano for q = 0
    asserted = []
    if gate.passed:
        asserted.append(("griffiths", gri.passed))
        if sc.q == 0:
            asserted.append(("nakano", nak.passed))
    scalars["asserted"] = [a for a, _ in asserted]
    inv = bd.invariants(frame.gram(), tol)
    for k, v in inv.items():
        scalars[f"term_min_{k}"] = v["min"]
    ok = err <= sc.tol("oracle") and all(p for _, p in asserted)
    rows = _tensor_rows("formula", theta.theta) + _tensor_rows("fd_oracle", fd.theta)
    breakdown = bd.as_dict(frame.gram())
    witness = {}
    if not ok:
        witness = {"griffiths": gri.witness, "gate": gate.witness}
    extra = {"term_breakdown": breakdown}
    if ctx.refine:
        ladder = []
        for res, h, lev in refine_ladder(sc):
            f2 = build_family(sc, res, h, lev)
            fr2, th2, _ = _curvature(sc, f2, eps)
            fl2 = sc.tol("closed_form_abs") * float(np.linalg.norm(fr2.gram()))
            e2 = th2.relative_error(fd_curvature_oracle(f2, fr2), fl2)
            ladder.append({"resolution": res, "h_fd": h, "levels": None if lev is None else list(lev),
                           "oracle_error": e2})
        rf = sc.tol("refine_floor")
        dec = all(b["oracle_error"] < a["oracle_error"] or b["oracle_error"] <= rf
                  for a, b in zip(ladder, ladder[1:]))
        extra["refine"] = {"ladder": ladder, "decreasing": dec, "floor": rf}
        ok = ok and dec
    return CheckResult(_verdict(ok), scalars, rows, witness, extra)


def check_closed_form(sc, fam, ctx):
    """Curvature equal to a constant multiple of the frame Gram (``phi = c |t|^2`` families)."""
    c = sc.expect.get("curvature_constant")
    if c is None:
        raise DirectImageError("closed_form needs expect.curvature_constant")
    frame, theta, _ = _curvature(sc, fam, ctx.eps(fam))
    m, r = theta.m, theta.rank
    want = np.zeros_like(theta.theta)
    for j in range(m):
        want[j, j] = c * frame.gram()
    diff = float(np.linalg.norm(theta.theta - want))
    if c == 0:
        err, tol, mode = diff, sc.tol("closed_form_abs"), "absolute"
    else:
        err, tol, mode = diff / float(np.linalg.norm(want)), sc.tol("closed_form_rel"), "relative"
    rows = _tensor_rows("formula", theta.theta) + _tensor_rows("expected", want)
    return CheckResult(_verdict(err <= tol), {"constant": c, "error": err, "mode": mode, "tolerance": tol}, rows)


def check_regularized_identity(sc, fam, ctx):
    """Two-route evaluation of ``I_eps`` and the L^2 bound ``||a||^2 <= I(v)``."""
    frame = holomorphic_frame(fam, sc.p, sc.q)
    gate = ctx.gate(fam)
    scale = fam.curvature_scale()
    rep = regularized_identity_check(fam, frame, eps=ctx.eps(fam), tol=sc.tol("identity_lower") * scale,
                                     precondition=gate.passed)
    d = rep.as_dict()
    h = d.pop("hormander")
    agree_ok = rep.agreement <= sc.tol("identity_agreement")
    scalars = {"eps": rep.eps, "agreement": rep.agreement, "agreement_tolerance": sc.tol("identity_agreement"),
               "I_eps_min": rep.min_value, "lower_tolerance": rep.tolerance, "precondition": rep.precondition,
               "bound_eps": h["eps"], "bound_min_gap": h["min_gap"], "I_v_min": h["I_min"],
               "a_norm_max": h["a_norm_max"], "bound_ok": h["ok"]}
    rows = _tensor_rows("formula_route", rep.route_formula) + _tensor_rows("integral_route", rep.route_integral)
    ok = rep.passed and agree_ok
    wit = {} if ok else {"precondition": rep.precondition, "gate": gate.witness}
    return CheckResult(_verdict(ok), scalars, rows, wit)


def check_kbundle(sc, fam, ctx):
    cutoff = int(sc.refine.get("kbundle_cutoff", 12))
    gate = ctx.gate(fam)
    tol = sc.tol("positivity") * fam.curvature_scale()
    kb = kbundle_curvature(fam, sc.q, cutoff, sc.p, tol)
    ev = np.linalg.eigvalsh(0.5 * (kb.nakano + kb.nakano.conj().T))
    rows = [{"index": i, "eigenvalue": float(v)} for i, v in enumerate(ev)]
    rep = kb.report
    scalars = {"nakano_min": rep.min_eigenvalue, "tolerance": rep.tolerance, "dimension": rep.witness["dimension"],
               "gate_q_semipositive": gate.passed}
    ok = rep.passed if gate.passed else True
    scalars["asserted"] = bool(gate.passed)
    return CheckResult(_verdict(ok), scalars, rows, {} if ok else rep.witness)


# modular family ---------------------------------------------------------------------

def check_wp(sc, fam, ctx):
    """Weil-Petersson ratio constancy, plurisubharmonicity of log ||.||_WP and holomorphy of the pairing."""
    data = wp_metric(fam)
    psh = psh_check(data, sc.tol("psh"))
    holo = ks_holomorphy_check(fam)
    k = fam.grid
    hess = np.full((k, k), np.nan)
    hess[1:-1, 1:-1] = psh.hessian
    rows = []
    for idx, row in enumerate(data.table()):
        h = hess.reshape(-1)[idx]
        row["log_norm_hessian"] = "" if not np.isfinite(h) else float(h)
        rows.append(row)
    scalars = {"holomorphy_residual": holo, "holomorphy_tolerance": sc.tol("holomorphy"),
               "psh": psh.verdict, "psh_min_hessian": psh.min_hessian, "psh_tolerance": psh.tolerance,
               "identically_minus_infinity": psh.identically_minus_infinity,
               "cotangent_semipositive": psh.cotangent_semipositive,
               "harmonicity_residual": float(np.max(data.residuals)),
               "bound_holds": bool(np.all(data.g_wp <= data.flat_bound * (1 + 1e-12) + 1e-300))}
    ok = psh.passed and holo <= sc.tol("holomorphy")
    if psh.identically_minus_infinity:
        scalars["ratio_spread"] = None
    else:
        ratio = data.g_wp * np.array([t.imag for t in data.taus]) ** 2
        spread = float(ratio.max() / ratio.min() - 1.0)
        scalars.update({"ratio_min": float(ratio.min()), "ratio_max": float(ratio.max()), "ratio_spread": spread,
                        "ratio_tolerance": sc.tol("wp_ratio")})
        ok = ok and spread <= sc.tol("wp_ratio")
    return CheckResult(_verdict(ok), scalars, rows)


CHECK_FUNCS = {
    "complex": check_complex,
    "dimensions": check_dimensions,
    "hodge_star": check_hodge_star,
    "q_semipositive": check_q_semipositive_,
    "curvature": check_curvature,
    "closed_form": check_closed_form,
    "regularized_identity": check_regularized_identity,
    "kbundle": check_kbundle,
    "wp": check_wp,
}


class Context:
    """Per-scenario cache of shared results (gate report, eps)."""

    def __init__(self, sc, refine=False):
        self.sc = sc
        self.refine = refine
        self._gate = None
        self._eps = None

    def gate(self, fam):
        if self._gate is None:
            self._gate = check_q_semipositive(fam, self.sc.q)
        return self._gate

    def eps(self, fam):
        if self._eps is None:
            self._eps = self.sc.eps if self.sc.eps is not None else default_eps(fam.fiber(), q=self.sc.q)
        return self._eps
