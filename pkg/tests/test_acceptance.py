"""The ten acceptance criteria, each at its stated tolerance, one summary line per criterion."""

import math

import numpy as np
import pytest

from direct_image import LineBundleData, TorusGeometry, build_fiber, harmonic_projector
from direct_image.bundle import fd_curvature_oracle, holomorphic_frame
from direct_image.checks import CHECK_FUNCS, Context
from direct_image.cli import main
from direct_image.curvature import (general_curvature, kbundle_curvature, positivity_verdict, product_curvature,
                                    regularized_identity_check)
from direct_image.family import check_q_semipositive
from direct_image.scenario import build_family, bundled, bundled_scenarios, load_scenario, refine_ladder

from conftest import curve_family, weight

FAMILY = ["trivial-flat", "berndtsson-q0", "twisted-q0", "quadratic-d-2", "negative-q1"]


def _load(name):
    sc = load_scenario(bundled(name))
    return sc, build_family(sc)


@pytest.fixture(scope="module")
def gated():
    """Family scenarios with a constant-rank frame, with their q-semipositivity reports."""
    out = {}
    for name in FAMILY:
        sc, fam = _load(name)
        out[name] = (sc, fam, check_q_semipositive(fam, sc.q))
    return out


def test_c01_complex_and_adjoint(acceptance):
    worst_sq = worst_adj = 0.0
    for path in bundled_scenarios():
        sc = load_scenario(path)
        fam = build_family(sc)
        res = CHECK_FUNCS["complex"](sc, fam, Context(sc))
        worst_sq = max(worst_sq, res.scalars["square_residual"])
        worst_adj = max(worst_adj, res.scalars["adjoint_residual"])
    ok = worst_sq <= 1e-12 and worst_adj <= 1e-12
    assert acceptance(1, "complex/adjoint exactness", ok,
                      f"max square {worst_sq:.2e}, max adjoint {worst_adj:.2e} (tol 1e-12, 100 sections per bidegree)")


def test_c02_dimensions(acceptance):
    cases = [((0,), [(1, 0, 1), (1, 1, 1)]), ((3,), [(1, 0, 3), (1, 1, 0)]), ((-2,), [(1, 0, 0), (1, 1, 2)]),
             ((2, -1), [(2, 1, 2)])]
    ok = True
    gaps = []
    got = []
    for degs, wants in cases:
        factors = ((1j, 1.0),) * len(degs)
        fib = build_fiber(TorusGeometry(factors, 16), LineBundleData(degs), levels=(6, 6) if len(degs) == 2 else None)
        for p, q, want in wants:
            hp = harmonic_projector(fib, p, q)
            got.append(hp.dimension)
            gaps.append(hp.gap_ratio)
            ok = ok and hp.dimension == want and hp.gap_ratio >= 10
    assert acceptance(2, "cohomology dimensions", ok,
                      f"dims {got} at resolution 16, min gap ratio {min(gaps):.1e} (need >= 10)")


def test_c03_hodge_star(acceptance):
    iso = closed = 0.0
    for name in ["trivial-flat", "berndtsson-q0", "quadratic-d-2", "negative-q1", "modular-wp"]:
        sc, fam = _load(name)
        res = CHECK_FUNCS["hodge_star"](sc, fam, Context(sc))
        iso = max(iso, res.scalars["isometry_residual"])
        closed = max(closed, res.scalars["closed_form_residual"])
    ok = iso <= 1e-10 and closed <= 1e-10
    assert acceptance(3, "Hodge star", ok, f"closed-form cases {closed:.2e}, isometry {iso:.2e} (tol 1e-10)")


def _oracle_error(fam, theta, frame):
    floor = 1e-8 * float(np.linalg.norm(frame.gram()))
    return theta.relative_error(fd_curvature_oracle(fam, frame), floor)


def test_c04_curvature_oracle(acceptance):
    errs = {}
    ladders = {}
    for name in ["berndtsson-q0", "twisted-q0"]:
        sc, fam = _load(name)
        frame = holomorphic_frame(fam, sc.p, sc.q)
        if fam.kahler.is_product:
            errs[f"{name}/product"] = _oracle_error(fam, product_curvature(fam, frame)[0], frame)
        errs[f"{name}/general"] = _oracle_error(fam, general_curvature(fam, frame)[0], frame)
        ladder = []
        for res, h, lev in refine_ladder(sc):
            f2 = build_family(sc, res, h, lev)
            fr2 = holomorphic_frame(f2, sc.p, sc.q)
            th2 = product_curvature(f2, fr2)[0] if f2.kahler.is_product else general_curvature(f2, fr2)[0]
            ladder.append(_oracle_error(f2, th2, fr2))
        ladders[name] = ladder
    within = max(errs.values()) <= 1e-3
    decreasing = all(b < a for lad in ladders.values() for a, b in zip(lad, lad[1:]))
    detail = ", ".join(f"{k} {v:.1e}" for k, v in errs.items())
    detail += "; refine " + "; ".join(f"{k} " + " > ".join(f"{e:.1e}" for e in v) for k, v in ladders.items())
    assert acceptance(4, "curvature oracle equivalence", within and decreasing, detail)


def test_c05_closed_form(acceptance):
    rel = []
    for d, c in [(3, 2.0), (-2, 0.5), (0, 1.0)]:
        fam = curve_family(d, weight(0.0, c))
        frame = holomorphic_frame(fam, 1, 0 if d >= 0 else 1)
        theta = product_curvature(fam, frame)[0].theta[0, 0]
        rel.append(float(np.linalg.norm(theta - c * frame.gram()) / np.linalg.norm(c * frame.gram())))
    sc, fam = _load("quadratic-d-2")
    rel.append(CHECK_FUNCS["closed_form"](sc, fam, Context(sc)).scalars["error"])
    flat = curve_family(0)
    frame = holomorphic_frame(flat, 1, 0)
    absolute = float(np.abs(product_curvature(flat, frame)[0].theta).max())
    ok = max(rel) <= 1e-6 and absolute <= 1e-8
    assert acceptance(5, "closed-form curvature", ok,
                      f"c|t|^2 max rel error {max(rel):.1e} (tol 1e-6); phi = 0 abs {absolute:.1e} (tol 1e-8)")


def test_c06_gated_positivity(acceptance, gated):
    lines = []
    ok = True
    nakano_case = None
    for name, (sc, fam, gate) in gated.items():
        if not gate.passed:
            lines.append(f"{name} not gated")
            continue
        frame = holomorphic_frame(fam, sc.p, sc.q)
        theta = (product_curvature if fam.kahler.is_product else general_curvature)(fam, frame)[0]
        tol = 1e-6 * fam.curvature_scale()
        gri = positivity_verdict(theta, frame.gram(), "griffiths", tol)
        ok = ok and gri.passed
        lines.append(f"{name} Griffiths {gri.min_eigenvalue:.3g}")
        if name == "berndtsson-q0":
            nak = positivity_verdict(theta, frame.gram(), "nakano", tol)
            nakano_case = nak
            lines.append(f"Nakano {nak.min_eigenvalue:.3g}")
    ok = ok and nakano_case is not None and nakano_case.passed
    assert acceptance(6, "gated Griffiths / Nakano", ok, ", ".join(lines))


def test_c07_regularized_identity(acceptance, gated):
    agree = []
    lows = []
    gaps = []
    ok = True
    for name, (sc, fam, gate) in gated.items():
        if "regularized_identity" not in sc.checks:
            continue
        frame = holomorphic_frame(fam, sc.p, sc.q)
        tol = 1e-8 * fam.curvature_scale()
        rep = regularized_identity_check(fam, frame, tol=tol, precondition=gate.passed)
        # the L^2 bound is checked on every computed minimal solution, gated or not
        gaps.append(rep.hormander["min_gap"])
        ok = ok and rep.hormander["min_gap"] >= -tol
        if gate.passed:
            agree.append(rep.agreement)
            lows.append(rep.min_value / fam.curvature_scale())
            ok = ok and rep.agreement <= 1e-6 and rep.min_value >= -tol
    assert acceptance(7, "regularized identity", ok,
                      f"route agreement max {max(agree):.1e} (tol 1e-6), min I_eps/scale {min(lows):.3g}, "
                      f"min (I(v) - |a|^2) {min(gaps):.1e} over {len(gaps)} scenarios")


def test_c08_kbundle_nakano(acceptance, gated):
    mins = {}
    ok = True
    for name, (sc, fam, gate) in gated.items():
        if not gate.passed or not fam.kahler.is_product:
            continue
        tol = 1e-6 * fam.curvature_scale()
        rep = kbundle_curvature(fam, sc.q, int(sc.refine.get("kbundle_cutoff", 12)), sc.p, tol).report
        mins[name] = rep.min_eigenvalue / fam.curvature_scale()
        ok = ok and rep.passed
    ok = ok and bool(mins)
    assert acceptance(8, "K-bundle Nakano", ok,
                      ", ".join(f"{k} min/scale {v:.3g}" for k, v in mins.items()) + " (tol -1e-6)")


def test_c09_weil_petersson(acceptance):
    sc, fam = _load("modular-wp")
    assert fam.grid == 9 and fam.center == 2j
    s = CHECK_FUNCS["wp"](sc, fam, Context(sc)).scalars
    ok = s["ratio_spread"] <= 1e-2 and s["psh_min_hessian"] >= -1e-8 and s["holomorphy_residual"] <= 1e-6
    assert acceptance(9, "Weil-Petersson", ok,
                      f"g*Im(tau)^2 spread {s['ratio_spread']:.1e} (tol 1e-2), min Hessian {s['psh_min_hessian']:.3g}, "
                      f"holomorphy {s['holomorphy_residual']:.1e} (tol 1e-6)")


def test_c10_determinism(acceptance, tmp_path):
    snaps = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert main(["--out", str(out)]) == 0
        snaps.append({p.relative_to(out).as_posix(): p.read_bytes() for p in sorted(out.rglob("*"))
                      if p.is_file() and p.name != "timing.json"})
    same = snaps[0] == snaps[1]
    n = sum(1 for k in snaps[0] if k.endswith("report.json"))
    assert acceptance(10, "byte-identical reports", same and n == len(bundled_scenarios()),
                      f"{len(snaps[0])} files over {n} scenarios compared across two runs")
