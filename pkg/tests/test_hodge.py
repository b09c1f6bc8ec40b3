import math

import numpy as np
import pytest

from direct_image import (AmbiguousKernel, FormSection, LineBundleData, NotSolvable, SingularCommutator,
                          TorusGeometry, build_fiber, commutator_inverse, dbar_minimal_solve, harmonic_projector,
                          hodge_star, lefschetz_decompose)
from direct_image.hodge import (coexact_projection, default_eps, exact_projection, fiber_curvature,
                                hodge_star_inverse)



def norm(fib, u):
    return math.sqrt(max(fib.inner(u, u).real, 0.0))


# harmonic spaces: Riemann-Roch on a curve with trivial canonical bundle, Kuenneth on surfaces

@pytest.mark.parametrize("d, h10, h11", [(0, 1, 1), (3, 3, 0), (-2, 0, 2), (1, 1, 0), (-1, 0, 1)])
def test_curve_dimensions(d, h10, h11):
    fib = build_fiber(TorusGeometry(((0.4 + 0.9j, 1.3),), 16), LineBundleData((d,)))
    hp10 = harmonic_projector(fib, 1, 0)
    hp11 = harmonic_projector(fib, 1, 1)
    assert (hp10.dimension, hp11.dimension) == (h10, h11)
    assert min(hp10.gap_ratio, hp11.gap_ratio) >= 10


def test_surface_dimensions(fib_n2):
    # h^{0,q}(L_2 x L_-1) = sum_{a+b=q} h^a(L_2) h^b(L_-1), with h^0(L_2)=2, h^1(L_-1)=1
    dims = {q: harmonic_projector(fib_n2, 2, q).dimension for q in range(3)}
    assert dims == {0: 0, 1: 2, 2: 0}


def test_dimension_stable_under_weight(fib_d3):
    assert harmonic_projector(fib_d3, 1, 0).dimension == 3


def test_trivial_bundle_harmonic_one_form_is_dz(fib_d0):
    u = harmonic_projector(fib_d0, 1, 0).basis[0]
    vals = fib_d0.synthesize(u).values[((0,), ())]
    assert np.abs(vals - vals[0]).max() < 1e-10 * abs(vals[0])


def test_ambiguous_kernel_raises(fib_d3):
    hp = harmonic_projector(fib_d3, 1, 0)
    lam = hp.eigenvalues[hp.dimension]
    thr_rel = lam / (3 * float(np.abs(hp.eigenvalues).max()))
    with pytest.raises(AmbiguousKernel):
        harmonic_projector(fib_d3, 1, 0, threshold=thr_rel)


@pytest.mark.parametrize("name", ["fib_d3", "fib_dm2", "fib_n2"])
def test_projector_orthogonal_and_hodge_identity(name, request, rng):
    fib = request.getfixturevalue(name)
    n = fib.n
    for p in range(n + 1):
        for q in range(n + 1):
            hp = harmonic_projector(fib, p, q)
            P = hp.projection
            M = fib.gram(p, q)
            assert np.allclose(P @ P, P, atol=1e-9)
            assert np.allclose(M @ P, (M @ P).conj().T, atol=1e-9 * np.abs(M).max())
            u = fib.random_section(p, q, rng).coefficients
            total = P @ u + exact_projection(fib, p, q) @ u + coexact_projection(fib, p, q) @ u
            assert np.linalg.norm(total - u) <= 1e-8 * np.linalg.norm(u)


# Lefschetz and star --------------------------------------------------------------------

def test_lefschetz_curve_cases(fib_d3, rng):
    f = fib_d3.random_section(1, 0, rng)
    split = lefschetz_decompose(fib_d3, f)
    assert list(split.components) == [0]
    assert np.allclose(split.components[0].coefficients, f.coefficients)
    g = fib_d3.random_section(0, 0, rng)
    w = FormSection((1, 1), fib_d3.lefschetz(0, 0) @ g.coefficients)
    split = lefschetz_decompose(fib_d3, w)
    assert np.allclose(split.components[1].coefficients, g.coefficients)
    assert split.reassemble(fib_d3).bidegree == (1, 1)


def test_lefschetz_surface_reassembly(fib_n2, rng):
    u = fib_n2.random_section(1, 1, rng)
    split = lefschetz_decompose(fib_n2, u)
    back = split.reassemble(fib_n2)
    assert np.linalg.norm(back.coefficients - u.coefficients) <= 1e-10 * np.linalg.norm(u.coefficients)
    assert max(split.primitivity_residuals(fib_n2).values()) <= 1e-10


def test_star_closed_forms_on_curve(fib_d3, rng):
    f = fib_d3.random_section(1, 0, rng)
    assert np.allclose(hodge_star(fib_d3, f).coefficients, -1j * f.coefficients)
    g = fib_d3.random_section(0, 0, rng)
    omega_g = fib_d3.lefschetz(0, 0) @ g.coefficients
    assert np.allclose(hodge_star(fib_d3, g).coefficients, omega_g)
    assert np.allclose(hodge_star(fib_d3, FormSection((1, 1), omega_g)).coefficients, g.coefficients)


def test_star_inverse(fib_n2, rng):
    u = fib_n2.random_section(2, 1, rng)
    s = hodge_star(fib_n2, u)
    back = hodge_star_inverse(fib_n2, s)
    assert np.allclose(back.coefficients, u.coefficients)


def test_harmonicity_transfer(fib_n2):
    # for harmonic (n, q)-forms, del^E of the star vanishes
    fib = fib_n2
    for u in harmonic_projector(fib, 2, 1).basis:
        s = hodge_star(fib, u)
        assert s.bidegree == (1, 0)
        ds = FormSection((2, 0), fib.delE(1, 0) @ s.coefficients)
        assert norm(fib, ds) <= 1e-8 * norm(fib, u)


# minimal solutions ---------------------------------------------------------------------

def test_minimal_solve_zero(fib_d3):
    a = dbar_minimal_solve(fib_d3, fib_d3.zero(1, 1))
    assert a.bidegree == (1, 0) and not np.any(a.coefficients)


def test_minimal_solve_recovers_orthogonal_preimage(fib_d3, rng):
    g = fib_d3.random_section(1, 0, rng)
    g = FormSection((1, 0), g.coefficients - harmonic_projector(fib_d3, 1, 0).projection @ g.coefficients)
    v = FormSection((1, 1), fib_d3.dbar(1, 0) @ g.coefficients)
    a = dbar_minimal_solve(fib_d3, v)
    assert norm(fib_d3, a - g) <= 1e-9 * norm(fib_d3, g)


def test_minimal_solve_matches_pseudoinverse(fib_n2, rng):
    fib = fib_n2
    g = fib.random_section(2, 0, rng)
    v = FormSection((2, 1), fib.dbar(2, 0) @ g.coefficients)
    a = dbar_minimal_solve(fib, v)
    # weighted pseudo-inverse oracle: minimise ||a||_M subject to D a = v
    M = fib.gram(2, 0)
    L = np.linalg.cholesky(M)
    D = fib.dbar(2, 0)
    y = np.linalg.pinv(D @ np.linalg.inv(L.conj().T), rcond=1e-10) @ v.coefficients
    oracle = np.linalg.solve(L.conj().T, y)
    assert norm(fib, a - FormSection((2, 0), oracle)) <= 1e-9 * norm(fib, a)
    assert norm(fib, FormSection((2, 1), D @ a.coefficients) - v) <= 1e-9 * norm(fib, v)


def test_minimal_solve_rejects_non_exact(fib_dm2):
    u = harmonic_projector(fib_dm2, 1, 1).basis[0]
    with pytest.raises(NotSolvable) as e:
        dbar_minimal_solve(fib_dm2, u)
    assert e.value.harmonic_residual > 0.5


# commutator inverse --------------------------------------------------------------------

def test_commutator_scalar_on_curve(rng):
    fib = build_fiber(TorusGeometry(((1j, 1.0),), 16), LineBundleData((2,)))
    lam = 4 * math.pi  # 2 pi d / area
    v = fib.random_section(1, 1, rng)
    out = fib.project(commutator_inverse(fib, None, 0.0, v))
    assert np.allclose(out.coefficients, v.coefficients / lam)


def test_commutator_identity_when_flat(fib_d0, rng):
    v = fib_d0.random_section(1, 1, rng)
    out = fib_d0.project(commutator_inverse(fib_d0, None, 1.0, v))
    assert np.allclose(out.coefficients, v.coefficients)


def test_commutator_singular_reports_points(fib_d0, rng):
    with pytest.raises(SingularCommutator) as e:
        commutator_inverse(fib_d0, None, 0.0, fib_d0.random_section(1, 1, rng))
    assert len(e.value.points) == fib_d0.npoints


def test_commutator_surface_matches_eigen_oracle(fib_n2, rng):
    fib = fib_n2
    curv = fiber_curvature(fib)
    v = fib.synthesize(fib.random_section(2, 1, rng))
    out = commutator_inverse(fib, curv, 0.3, v)
    comps = list(fib.space(2, 1).comps)
    # on (2,1) = dz1 dz2 dzbar_b the commutator with (i/2) sum H dz dzbar is H^T acting on the dzbar slot
    for p in (0, 17, 50):
        H = curv[:, :, p]
        x = np.array([v.values[c][p] for c in comps])
        y = np.array([out.values[c][p] for c in comps])
        Q = H.T + 0.3 * np.eye(2)
        assert np.allclose(Q @ y, x)


def test_default_eps_scales_with_curvature(fib_d0, fib_d3):
    assert default_eps(fib_d0) == pytest.approx(1e-6)
    assert default_eps(fib_d3) > 1e-6
