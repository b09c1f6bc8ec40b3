import math

import numpy as np
import pytest

from direct_image import StencilIncomplete
from direct_image.modular import (ModularFamily, complex_hessian_9pt, cotangent_check, ks_class, ks_holomorphy_check,
                                  psh_check, wp_metric)


@pytest.fixture(scope="module")
def flat_data():
    return wp_metric(ModularFamily(grid=3))


@pytest.fixture(scope="module")
def bent_data():
    return wp_metric(ModularFamily(grid=3, lift_amplitude=0.3))


def test_wp_metric_closed_form(flat_data):
    # hyperbolic metric with g(tau) = 1 / (4 Im(tau)^2) in this normalization
    im = np.array([t.imag for t in flat_data.taus])
    assert np.allclose(flat_data.g_wp * im ** 2, 0.25, rtol=1e-12)


def test_lift_choice_does_not_change_class(flat_data, bent_data):
    assert np.allclose(flat_data.g_wp, bent_data.g_wp, rtol=1e-12)
    # the flat lift is harmonic, the bent one is not and bounds the class norm from above
    assert np.allclose(flat_data.flat_bound, flat_data.g_wp, rtol=1e-12)
    assert np.all(bent_data.flat_bound > bent_data.g_wp)


def test_ks_class_harmonic():
    k = ks_class(ModularFamily(lift_amplitude=0.3), 2j)
    assert k.harmonicity_residual <= 1e-10
    assert k.norm == pytest.approx(1 / (2 * 2.0), rel=1e-12)
    assert k.flat_norm > k.norm


@pytest.mark.parametrize("amp", [0.0, 0.3])
def test_ks_holomorphy(amp):
    assert ks_holomorphy_check(ModularFamily(grid=3, lift_amplitude=amp)) <= 1e-6


def test_psh_on_full_grid():
    data = wp_metric(ModularFamily(lift_amplitude=0.3))
    rep = psh_check(data)
    assert rep.passed and not rep.identically_minus_infinity
    # d dbar log(1 / (2 Im tau)) = 1 / (4 Im(tau)^2), minimum at the top row
    top = 2.0 + 3 * 1e-2
    assert rep.min_hessian == pytest.approx(1 / (4 * top ** 2), rel=1e-3)
    assert rep.cotangent_semipositive


def test_constant_family_is_minus_infinity():
    data = wp_metric(ModularFamily(grid=3, constant=True, lift_amplitude=0.3))
    assert np.all(data.g_wp <= 1e-20)
    rep = psh_check(data)
    assert rep.identically_minus_infinity and rep.passed and rep.min_hessian == -math.inf


def test_partially_vanishing_metric_rejected(flat_data):
    g = flat_data.g_wp.copy()
    g[0] = 0.0
    flat_data_copy = type(flat_data)(flat_data.family, flat_data.taus, g, flat_data.flat_bound,
                                     flat_data.ks_norms, flat_data.pairings)
    with pytest.raises(ValueError):
        psh_check(flat_data_copy)


def test_nine_point_hessian_exact_on_quadratics():
    h = 0.1
    x, y = np.meshgrid(np.arange(5) * h, np.arange(5) * h, indexing="ij")
    f = 1.5 * x ** 2 - 0.5 * y ** 2 + 2.0 * x * y + 3 * x - y + 7
    hess = complex_hessian_9pt(f, h)
    assert hess.shape == (3, 3)
    assert np.allclose(hess, 0.25 * (3.0 - 1.0))


def test_nine_point_needs_a_full_stencil():
    with pytest.raises(StencilIncomplete):
        complex_hessian_9pt(np.zeros((2, 5)), 0.1)


def test_grid_must_stay_in_upper_half_plane():
    with pytest.raises(ValueError):
        ModularFamily(center=0.01j, step=0.01)


def test_cotangent_semipositive():
    assert cotangent_check(ModularFamily(), 2j)
    assert cotangent_check(ModularFamily(constant=True), 2j)
