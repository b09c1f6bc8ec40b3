import numpy as np
import pytest

from direct_image import DimensionJump
from direct_image import bundle as bundle_mod
from direct_image.bundle import (CurvatureTensor, DimensionReport, fd_curvature_oracle, harmonic_dims,
                                 holomorphic_frame, holomorphy_residual, metric_compatibility)
from direct_image.scenario import build_family, bundled, load_scenario

from conftest import curve_family, weight


@pytest.fixture(scope="module")
def quad_d0():
    return curve_family(0, weight(0.0, 0.5))


def test_frame_is_holomorphic_and_metric(berndtsson):
    fr = holomorphic_frame(berndtsson, 1, 0)
    assert fr.rank == 3
    assert holomorphy_residual(berndtsson, fr) <= 1e-5
    assert metric_compatibility(berndtsson, fr, 0) <= 1e-5


def test_frame_twisted_metric_compatibility(twisted):
    fr = holomorphic_frame(twisted, 1, 0)
    assert holomorphy_residual(twisted, fr) <= 1e-5
    assert metric_compatibility(twisted, fr, 0) <= 1e-5


def test_orthonormal_mode(berndtsson):
    fr = holomorphic_frame(berndtsson, 1, 0, mode="orthonormal")
    for g in fr.grams.values():
        assert np.allclose(g, np.eye(3), atol=1e-12)


def test_frame_grams_hermitian_positive(berndtsson):
    fr = holomorphic_frame(berndtsson, 1, 0)
    for g in fr.grams.values():
        assert np.allclose(g, g.conj().T)
        assert np.linalg.eigvalsh(g).min() > 0
    assert fr.condition_number() >= 1.0


def test_fd_oracle_on_gaussian_weight(quad_d0):
    # fiber-constant phi = c|t|^2 gives G(t) = e^{-c|t|^2} G(0), so Theta = c G
    fr = holomorphic_frame(quad_d0, 1, 0)
    oracle = fd_curvature_oracle(quad_d0, fr)
    assert np.allclose(oracle.theta[0, 0], 0.5 * fr.gram(), rtol=1e-8)


def test_fd_oracle_flat():
    fam = curve_family(0)
    fr = holomorphic_frame(fam, 1, 0)
    assert np.abs(fd_curvature_oracle(fam, fr).theta).max() <= 1e-8


def test_dimension_jump_detected():
    fam = build_family(load_scenario(bundled("dimension-jump")))
    rep = harmonic_dims(fam, 0, 0)
    assert not rep.constant
    assert rep.dims[(0.0, 0.0)] == 1
    assert rep.offending and all(o["dimension"] == 0 for o in rep.offending)
    with pytest.raises(ValueError):
        holomorphic_frame(fam, 0, 0)


def test_frame_refuses_varying_dimension(monkeypatch, berndtsson):
    fake = DimensionReport(1, 0, {(0.0, 0.0): 3, (1.0, 0.0): 2}, False, [{"base_point": [[0.01, 0.0]]}], 50.0)
    monkeypatch.setattr(bundle_mod, "harmonic_dims", lambda *a, **k: fake)
    with pytest.raises(DimensionJump) as e:
        holomorphic_frame(berndtsson, 1, 0)
    assert e.value.points == fake.offending


def test_curvature_tensor_algebra(rng):
    m, r = 2, 3
    A = rng.normal(size=(m * r, m * r)) + 1j * rng.normal(size=(m * r, m * r))
    Q = A + A.conj().T
    theta = Q.reshape(m, r, m, r).transpose(2, 0, 3, 1)
    T = CurvatureTensor(theta, np.eye(r))
    assert np.allclose(T.nakano_matrix(), Q)
    assert T.hermitian_residual() <= 1e-14
    xi = np.array([1.0, 0.5j])
    x = rng.normal(size=r) + 1j * rng.normal(size=r)
    direct = np.einsum("j,a,k,b,jkab->", xi, x, xi.conj(), x.conj(), theta)
    assert np.vdot(x, T.griffiths_matrix(xi) @ x) == pytest.approx(direct)
    assert T.relative_error(T) == 0.0
    Z = CurvatureTensor(np.zeros_like(theta), np.eye(r))
    assert Z.relative_error(Z, floor=1.0) == 0.0
    assert T.relative_error(Z) == pytest.approx(1.0)
