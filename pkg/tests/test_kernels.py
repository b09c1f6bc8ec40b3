import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from direct_image import kernels
from direct_image._accel import NUMBA_AVAILABLE


def _grid(n):
    g = (np.arange(n) + 0.5) / n
    return tuple(a.ravel() for a in np.meshgrid(g, g, indexing="ij"))


@pytest.mark.parametrize("d, im_tau", [(3, 1.0), (2, 1.3), (-2, 0.8), (1, 2.0)])
def test_landau_basis_orthonormal(d, im_tau):
    x, y = _grid(64)
    b = kernels.landau_values_numpy(x, y, d, 4, 2 * math.pi * abs(d) * im_tau, 0.3)
    G = b.conj().T @ b / x.size
    assert np.abs(G - np.eye(G.shape[1])).max() <= 1e-12


@pytest.mark.skipif(not NUMBA_AVAILABLE, reason="numba not installed")
@given(d=st.sampled_from([-3, -1, 1, 2, 4]), levels=st.integers(1, 5), im_tau=st.floats(0.6, 2.0),
       re_tau=st.floats(-0.5, 0.5), n=st.sampled_from([8, 12]))
def test_landau_numba_matches_numpy(d, levels, im_tau, re_tau, n):
    x, y = _grid(n)
    args = (x, y, d, levels, 2 * math.pi * abs(d) * im_tau, 2 * math.pi * d * re_tau)
    a = kernels.landau_values_numpy(*args)
    b = kernels.landau_values_numba(*args)
    assert np.abs(a - b).max() <= 1e-12 * max(np.abs(a).max(), 1.0)


@pytest.mark.skipif(not NUMBA_AVAILABLE, reason="numba not installed")
@given(n1=st.integers(1, 4), n2=st.integers(1, 4), npts=st.integers(1, 20), seed=st.integers(0, 2 ** 16),
       real=st.booleans())
def test_tensor_gram_numba_matches_numpy(n1, n2, npts, seed, real):
    rng = np.random.default_rng(seed)
    b1 = rng.normal(size=(npts, n1)) + 1j * rng.normal(size=(npts, n1))
    b2 = rng.normal(size=(npts, n2)) + 1j * rng.normal(size=(npts, n2))
    w = rng.random((npts, npts)) if real else rng.normal(size=(npts, npts)) + 1j * rng.normal(size=(npts, npts))
    a = kernels.tensor_gram_numpy(b1, b2, w)
    b = kernels.tensor_gram_numba(b1, b2, w)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12 * np.abs(a).max())


def test_tensor_gram_definition(rng):
    b1 = rng.normal(size=(5, 2)) + 1j * rng.normal(size=(5, 2))
    b2 = rng.normal(size=(6, 3)) + 1j * rng.normal(size=(6, 3))
    w = rng.random((5, 6))
    M = kernels.tensor_gram_numpy(b1, b2, w)
    # product basis on a product grid: e_{ab}(p, q) = b1[p, a] b2[q, b]
    E = np.einsum("pa,qb->pqab", b1, b2).reshape(30, 6)
    direct = E.conj().T @ (w.reshape(30, 1) * E)
    assert np.allclose(M, direct)


def test_weighted_gram(rng):
    b = rng.normal(size=(7, 3)) + 1j * rng.normal(size=(7, 3))
    w = rng.random(7)
    assert np.allclose(kernels.weighted_gram(b, w), b.conj().T @ np.diag(w) @ b)


@pytest.mark.parametrize("flag, expect", [("1", "False"), ("0", str(NUMBA_AVAILABLE))])
def test_environment_switch(flag, expect):
    env = dict(os.environ, DIRECT_IMAGE_DISABLE_NUMBA=flag)
    code = ("from direct_image import kernels, _accel; "
            "print(_accel.USE_NUMBA, kernels.tensor_gram.__name__)")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True).stdout
    use, name = out.split()
    assert use == expect
    assert name == ("tensor_gram_numba" if expect == "True" else "tensor_gram_numpy")


def _floats(x, path=""):
    if isinstance(x, dict):
        for k, v in x.items():
            yield from _floats(v, f"{path}.{k}")
    elif isinstance(x, list):
        for i, v in enumerate(x):
            yield from _floats(v, f"{path}[{i}]")
    elif isinstance(x, float):
        yield path, x


def test_both_paths_give_the_same_report(tmp_path):
    reports = {}
    for flag in ("0", "1"):
        env = dict(os.environ, DIRECT_IMAGE_DISABLE_NUMBA=flag)
        out = tmp_path / flag
        subprocess.run([sys.executable, "-m", "direct_image.cli", "--scenario", "quadratic-d-2", "--out", str(out)],
                       env=env, capture_output=True, check=True)
        reports[flag] = json.loads((out / "quadratic-d-2" / "report.json").read_text())
    a, b = reports["0"], reports["1"]
    assert {k: v["verdict"] for k, v in a["checks"].items()} == {k: v["verdict"] for k, v in b["checks"].items()}
    fa, fb = dict(_floats(a["checks"])), dict(_floats(b["checks"]))
    assert fa.keys() == fb.keys()
    for k in fa:
        assert fa[k] == pytest.approx(fb[k], rel=1e-6, abs=1e-10), k
