"""Per-factor spectral bases for sections of a degree-d line bundle on a flat torus.

A factor is the real torus ``[0,1)^2`` with complex coordinate ``w = x + tau*y``
and flat coordinate ``z = s*w`` where ``s = sqrt(area / Im tau)``. Sections use
the unitary gauge ``f(x+1, y) = exp(2 pi i d y) f(x, y)`` with connection form
``2 pi d x dy``.

For ``d != 0`` the basis consists of Landau levels; for ``d = 0`` of Fourier
modes. The span attached to a form of per-factor bidegree ``(a, b)`` depends
only on ``delta = a - b`` and is chosen so that dbar and the flat (1,0)
derivative map spans onto spans.
"""

import math
from functools import cached_property

import numpy as np

from . import kernels


class FactorBasis:
    def __init__(self, tau, area, degree, resolution, levels, character=(0.0, 0.0)):
        tau = complex(tau)
        self.tau = tau
        self.tau2 = tau.imag
        self.area = float(area)
        self.degree = int(degree)
        self.resolution = int(resolution)
        self.levels = int(levels)
        # flat twist of a degree-0 factor: f(x+1, y) = e^{2 pi i alpha} f, f(x, y+1) = e^{2 pi i beta} f
        self.character = (float(character[0]), float(character[1]))
        if self.degree != 0 and any(self.character):
            raise ValueError("a character twist is only supported on degree-0 factors")
        self.scale = math.sqrt(self.area / self.tau2)
        n = self.resolution
        xs = np.arange(n) / n
        # point index p = ix * n + iy
        self.x = np.repeat(xs, n)
        self.y = np.tile(xs, n)
        self.quad_weight = self.area / (n * n)
        d = self.degree
        if d > 0:
            kappa = 2j * math.pi * d / tau
        elif d < 0:
            kappa = 2j * math.pi * d / tau.conjugate()
        else:
            kappa = 0j
        self.kappa_r = kappa.real
        self.kappa_i = kappa.imag
        self._cache = {}

    @property
    def npoints(self):
        return self.resolution * self.resolution

    def top_level(self, delta):
        d = self.degree
        if d > 0:
            return self.levels + delta
        return self.levels - delta

    @cached_property
    def fourier_modes(self):
        kf = self.levels
        return [(m, k) for m in range(-kf, kf + 1) for k in range(-kf, kf + 1)]

    @cached_property
    def frequencies(self):
        a, b = self.character
        return np.array([(m + a, k + b) for m, k in self.fourier_modes], dtype=float)

    def size(self, delta):
        if self.degree == 0:
            return len(self.fourier_modes)
        return abs(self.degree) * (self.top_level(delta) + 1)

    def values(self, delta):
        """Basis values on the grid, shape ``(npoints, size(delta))``."""
        key = ("values", delta)
        if key not in self._cache:
            self._cache[key] = self.evaluate(delta, self.x, self.y)
        return self._cache[key]

    def evaluate(self, delta, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.degree == 0:
            modes = self.frequencies
            phase = 2j * math.pi * (np.outer(x, modes[:, 0]) + np.outer(y, modes[:, 1]))
            return np.exp(phase) / math.sqrt(self.area)
        nl = self.top_level(delta) + 1
        vals = kernels.landau_values(x, y, self.degree, nl, self.kappa_r, self.kappa_i)
        return vals / math.sqrt(self.area)

    def _ladder(self, delta, lowering, coef):
        # lowering maps level k to k-1 with weight coef*sqrt(2k kappa_r)
        ad = abs(self.degree)
        src = self.top_level(delta) + 1
        tgt_delta = delta - 1 if (lowering == (self.degree > 0)) else delta + 1
        out = np.zeros((self.size(tgt_delta), self.size(delta)), dtype=complex)
        kr = self.kappa_r
        for k in range(src):
            kt = k - 1 if lowering else k + 1
            if kt < 0 or kt > self.top_level(tgt_delta):
                continue
            amp = math.sqrt(2.0 * k * kr) if lowering else math.sqrt(2.0 * (k + 1) * kr)
            for j in range(ad):
                out[kt * ad + j, k * ad + j] = coef * amp
        return out

    def dbar(self, delta):
        """dz-bar coefficient of dbar as a map ``span(delta) -> span(delta - 1)``."""
        key = ("dbar", delta)
        if key in self._cache:
            return self._cache[key]
        d = self.degree
        if d == 0:
            modes = self.frequencies
            diag = math.pi / (self.scale * self.tau2) * (self.tau * modes[:, 0] - modes[:, 1])
            mat = np.diag(diag.astype(complex))
        else:
            cb = self.tau / (2j * self.tau2 * self.scale)
            if d > 0:
                mat = self._ladder(delta, True, cb)
            else:
                mat = self._ladder(delta, False, -cb)
        self._cache[key] = mat
        return mat

    def dflat(self, delta):
        """dz coefficient of the unweighted (1,0) covariant derivative, ``span(delta) -> span(delta + 1)``."""
        key = ("dflat", delta)
        if key in self._cache:
            return self._cache[key]
        d = self.degree
        if d == 0:
            modes = self.frequencies
            diag = math.pi / (self.scale * self.tau2) * (modes[:, 1] - self.tau.conjugate() * modes[:, 0])
            mat = np.diag(diag.astype(complex))
        else:
            ce = self.tau.conjugate() / (2j * self.tau2 * self.scale)
            if d > 0:
                mat = self._ladder(delta, False, ce)
            else:
                mat = self._ladder(delta, True, -ce)
        self._cache[key] = mat
        return mat
