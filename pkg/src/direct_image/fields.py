"""Closed-form scalar fields on fibers, base charts and total spaces.

Fiber dependence is a real Fourier mode ``cos``/``sin`` of
``2 pi sum_a (m_a x_a + n_a y_a)`` (or a constant); base dependence is a real
polynomial in ``Re t_j, Im t_j`` or a cosine/sine of a real linear form in
them. Products of the two are summed into weight fields whose first and
second complex derivatives are all exact.
"""

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class FourierMode:
    kind: str = "const"
    waves: tuple = ()

    def __post_init__(self):
        if self.kind not in ("const", "cos", "sin"):
            raise ValueError(f"unknown fiber mode kind {self.kind!r}")
        object.__setattr__(self, "waves", tuple(tuple(int(c) for c in w) for w in self.waves))

    def _theta(self, coords):
        theta = 0.0
        for (m, k), (x, y) in zip(self.waves, coords):
            theta = theta + 2 * math.pi * (m * x + k * y)
        return theta

    def _dtheta(self, factors):
        # d theta / d z_a for each factor, in flat coordinates z_a = s_a (x_a + tau_a y_a)
        out = []
        for a, fac in enumerate(factors):
            m, k = self.waves[a] if a < len(self.waves) else (0, 0)
            out.append(2 * math.pi * (k - fac.tau.conjugate() * m) / (2j * fac.tau2 * fac.scale))
        return out

    def value(self, coords):
        if self.kind == "const":
            return np.ones_like(np.asarray(coords[0][0], dtype=float))
        th = self._theta(coords)
        return np.cos(th) if self.kind == "cos" else np.sin(th)

    def _first(self, coords):
        th = self._theta(coords)
        return -np.sin(th) if self.kind == "cos" else np.cos(th)

    def dz(self, coords, factors, a):
        if self.kind == "const":
            return np.zeros_like(np.asarray(coords[0][0], dtype=complex))
        return self._first(coords) * self._dtheta(factors)[a]

    def dzbar(self, coords, factors, a):
        return np.conj(self.dz(coords, factors, a))

    def dz_dzbar(self, coords, factors, a, b):
        if self.kind == "const":
            return np.zeros_like(np.asarray(coords[0][0], dtype=complex))
        k = self._dtheta(factors)
        return -self.value(coords) * k[a] * np.conj(k[b])


@dataclass(frozen=True)
class BaseFunction:
    """Real function of the base coordinates ``(Re t_1, Im t_1, Re t_2, Im t_2, ...)``.

    ``kind='poly'``: ``terms`` maps exponent tuples to real coefficients.
    ``kind='cos'`` / ``'sin'``: of the linear form ``sum linear[i] * r_i``.
    """

    kind: str = "poly"
    terms: tuple = ()
    linear: tuple = ()

    @classmethod
    def constant(cls, c=1.0):
        return cls("poly", (((), float(c)),))

    @classmethod
    def polynomial(cls, terms):
        return cls("poly", tuple((tuple(int(e) for e in exps), float(c)) for exps, c in dict(terms).items()))

    def partial(self, r, order):
        """Real partial derivative ``d^order`` (exponent tuple over real coordinates) at ``r``."""
        r = np.asarray(r, dtype=float)
        dim = len(r)
        order = tuple(order) + (0,) * (dim - len(order))
        if self.kind == "poly":
            total = 0.0
            for exps, c in self.terms:
                exps = tuple(exps) + (0,) * (dim - len(exps))
                val = c
                for e, o, x in zip(exps, order, r):
                    if o > e:
                        val = 0.0
                        break
                    val *= math.factorial(e) / math.factorial(e - o) * x ** (e - o)
                total += val
            return total
        lin = np.zeros(dim)
        lin[: len(self.linear)] = self.linear
        arg = float(lin @ r)
        k = sum(order)
        coef = float(np.prod([lin[i] ** o for i, o in enumerate(order)]))
        seq = [math.cos, lambda v: -math.sin(v), lambda v: -math.cos(v), math.sin]
        shift = 0 if self.kind == "cos" else 3
        return coef * seq[(shift + k) % 4](arg)

    def value(self, t):
        return self.partial(_real(t), ())

    def d(self, t, j):
        """Complex derivative d/dt_j."""
        r = _real(t)
        return 0.5 * (self.partial(r, _unit(len(r), 2 * j)) - 1j * self.partial(r, _unit(len(r), 2 * j + 1)))

    def dbar(self, t, j):
        return np.conj(self.d(t, j))

    def d_dbar(self, t, j, k):
        """Mixed derivative d^2 / dt_j dtbar_k."""
        r = _real(t)
        n = len(r)
        xj, yj, xk, yk = 2 * j, 2 * j + 1, 2 * k, 2 * k + 1

        def p2(a, b):
            return self.partial(r, _unit(n, a, b))

        return 0.25 * (p2(xj, xk) + 1j * p2(xj, yk) - 1j * p2(yj, xk) + p2(yj, yk))


def _real(t):
    t = np.atleast_1d(np.asarray(t, dtype=complex))
    return np.column_stack([t.real, t.imag]).ravel()


def _unit(n, *idx):
    o = [0] * n
    for i in idx:
        o[i] += 1
    return tuple(o)


@dataclass(frozen=True)
class FieldTerm:
    base: BaseFunction
    mode: FourierMode


@dataclass(frozen=True)
class WeightField:
    """``phi(z, t) = sum_i base_i(t) * mode_i(z)``; real by construction."""

    terms: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))

    def fiber_weight(self, t):
        from .torus import FiberWeight

        return FiberWeight(tuple((term.base.value(t), term.mode) for term in self.terms))

    def base_d(self, t, j, coords, factors=None):
        return sum((term.base.d(t, j) * term.mode.value(coords) for term in self.terms),
                   np.zeros_like(np.asarray(coords[0][0], dtype=complex)))

    def base_dbar(self, t, j, coords, factors=None):
        return np.conj(self.base_d(t, j, coords))

    def base_d_dbar(self, t, j, k, coords, factors=None):
        return sum((term.base.d_dbar(t, j, k) * term.mode.value(coords) for term in self.terms),
                   np.zeros_like(np.asarray(coords[0][0], dtype=complex)))

    def mixed(self, t, j, a, coords, factors):
        """d^2 phi / dt_j dzbar_a."""
        return sum((term.base.d(t, j) * term.mode.dzbar(coords, factors, a) for term in self.terms),
                   np.zeros_like(np.asarray(coords[0][0], dtype=complex)))

    def mixed_bar(self, t, a, k, coords, factors):
        """d^2 phi / dz_a dtbar_k."""
        return sum((term.base.dbar(t, k) * term.mode.dz(coords, factors, a) for term in self.terms),
                   np.zeros_like(np.asarray(coords[0][0], dtype=complex)))

    def fiber_dz(self, t, a, coords, factors):
        return sum((term.base.value(t) * term.mode.dz(coords, factors, a) for term in self.terms),
                   np.zeros_like(np.asarray(coords[0][0], dtype=complex)))

    def fiber_dz_dzbar(self, t, a, b, coords, factors):
        return sum((term.base.value(t) * term.mode.dz_dzbar(coords, factors, a, b) for term in self.terms),
                   np.zeros_like(np.asarray(coords[0][0], dtype=complex)))

    def value(self, t, coords):
        return sum((term.base.value(t) * term.mode.value(coords) for term in self.terms),
                   np.zeros_like(np.asarray(coords[0][0], dtype=float)))

    @property
    def is_zero(self):
        return len(self.terms) == 0
