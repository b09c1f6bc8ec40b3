import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from direct_image import (BaseFunction, BaseGrid, FamilyModel, FieldTerm, FourierMode, LineBundleData,
                          TorusGeometry, TotalKahlerForm, WeightField, build_fiber)
from direct_image.torus import FiberWeight

settings.register_profile("repo", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("repo")


def weight(lin=0.0, quad=0.0, kind="cos", waves=((1, 0),), m=1):
    """``lin * Re t_1 * mode(z) + quad * |t|^2``."""
    terms = []
    if lin:
        terms.append(FieldTerm(BaseFunction.polynomial({(1, 0): lin}), FourierMode(kind, waves)))
    if quad:
        exps = [(2, 0), (0, 2)] if m == 1 else [(2, 0, 0, 0), (0, 2, 0, 0), (0, 0, 2, 0), (0, 0, 0, 2)]
        terms.append(FieldTerm(BaseFunction.polynomial({e: quad for e in exps}), FourierMode()))
    return WeightField(tuple(terms))


def curve_family(d, w=None, res=16, h=1e-2, twist=None, m=1, levels=None, tau=1j):
    kahler = None
    if twist is not None or m > 1:
        kahler = TotalKahlerForm(tuple(tuple(float(i == j) for j in range(m)) for i in range(m)),
                                 twist if twist is not None else WeightField())
    return FamilyModel(TorusGeometry(((tau, 1.0),), res), LineBundleData((d,)), w or WeightField(), kahler,
                       BaseGrid(m, (0j,) * m, h), levels)


@pytest.fixture(scope="session")
def fib_d3():
    return build_fiber(TorusGeometry(((0.3 + 1.1j, 1.0),), 16), LineBundleData((3,)),
                       FiberWeight(((0.4, FourierMode("cos", ((1, 0),))),)))


@pytest.fixture(scope="session")
def fib_d0():
    return build_fiber(TorusGeometry(((1j, 1.0),), 16), LineBundleData((0,)))


@pytest.fixture(scope="session")
def fib_dm2():
    return build_fiber(TorusGeometry(((1j, 2.0),), 16), LineBundleData((-2,)))


@pytest.fixture(scope="session")
def fib_n2():
    return build_fiber(TorusGeometry(((1j, 1.0), (0.2 + 1j, 1.0)), 12), LineBundleData((2, -1)),
                       FiberWeight(((0.3, FourierMode("cos", ((1, 0), (0, 1)))),)), levels=(4, 4))


@pytest.fixture(scope="session")
def berndtsson():
    return curve_family(3, weight(1.0, 2.0))


@pytest.fixture(scope="session")
def twisted():
    rho = WeightField((FieldTerm(BaseFunction.polynomial({(1, 0): 0.05}), FourierMode("cos", ((1, 0),))),))
    return curve_family(3, weight(1.0, 2.0), twist=rho)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = {}


@pytest.fixture
def acceptance():
    """Record one summary line per acceptance criterion; printed at the end of the run."""

    def record(number, title, ok, detail):
        ACCEPTANCE_LINES[number] = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
