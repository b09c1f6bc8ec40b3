"""Scenario files: parsing, validation and model construction.

A scenario is a TOML document. Grammar (every key optional unless marked):

    name = "berndtsson-q0"                 # required; also the output directory name
    kind = "family"                        # "family" (default) or "modular"
    checks = ["complex", "curvature"]      # required, non-empty, see CHECKS
    seed = 0
    eps = 1e-4                             # regularization; default from the fiber commutator

    [fiber]                                # kind = "family" only
    factors = [{tau = [0.0, 1.0], area = 1.0}]   # tau as [Re, Im]; one or two factors
    degrees = [3]                          # required, one per factor
    resolution = 16
    levels = [8]                           # basis truncation per factor
    holonomy = [[1.0, 0.0]]                # flat twist: character (Re, Im) of holonomy * t_1 per factor

    [base]
    m = 1
    center = [[0.0, 0.0]]                  # one [Re, Im] per base coordinate
    h_fd = 1e-2
    form = [[1.0]]                         # constant Hermitian matrix of omega_B (real entries)

    [target]
    p = 1
    q = 0

    [[weight]]                             # phi = sum over terms of base(t) * mode(z)
    base = {kind = "poly", terms = [[[1, 0], 1.0]]}   # [exponents over (Re t1, Im t1, ...), coefficient]
    mode = {kind = "cos", waves = [[1, 0]]}           # per factor (m, k): cos 2 pi (m x + k y)

    [[twist]]                              # rho in omega = omega_X + omega_B + i ddbar rho; same grammar

    [modular]                              # kind = "modular" only
    center = [0.0, 2.0]
    step = 1e-2
    grid = 9
    resolution = 16
    lift_amplitude = 0.0
    constant = false

    [tolerances]                           # overrides of the defaults in TOLERANCES
    oracle = 1e-3

    [expect]
    dimensions = {"1,0" = 3, "1,1" = 0}    # harmonic dimensions checked by "dimensions"
    constant_dimension = true
    curvature_constant = 2.0               # curvature equals this multiple of the Gram ("closed_form")
    verdicts = {regularized_identity = "fail"}   # checks expected to fail

    [refine]
    resolutions = [16, 24]                 # ladder for --refine, zipped with fd_steps and levels
    fd_steps = [4e-2, 2e-2]
    levels = [[6], [8]]
    kbundle_cutoff = 12
"""

import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigurationError, DegenerateKahlerForm
from .family import BaseGrid, FamilyModel, TotalKahlerForm
from .fields import BaseFunction, FieldTerm, FourierMode, WeightField
from .modular import ModularFamily
from .torus import LineBundleData, TorusGeometry

CHECKS = ("complex", "dimensions", "hodge_star", "q_semipositive", "curvature", "closed_form",
          "regularized_identity", "kbundle", "wp")
MODULAR_CHECKS = ("complex", "hodge_star", "wp")

TOLERANCES = {
    "complex": 1e-12,
    "adjoint": 1e-12,
    "star": 1e-10,
    "gap": 10.0,
    "oracle": 1e-3,
    "closed_form_rel": 1e-6,
    "closed_form_abs": 1e-8,
    "positivity": 1e-6,  # times the curvature scale
    "identity_agreement": 1e-6,
    "identity_lower": 1e-8,  # times the curvature scale
    "wp_ratio": 1e-2,
    "psh": 1e-8,
    "holomorphy": 1e-6,
    "refine_floor": 1e-10,
}

_TOP_KEYS = {"name", "kind", "checks", "seed", "eps", "fiber", "base", "target", "weight", "twist",
             "modular", "tolerances", "expect", "refine", "description"}


class ScenarioError(ConfigurationError):
    """Invalid scenario file; the message names the file and the offending key."""


@dataclass(frozen=True)
class Scenario:
    name: str
    kind: str
    checks: tuple
    seed: int = 0
    eps: float = None
    degrees: tuple = ()
    factors: tuple = ()
    resolution: int = 16
    levels: tuple = None
    holonomy: tuple = None
    base_m: int = 1
    base_center: tuple = (0j,)
    h_fd: float = 1e-2
    base_form: tuple = ((1.0,),)
    p: int = None
    q: int = 0
    weight: WeightField = field(default_factory=WeightField)
    twist: WeightField = field(default_factory=WeightField)
    modular: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    expect: dict = field(default_factory=dict)
    refine: dict = field(default_factory=dict)
    source: str = ""

    @property
    def n(self):
        return len(self.degrees) if self.kind == "family" else 1

    def tol(self, key):
        return self.tolerances.get(key, TOLERANCES[key])

    def expected_verdict(self, check):
        return self.expect.get("verdicts", {}).get(check, "pass")

    def with_overrides(self, resolution=None, fd_step=None, eps=None, checks=None, seed=None):
        changes = {}
        if seed is not None:
            changes["seed"] = int(seed)
        if resolution is not None:
            changes["resolution"] = int(resolution)
            if self.kind == "modular":
                changes["modular"] = {**self.modular, "resolution": int(resolution)}
        if fd_step is not None:
            changes["h_fd"] = float(fd_step)
        if eps is not None:
            changes["eps"] = float(eps)
        if checks is not None:
            unknown = [c for c in checks if c not in CHECKS]
            if unknown:
                raise ScenarioError(f"{self.source}: unknown checks {unknown}")
            changes["checks"] = tuple(c for c in self.checks if c in checks)
            if not changes["checks"]:
                raise ScenarioError(f"{self.source}: none of the requested checks {list(checks)} is configured")
        return replace(self, **changes)


def _fail(src, key, msg):
    raise ScenarioError(f"{src}: key '{key}': {msg}")


def _get(table, key, src, path, typ, default=None, required=False):
    if key not in table:
        if required:
            _fail(src, f"{path}{key}", "missing required key")
        return default
    val = table[key]
    if typ is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if not isinstance(val, typ) or (typ is int and isinstance(val, bool)):
        _fail(src, f"{path}{key}", f"expected {getattr(typ, '__name__', typ)}, got {type(val).__name__}")
    return val


def _complex_pair(v, src, key):
    if not (isinstance(v, list) and len(v) == 2 and all(isinstance(x, (int, float)) for x in v)):
        _fail(src, key, "expected [Re, Im]")
    return complex(float(v[0]), float(v[1]))


def _number(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _int_list(x):
    return isinstance(x, list) and all(isinstance(e, int) and not isinstance(e, bool) for e in x)


def _base_function(d, src, key, dim):
    if not isinstance(d, dict):
        _fail(src, key, "expected a table")
    kind = d.get("kind", "poly")
    if kind == "poly":
        terms = {}
        raw = d.get("terms", [])
        if not isinstance(raw, list):
            _fail(src, f"{key}.terms", "expected an array")
        for i, t in enumerate(raw):
            if not (isinstance(t, list) and len(t) == 2 and _int_list(t[0]) and _number(t[1])):
                _fail(src, f"{key}.terms[{i}]", "expected [[exponents...], coefficient]")
            exps = tuple(t[0])
            if len(exps) > dim or any(e < 0 for e in exps):
                _fail(src, f"{key}.terms[{i}]", f"exponents must be {dim} non-negative integers")
            terms[exps] = terms.get(exps, 0.0) + float(t[1])
        return BaseFunction.polynomial(terms)
    if kind in ("cos", "sin"):
        lin = d.get("linear")
        if not (isinstance(lin, list) and 0 < len(lin) <= dim and all(_number(x) for x in lin)):
            _fail(src, f"{key}.linear", f"expected up to {dim} real coefficients")
        return BaseFunction(kind, (), tuple(float(x) for x in lin))
    _fail(src, f"{key}.kind", f"unknown base function kind {kind!r}")


def _mode(d, src, key, n):
    if not isinstance(d, dict):
        _fail(src, key, "expected a table")
    kind = d.get("kind", "const")
    if kind not in ("const", "cos", "sin"):
        _fail(src, f"{key}.kind", f"unknown mode kind {kind!r}")
    waves = d.get("waves", [])
    if not (isinstance(waves, list) and all(_int_list(w) and len(w) == 2 for w in waves)):
        _fail(src, f"{key}.waves", "expected a list of integer (m, k) pairs")
    if kind != "const" and len(waves) != n:
        _fail(src, f"{key}.waves", f"expected one (m, k) pair per fiber factor ({n})")
    try:
        return FourierMode(kind, tuple(tuple(w) for w in waves))
    except (ValueError, TypeError) as e:
        _fail(src, key, str(e))


def _weight(items, src, key, n, m):
    if not isinstance(items, list):
        _fail(src, key, "expected an array of tables")
    terms = []
    for i, it in enumerate(items):
        k = f"{key}[{i}]"
        if not isinstance(it, dict) or set(it) - {"base", "mode"}:
            _fail(src, k, "a term has exactly the keys 'base' and 'mode'")
        terms.append(FieldTerm(_base_function(it.get("base", {"kind": "poly", "terms": [[[], 1.0]]}),
                                               src, f"{k}.base", 2 * m),
                               _mode(it.get("mode", {}), src, f"{k}.mode", n)))
    return WeightField(tuple(terms))


def parse_scenario(text, source="<string>"):
    """Parse and validate a scenario document."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ScenarioError(f"{source}: {e}") from None
    src = source
    extra = set(doc) - _TOP_KEYS
    if extra:
        _fail(src, sorted(extra)[0], "unknown key")
    name = _get(doc, "name", src, "", str, required=True)
    if not name or "/" in name or name.startswith("."):
        _fail(src, "name", "must be a plain non-empty file name")
    kind = _get(doc, "kind", src, "", str, "family")
    if kind not in ("family", "modular"):
        _fail(src, "kind", f"unknown kind {kind!r}")
    checks = _get(doc, "checks", src, "", list, required=True)
    if not checks:
        _fail(src, "checks", "at least one check is required")
    allowed = MODULAR_CHECKS if kind == "modular" else CHECKS
    for c in checks:
        if c not in allowed:
            _fail(src, "checks", f"unknown or inapplicable check {c!r} for kind {kind!r}")
    if len(set(checks)) != len(checks):
        _fail(src, "checks", "duplicate check")
    seed = _get(doc, "seed", src, "", int, 0)
    eps = _get(doc, "eps", src, "", float)
    if eps is not None and eps < 0:
        _fail(src, "eps", "must be non-negative")

    tolerances = _get(doc, "tolerances", src, "", dict, {})
    for k, v in tolerances.items():
        if k not in TOLERANCES:
            _fail(src, f"tolerances.{k}", "unknown tolerance")
        if not isinstance(v, (int, float)) or not v > 0:
            _fail(src, f"tolerances.{k}", "tolerances must be positive numbers")
    tolerances = {k: float(v) for k, v in tolerances.items()}

    expect = dict(_get(doc, "expect", src, "", dict, {}))
    dims = {}
    for k, v in _get(expect, "dimensions", src, "expect.", dict, {}).items():
        try:
            p, q = (int(s) for s in k.split(","))
        except ValueError:
            _fail(src, f"expect.dimensions.{k}", "keys are 'p,q'")
        if not isinstance(v, int) or v < 0:
            _fail(src, f"expect.dimensions.{k}", "expected a non-negative integer")
        dims[(p, q)] = v
    expect["dimensions"] = dims
    for k, v in _get(expect, "verdicts", src, "expect.", dict, {}).items():
        if k not in checks:
            _fail(src, f"expect.verdicts.{k}", "refers to a check that is not requested")
        if v not in ("pass", "fail"):
            _fail(src, f"expect.verdicts.{k}", "expected 'pass' or 'fail'")
    if "curvature_constant" in expect:
        expect["curvature_constant"] = float(_get(expect, "curvature_constant", src, "expect.", float))

    refine = dict(_get(doc, "refine", src, "", dict, {}))
    res_l = _get(refine, "resolutions", src, "refine.", list, [])
    fd_l = _get(refine, "fd_steps", src, "refine.", list, [])
    if res_l and fd_l and len(res_l) != len(fd_l):
        _fail(src, "refine", "resolutions and fd_steps must have equal length")
    for i, r in enumerate(res_l):
        if not isinstance(r, int) or r < 8 or r % 2:
            _fail(src, f"refine.resolutions[{i}]", "expected an even integer >= 8")
    for i, h in enumerate(fd_l):
        if not isinstance(h, (int, float)) or not h > 0:
            _fail(src, f"refine.fd_steps[{i}]", "expected a positive number")
    lev_l = _get(refine, "levels", src, "refine.", list, [])
    for label, other in (("resolutions", res_l), ("fd_steps", fd_l)):
        if lev_l and other and len(lev_l) != len(other):
            _fail(src, "refine", f"levels and {label} must have equal length")
    for i, lv in enumerate(lev_l):
        if not (isinstance(lv, list) and all(isinstance(k, int) and k > 0 for k in lv)):
            _fail(src, f"refine.levels[{i}]", "expected a list of positive integers per factor")

    common = dict(name=name, kind=kind, checks=tuple(checks), seed=seed, eps=eps, tolerances=tolerances,
                  expect=expect, refine=refine, source=src)

    if kind == "modular":
        for k in ("fiber", "base", "target", "weight", "twist"):
            if k in doc:
                _fail(src, k, "not used by modular scenarios")
        mod = _get(doc, "modular", src, "", dict, {})
        allowed_keys = {"center", "step", "grid", "resolution", "lift_amplitude", "constant"}
        if set(mod) - allowed_keys:
            _fail(src, f"modular.{sorted(set(mod) - allowed_keys)[0]}", "unknown key")
        cfg = {"center": _complex_pair(mod.get("center", [0.0, 2.0]), src, "modular.center"),
               "step": _get(mod, "step", src, "modular.", float, 1e-2),
               "grid": _get(mod, "grid", src, "modular.", int, 9),
               "resolution": _get(mod, "resolution", src, "modular.", int, 16),
               "lift_amplitude": _get(mod, "lift_amplitude", src, "modular.", float, 0.0),
               "constant": _get(mod, "constant", src, "modular.", bool, False)}
        if cfg["center"].imag <= 0:
            _fail(src, "modular.center", "must lie in the upper half-plane")
        if cfg["grid"] < 3 or cfg["grid"] % 2 == 0:
            _fail(src, "modular.grid", "expected an odd integer >= 3")
        if not cfg["step"] > 0:
            _fail(src, "modular.step", "must be positive")
        if cfg["resolution"] < 8 or cfg["resolution"] % 2:
            _fail(src, "modular.resolution", "expected an even integer >= 8")
        return Scenario(modular=cfg, resolution=cfg["resolution"], **common)

    if "modular" in doc:
        _fail(src, "modular", "only used by modular scenarios")
    fiber = _get(doc, "fiber", src, "", dict, required=True)
    degrees = _get(fiber, "degrees", src, "fiber.", list, required=True)
    if len(degrees) not in (1, 2) or not all(isinstance(d, int) for d in degrees):
        _fail(src, "fiber.degrees", "expected one or two integers")
    n = len(degrees)
    facs = _get(fiber, "factors", src, "fiber.", list, [{"tau": [0.0, 1.0], "area": 1.0}] * n)
    if len(facs) != n:
        _fail(src, "fiber.factors", "one factor per degree is required")
    factors = []
    for i, f in enumerate(facs):
        if not isinstance(f, dict):
            _fail(src, f"fiber.factors[{i}]", "expected a table")
        tau = _complex_pair(f.get("tau", [0.0, 1.0]), src, f"fiber.factors[{i}].tau")
        area = f.get("area", 1.0)
        if not isinstance(area, (int, float)) or isinstance(area, bool):
            _fail(src, f"fiber.factors[{i}].area", "expected a number")
        if tau.imag <= 0:
            _fail(src, f"fiber.factors[{i}].tau", "must lie in the upper half-plane")
        if not area > 0:
            _fail(src, f"fiber.factors[{i}].area", "must be positive")
        factors.append((tau, area))
    resolution = _get(fiber, "resolution", src, "fiber.", int, 16)
    if resolution < 8 or resolution % 2:
        _fail(src, "fiber.resolution", "expected an even integer >= 8")
    levels = _get(fiber, "levels", src, "fiber.", list)
    if levels is not None and (len(levels) != n or not all(isinstance(k, int) and k > 0 for k in levels)):
        _fail(src, "fiber.levels", "expected one positive integer per factor")
    hol = _get(fiber, "holonomy", src, "fiber.", list)
    if hol is not None:
        if len(hol) != n:
            _fail(src, "fiber.holonomy", "one [Re, Im] per factor")
        hol = tuple(_complex_pair(h, src, f"fiber.holonomy[{i}]") for i, h in enumerate(hol))
        if any(h != 0 and d != 0 for h, d in zip(hol, degrees)):
            _fail(src, "fiber.holonomy", "holonomy twists need degree-0 factors")

    base = _get(doc, "base", src, "", dict, {})
    m = _get(base, "m", src, "base.", int, 1)
    if m not in (1, 2):
        _fail(src, "base.m", "base dimension must be 1 or 2")
    center = _get(base, "center", src, "base.", list, [[0.0, 0.0]] * m)
    if len(center) != m:
        _fail(src, "base.center", "one [Re, Im] per base coordinate")
    center = tuple(_complex_pair(c, src, f"base.center[{i}]") for i, c in enumerate(center))
    h_fd = _get(base, "h_fd", src, "base.", float, 1e-2)
    if not h_fd > 0:
        _fail(src, "base.h_fd", "must be positive")
    form = _get(base, "form", src, "base.", list, [[float(i == j) for j in range(m)] for i in range(m)])
    if len(form) != m or not all(isinstance(r, list) and len(r) == m and all(
            isinstance(x, (int, float)) and not isinstance(x, bool) for x in r) for r in form):
        _fail(src, "base.form", f"expected an {m}x{m} matrix")
    form = tuple(tuple(float(x) for x in r) for r in form)

    target = _get(doc, "target", src, "", dict, {})
    p = _get(target, "p", src, "target.", int, n)
    q = _get(target, "q", src, "target.", int, 0)
    if not (0 <= p <= n and 0 <= q <= n):
        _fail(src, "target", f"(p, q) must lie in [0, {n}]^2")

    weight = _weight(doc.get("weight", []), src, "weight", n, m)
    twist = _weight(doc.get("twist", []), src, "twist", n, m)
    return Scenario(degrees=tuple(degrees), factors=tuple(factors), resolution=resolution,
                    levels=None if levels is None else tuple(levels), holonomy=hol, base_m=m,
                    base_center=center, h_fd=h_fd, base_form=form, p=p, q=q, weight=weight, twist=twist,
                    **common)


def load_scenario(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ScenarioError(f"{path}: {e.strerror}") from None
    return parse_scenario(text, str(path))


def bundled_scenarios():
    """Paths of the scenario files shipped with the package, sorted by name."""
    here = Path(__file__).parent / "scenarios"
    return sorted(here.glob("*.toml"))


def bundled(name):
    for p in bundled_scenarios():
        if p.stem == name:
            return p
    raise ScenarioError(f"no bundled scenario named {name!r}")


def build_family(sc, resolution=None, h_fd=None, levels=None):
    """The :class:`FamilyModel` (or :class:`ModularFamily`) a scenario describes."""
    if sc.kind == "modular":
        cfg = dict(sc.modular)
        if resolution is not None:
            cfg["resolution"] = int(resolution)
        try:
            return ModularFamily(**cfg)
        except ValueError as e:
            raise ScenarioError(f"{sc.source}: {e}") from None
    try:
        geom = TorusGeometry(tuple(sc.factors), int(resolution or sc.resolution))
        kahler = TotalKahlerForm(sc.base_form, sc.twist)
        base = BaseGrid(sc.base_m, sc.base_center, float(h_fd or sc.h_fd))
        lev = sc.levels if levels is None else tuple(levels)
        return FamilyModel(geom, LineBundleData(sc.degrees), sc.weight, kahler, base, lev,
                           holonomy=sc.holonomy)
    except (ValueError, ConfigurationError, DegenerateKahlerForm) as e:
        raise ScenarioError(f"{sc.source}: {e}") from None


def center_fiber(sc, family):
    if sc.kind == "modular":
        return family.fiber(family.center)
    return family.fiber()


def refine_ladder(sc):
    """(resolution, h_fd, levels) triples for --refine, coarse to fine."""
    res = list(sc.refine.get("resolutions", []))
    fds = [float(h) for h in sc.refine.get("fd_steps", [])]
    lev = [tuple(lv) for lv in sc.refine.get("levels", [])]
    if not (res or fds or lev):
        return [(sc.resolution, 4 * sc.h_fd, sc.levels), (sc.resolution, 2 * sc.h_fd, sc.levels),
                (sc.resolution, sc.h_fd, sc.levels)]
    k = max(len(res), len(fds), len(lev))
    res = res or [sc.resolution] * k
    fds = fds or [sc.h_fd] * k
    lev = lev or [sc.levels] * k
    return list(zip(res, fds, lev))
