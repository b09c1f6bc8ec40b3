import copy
import json
import sys

import pytest
from hypothesis import given
from hypothesis import strategies as st

from direct_image.scenario import (CHECKS, ScenarioError, TOLERANCES, build_family, bundled, bundled_scenarios, load_scenario,
                                   parse_scenario, refine_ladder)

BASIC = """
name = "demo"
checks = ["complex", "curvature"]
[fiber]
degrees = [3]
resolution = 12
[[weight]]
base = {kind = "poly", terms = [[[1, 0], 1.0]]}
mode = {kind = "cos", waves = [[1, 0]]}
"""


def test_bundled_scenarios_parse():
    paths = bundled_scenarios()
    assert len(paths) == 8
    for p in paths:
        sc = load_scenario(p)
        assert sc.name == p.stem
        assert set(sc.checks) <= set(CHECKS)
        build_family(sc)


def test_defaults():
    sc = parse_scenario(BASIC, "demo.toml")
    assert sc.kind == "family" and sc.p == 1 and sc.q == 0 and sc.base_m == 1
    assert sc.tol("oracle") == TOLERANCES["oracle"]
    assert sc.expected_verdict("curvature") == "pass"
    assert refine_ladder(sc) == [(12, 4e-2, None), (12, 2e-2, None), (12, 1e-2, None)]


def test_overrides():
    sc = parse_scenario(BASIC, "demo.toml").with_overrides(resolution=16, fd_step=5e-3, eps=1e-5,
                                                           checks=["curvature", "wp"], seed=7)
    assert (sc.resolution, sc.h_fd, sc.eps, sc.checks, sc.seed) == (16, 5e-3, 1e-5, ("curvature",), 7)
    with pytest.raises(ScenarioError, match="unknown checks"):
        sc.with_overrides(checks=["bogus"])
    with pytest.raises(ScenarioError, match="none of the requested"):
        sc.with_overrides(checks=["wp"])


def test_modular_override_reaches_family():
    sc = load_scenario(bundled("modular-wp")).with_overrides(resolution=12)
    assert build_family(sc).resolution == 12


@pytest.mark.parametrize("edit, key", [
    ('name = "demo"', "name"),
    ('checks = ["complex", "curvature"]', "checks"),
    ("degrees = [3]", "fiber.degrees"),
])
def test_missing_required_keys(edit, key):
    with pytest.raises(ScenarioError, match=f"key '{key}'"):
        parse_scenario(BASIC.replace(edit, ""), "x.toml")


@pytest.mark.parametrize("extra, key", [
    ("[tolerances]\nwobble = 1e-3", "tolerances.wobble"),
    ("[tolerances]\noracle = -1.0", "tolerances.oracle"),
    ("[base]\nm = 3", "base.m"),
    ("[target]\nq = 4", "target"),
    ("[expect]\nverdicts = {wp = 'fail'}", "expect.verdicts.wp"),
    ("[expect]\nverdicts = {curvature = 'maybe'}", "expect.verdicts.curvature"),
    ("[refine]\nresolutions = [15]", "refine.resolutions[0]"),
    ("[refine]\nresolutions = [16, 24]\nfd_steps = [1e-2]", "refine"),
    ("[modular]\nstep = 0.1", "modular"),
])
def test_invalid_values_name_their_key(extra, key):
    with pytest.raises(ScenarioError) as e:
        parse_scenario(BASIC + "\n" + extra, "x.toml")
    assert f"key '{key}'" in str(e.value)
    assert str(e.value).startswith("x.toml: ")


def test_unknown_top_level_key():
    with pytest.raises(ScenarioError, match="key 'colour': unknown key"):
        parse_scenario("colour = 1\n" + BASIC, "x.toml")


def test_fiber_section_errors():
    bad = BASIC.replace("resolution = 12", "resolution = 13")
    with pytest.raises(ScenarioError, match="fiber.resolution"):
        parse_scenario(bad)
    bad = BASIC.replace("degrees = [3]", "degrees = [3]\nholonomy = [[1.0, 0.0]]")
    with pytest.raises(ScenarioError, match="degree-0"):
        parse_scenario(bad)
    bad = BASIC.replace("waves = [[1, 0]]", "waves = [[1, 0], [0, 1]]")
    with pytest.raises(ScenarioError, match=r"weight\[0\].mode.waves"):
        parse_scenario(bad)


def test_modular_rejects_family_tables():
    text = 'name = "m"\nkind = "modular"\nchecks = ["wp"]\n[fiber]\ndegrees = [0]\n'
    with pytest.raises(ScenarioError, match="key 'fiber'"):
        parse_scenario(text)
    text = 'name = "m"\nkind = "modular"\nchecks = ["curvature"]\n'
    with pytest.raises(ScenarioError, match="inapplicable"):
        parse_scenario(text)
    text = 'name = "m"\nkind = "modular"\nchecks = ["wp"]\n[modular]\ngrid = 4\n'
    with pytest.raises(ScenarioError, match="modular.grid"):
        parse_scenario(text)


def test_toml_syntax_error():
    with pytest.raises(ScenarioError, match="^bad.toml: "):
        parse_scenario("name = ", "bad.toml")


def test_missing_file(tmp_path):
    with pytest.raises(ScenarioError):
        load_scenario(tmp_path / "nope.toml")
    with pytest.raises(ScenarioError):
        bundled("nope")


def test_build_family_wraps_model_errors():
    sc = parse_scenario(BASIC.replace("[fiber]", "[base]\nform = [[-1.0]]\n[fiber]"), "neg.toml")
    with pytest.raises(ScenarioError, match="^neg.toml: "):
        build_family(sc)


def _valid_doc(name):
    if sys.version_info >= (3, 11):
        import tomllib
    else:
        import tomli as tomllib
    return tomllib.loads(bundled(name).read_text())


_junk = st.one_of(st.none(), st.booleans(), st.integers(-3, 20), st.floats(allow_nan=False, width=32),
                  st.text(max_size=3), st.lists(st.integers(-2, 3), max_size=3), st.dictionaries(st.text(max_size=2),
                                                                                                  st.integers(), max_size=2))


def _paths(doc, prefix=()):
    for k, v in doc.items():
        yield prefix + (k,)
        if isinstance(v, dict):
            yield from _paths(v, prefix + (k,))
        elif isinstance(v, list):
            for i, item in enumerate(v):
                yield prefix + (k, i)
                if isinstance(item, dict):
                    yield from _paths(item, prefix + (k, i))


def _dump(doc):
    # minimal writer for the value types produced above
    def val(v):
        if v is None:
            return '""'
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, (int, float)):
            return repr(v) if v == v and abs(v) != float("inf") else "0.0"
        if isinstance(v, str):
            return json.dumps(v)
        if isinstance(v, list):
            return "[" + ", ".join(val(x) for x in v) + "]"
        if isinstance(v, dict):
            return "{" + ", ".join(f"{json.dumps(k)} = {val(x)}" for k, x in v.items()) + "}"
        raise TypeError(v)

    return "\n".join(f"{json.dumps(k)} = {val(v)}" for k, v in doc.items())


DOCS = {}


@given(st.data())
def test_mutated_documents_fail_cleanly(data):
    name = data.draw(st.sampled_from(["negative-q1", "twisted-q0", "modular-wp", "dimension-jump"]))
    if name not in DOCS:
        DOCS[name] = _valid_doc(name)
    doc = copy.deepcopy(DOCS[name])
    path = data.draw(st.sampled_from(list(_paths(doc))))
    target = doc
    for k in path[:-1]:
        target = target[k]
    target[path[-1]] = data.draw(_junk)
    try:
        build_family(parse_scenario(_dump(doc), "fuzz.toml"))
    except ScenarioError:
        pass
