import math
import textwrap
from pathlib import Path

import numpy as np
import pytest

from transportkit.config import (
    ConfigError,
    integration_from_config,
    load_config,
    parse_bounds,
    parse_config,
    parse_scalar,
    scenario_from_config,
)
from transportkit.quadrature import integrate_density, integrate_form
from transportkit.scenarios import BUILTIN

ROOT = Path(__file__).resolve().parents[1]
DEMO = ROOT / "demos" / "configs"
SHIPPED = ROOT / "src" / "transportkit" / "configs"


def cfg(text, path="test.ini"):
    return parse_config(textwrap.dedent(text), path)


def test_parse_bounds():
    b = parse_bounds("[0, inf), (-inf, 0], [-1, 2.5]")
    assert [(x.lower, x.upper) for x in b] == [(0.0, math.inf), (-math.inf, 0.0), (-1.0, 2.5)]
    b = parse_bounds("[0, pi]")
    assert b[0].upper == pytest.approx(math.pi)
    with pytest.raises(ValueError):
        parse_bounds("nothing here")


def test_parse_scalar():
    assert parse_scalar("1") == 1 and isinstance(parse_scalar("1"), int)
    assert parse_scalar("2.5") == 2.5
    assert parse_scalar("true") is True and parse_scalar("off") is False
    assert parse_scalar("0, 0.5, 1") == [0, 0.5, 1]
    assert parse_scalar("hello") == "hello"


def test_unknown_section_has_line_number():
    with pytest.raises(ConfigError) as exc:
        cfg("""
            [domain]
            kind = box

            [bogus]
            a = 1
            """)
    assert str(exc.value).startswith("test.ini:5:")


def test_expression_error_points_at_key_line():
    c = cfg("""
        [domain]
        kind = box
        bounds = [0, 1]

        [form]
        dx = exp(x +
        """)
    with pytest.raises(ConfigError) as exc:
        integration_from_config(c)
    assert "test.ini:7:" in str(exc.value) and "offset" in str(exc.value)


def test_unbound_variable_is_reported():
    c = cfg("""
        [domain]
        kind = box
        bounds = [0, 1]
        [form]
        dx = w * x
        """)
    with pytest.raises(ConfigError, match="w"):
        integration_from_config(c)


def test_degree_mismatch():
    c = cfg("""
        [domain]
        kind = box
        bounds = [0, 1], [0, 1]
        [form]
        dx = 1
        """)
    with pytest.raises(ConfigError, match="1-form"):
        integration_from_config(c)


def test_duplicate_key_and_missing_header():
    with pytest.raises(ConfigError, match="duplicate"):
        cfg("[run]\ntol = 1\ntol = 2\n")
    with pytest.raises(ConfigError, match=":1:"):
        cfg("tol = 1\n")


def test_integration_from_config_examples():
    job = integration_from_config(load_config(DEMO / "gaussian-plane.ini"))
    assert integrate_form(job.form, job.complex, job.t, job.tol).value == pytest.approx(math.pi, abs=1e-8)
    job = integration_from_config(load_config(DEMO / "unit-square.ini"))
    assert integrate_form(job.form, job.complex, job.t, job.tol).value == pytest.approx(1.0, abs=1e-14)
    job = integration_from_config(load_config(DEMO / "paraboloid-patch.ini"))
    assert integrate_form(job.form, job.complex, job.t, job.tol).value == pytest.approx(2 / 3, abs=1e-12)


def test_density_config():
    c = cfg("""
        [domain]
        kind = box
        bounds = [0, 1], [0, 2]
        orientation = -1
        [form]
        density = x + y
        """)
    job = integration_from_config(c)
    assert job.density is not None
    assert integrate_density(job.density, job.complex, job.tol).value == pytest.approx(3.0, abs=1e-12)


@pytest.mark.parametrize("name", sorted(BUILTIN))
def test_shipped_configs_load(name):
    sc = scenario_from_config(load_config(SHIPPED / f"{name}.ini"))
    assert sc.t_grid and sc.tol > 0
    assert sc.metadata["config"].endswith(f"{name}.ini")


def test_reynolds_config_matches_builtin():
    sc = scenario_from_config(load_config(SHIPPED / "reynolds-translate.ini"))
    assert sc.name == "reynolds-custom"
    assert sc.integral(0.0).value == pytest.approx(math.pi ** 1.5 / 2, abs=1e-6)
    assert sc.t_grid == [0.0, 0.25, 0.5, 0.75, 1.0]


def test_custom_scenario():
    sc = scenario_from_config(load_config(DEMO / "rotating-gaussian.ini"))
    assert sc.name == "rotating-gaussian" and sc.n == 2 and sc.form.time_dependent
    assert sc.t_grid == [0.0, 0.5, 1.0]


def test_builtin_overrides_and_grid():
    c = cfg("""
        [scenario]
        name = lorenz-volume
        H = 2
        [run]
        t_max = 0.1
        t_steps = 3
        residual_tol = 1e-5
        """)
    sc = scenario_from_config(c)
    assert sc.metadata["H"] == 2.0
    assert sc.t_grid == [0.0, 0.05, 0.1]
    assert sc.residual_tol == 1e-5


@pytest.mark.parametrize("body,msg", [
    ("[scenario]\nname = lorenz-volume\n[run]\nt_steps = 1\n", "t_steps"),
    ("[scenario]\nname = lorenz-volume\n[run]\ntol = -1\n", "tol"),
    ("[scenario]\nname = lorenz-volume\n[run]\nh = 0\n", "h must"),
    ("[scenario]\nname = lorenz-volume\nH = -1\n", "height"),
    ("[scenario]\nname = lorenz-volume\nbogus = 1\n", "bad parameters"),
    ("[scenario]\nname = nope\n", "unknown scenario"),
    ("[scenario]\nname = custom\n[domain]\nkind = box\nbounds = [0,1]\n[form]\ndx = 1\n[field]\nX = (1, 0)\n", "components"),
    ("[scenario]\nname = custom\n[domain]\nkind = blob\n", "unknown domain"),
])
def test_scenario_config_errors(body, msg):
    with pytest.raises(ConfigError, match=msg):
        scenario_from_config(parse_config(body, "bad.ini"))


def test_missing_file():
    with pytest.raises(ConfigError, match="cannot read"):
        load_config("/nonexistent/file.ini")


def test_embedded_box_evaluates():
    c = cfg("""
        [domain]
        kind = box
        bounds = [0, 1], [0, 1]
        params = u, v
        embed = (u, v, u*v)
        [form]
        dx^dy = 1
        """)
    job = integration_from_config(c)
    x = job.complex.cells[0].evaluate(np.array([[0.5], [0.4]]))
    np.testing.assert_allclose(x.ravel(), [0.5, 0.4, 0.2])


def test_singular_embedding_rejected():
    c = cfg("""
        [domain]
        kind = box
        bounds = [0, 1], [0, 1]
        params = u, v
        embed = (u + v, u + v, 0)
        [form]
        dx^dy = 1
        """)
    with pytest.raises(ConfigError, match="singular"):
        integration_from_config(c)
