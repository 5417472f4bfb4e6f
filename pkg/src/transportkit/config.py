"""INI-style scenario and integration configs.

Sections
--------
``[scenario]``
    ``name`` is a built-in scenario, ``reynolds-custom`` or ``custom``;
    other keys are constructor parameters of the built-in (``u0 = 1.5``).
``[domain]``
    ``kind`` is one of ``box``, ``half-space``, ``cut-sheet``,
    ``wave-slab``, ``pyramid-lattice``.  A box takes ``bounds`` such as
    ``(-inf, 0), (-inf, inf)`` and, optionally, ``params`` (parameter names,
    default ``p1, p2, ...``), ``embed`` (a vector of expressions in those
    names) and ``orientation = -1``.
``[form]``
    One key per basis element, ``dx^dy = exp(-(x^2 + y^2))``; for
    ``reynolds-custom`` a single ``rho``.  ``density = ...`` (an ambient
    function) makes ``integrate`` treat the integrand as a density.
``[field]``
    ``X = (expr, ...)`` (``v`` is accepted as an alias).
``[run]``
    ``tol``, ``h``, ``t_min``, ``t_max``, ``t_steps``, ``t`` (integrate),
    ``residual_tol``, ``bound``, ``rhs``, ``workers``, ``seed``.

Errors are raised as :class:`ConfigError` carrying the file name and the
line of the offending entry.
"""
from __future__ import annotations

import configparser
import os
import re
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .calculus import DensityField, KFormFamily, TimeDepVectorField, coordinate_names
from .domains import (
    AxisBound,
    CellComplex,
    CornerCell,
    DomainSpecError,
    make_box,
    make_cut_sheet,
    make_pyramid_lattice,
    make_wave_slab,
)
from .exprlang import ParseError, UnboundVariableError, compile_expr
from .flow import FlowMap
from .scenarios import BUILTIN, Scenario, build, reynolds_custom
from .scenarios.reynolds import half_space, parse_vector

__all__ = ["ConfigError", "LoadedConfig", "load_config", "parse_config", "scenario_from_config",
           "integration_from_config", "parse_bounds", "parse_scalar"]

SECTIONS = ("scenario", "domain", "form", "field", "run")


class ConfigError(ValueError):
    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = path or "<config>"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}")


@dataclass
class LoadedConfig:
    path: str
    text: str
    sections: dict = field(default_factory=dict)

    def section(self, name: str) -> dict:
        return self.sections.get(name, {})

    def line_of(self, section: str, key: str | None = None) -> int | None:
        """1-based line of ``[section]`` or of ``key`` inside it."""
        current = None
        for i, raw in enumerate(self.text.splitlines(), 1):
            line = raw.strip()
            m = re.match(r"^\[([^\]]+)\]", line)
            if m:
                current = m.group(1).strip().lower()
                if key is None and current == section:
                    return i
                continue
            if current == section and key is not None:
                k = re.split(r"[=:]", line, maxsplit=1)[0].strip()
                if k == key:
                    return i
        return None

    def error(self, message: str, section: str, key: str | None = None) -> ConfigError:
        return ConfigError(message, self.path, self.line_of(section, key))

    def get(self, section: str, key: str, default=None, kind=str):
        sec = self.section(section)
        if key not in sec:
            return default
        try:
            return kind(sec[key])
        except (TypeError, ValueError) as exc:
            raise self.error(f"bad value for {key!r}: {sec[key]!r} ({exc})", section, key) from None


def parse_config(text: str, path: str = "<config>") -> LoadedConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=path)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("entries must follow a [section] header", path, exc.lineno) from None
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ConfigError("malformed line", path, line) from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.option!r} in [{exc.section}]", path, exc.lineno) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}]", path, exc.lineno) from None
    cfg = LoadedConfig(path, text)
    for name in cp.sections():
        low = name.lower()
        if low not in SECTIONS:
            raise cfg.error(f"unknown section [{name}] (expected one of {', '.join(SECTIONS)})", low)
        cfg.sections[low] = dict(cp[name])
    return cfg


def load_config(path: str) -> LoadedConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path) from None
    return parse_config(text, os.fspath(path))


# -- value parsing -------------------------------------------------------------------

def _number(text: str) -> float:
    s = text.strip().lower().replace(" ", "")
    table = {"inf": np.inf, "+inf": np.inf, "-inf": -np.inf, "pi": np.pi, "-pi": -np.pi, "2*pi": 2 * np.pi}
    if s in table:
        return float(table[s])
    return float(s)


def parse_bounds(text: str) -> list[AxisBound]:
    """``"(-inf, 0], [0, 1]"`` style interval lists.

    ``[`` and ``]`` mark closed ends, ``(`` and ``)`` open ends; infinite
    ends are always open.
    """
    items = re.findall(r"([\[(])\s*([^,\[\]()]+?)\s*,\s*([^,\[\]()]+?)\s*([\])])", text)
    if not items:
        raise ValueError(f"no intervals found in {text!r}")
    out = []
    for lb, a, b, rb in items:
        lo, hi = _number(a), _number(b)
        out.append(AxisBound(lo, hi, lb == "[" and np.isfinite(lo), rb == "]" and np.isfinite(hi)))
    return out


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    s = str(text).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_scalar(text: str):
    """Best-effort literal for builtin constructor parameters."""
    s = text.strip()
    if s.lower() in ("true", "false", "yes", "no", "on", "off"):
        return _bool(s)
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return _number(s)
    except ValueError:
        pass
    if "," in s:
        return [parse_scalar(p) for p in parse_vector(s)]
    return s


def _compile(cfg: LoadedConfig, section: str, key: str, text: str, names, param):
    try:
        return compile_expr(text, names, param)
    except ParseError as exc:
        raise cfg.error(f"expression error in {key!r} at offset {exc.offset}: {exc}", section, key) from None
    except UnboundVariableError as exc:
        raise cfg.error(f"{exc} in {key!r}", section, key) from None


# -- domains --------------------------------------------------------------------------

def domain_from_config(cfg: LoadedConfig) -> CellComplex:
    sec = cfg.section("domain")
    if not sec:
        raise cfg.error("missing [domain] section", "domain")
    kind = sec.get("kind", "box").strip().lower()
    try:
        if kind == "half-space":
            return half_space()
        if kind == "cut-sheet":
            return make_cut_sheet(cfg.get("domain", "H", 1.0, float))
        if kind == "wave-slab":
            return make_wave_slab(cfg.get("domain", "u0", 1.0, float), cfg.get("domain", "sigma", 1.0, float),
                                  cfg.get("domain", "R", 1.0, float))
        if kind == "pyramid-lattice":
            radius = sec.get("radius", "0").strip().lower()
            return make_pyramid_lattice(cfg.get("domain", "L", 1.0, float),
                                        None if radius in ("inf", "none") else int(radius))
        if kind == "box":
            return CellComplex([_box(cfg, sec)], name="box")
    except DomainSpecError as exc:
        raise cfg.error(str(exc), "domain", "kind") from None
    raise cfg.error(f"unknown domain kind {kind!r}", "domain", "kind")


def _box(cfg: LoadedConfig, sec: Mapping) -> CornerCell:
    if "bounds" not in sec:
        raise cfg.error("a box needs 'bounds'", "domain")
    try:
        bounds = parse_bounds(sec["bounds"])
    except (ValueError, DomainSpecError) as exc:
        raise cfg.error(str(exc), "domain", "bounds") from None
    k = len(bounds)
    sign = cfg.get("domain", "orientation", 1, int)
    if sign not in (1, -1):
        raise cfg.error("orientation must be 1 or -1", "domain", "orientation")
    if "embed" not in sec:
        return make_box(bounds).with_orientation(sign)
    names = [p.strip() for p in sec.get("params", ",".join(f"p{i + 1}" for i in range(k))).split(",")]
    if len(names) != k:
        raise cfg.error(f"{len(names)} parameter names for {k} axes", "domain", "params")
    comps = [_compile(cfg, "domain", "embed", e, names, None) for e in parse_vector(sec["embed"])]

    def embed(p):
        return [c(0.0, p) + 0.0 * p[0] for c in comps]

    cell = CornerCell(bounds, embed, len(comps), sign, name="box")
    try:
        cell.check_rank()
    except DomainSpecError as exc:
        raise cfg.error(str(exc), "domain", "embed") from None
    return cell


# -- forms and fields ------------------------------------------------------------------

def _param_name(n: int) -> str:
    return "r" if "t" in coordinate_names(n) else "t"


def form_from_config(cfg: LoadedConfig, n: int) -> KFormFamily:
    sec = cfg.section("form")
    if not sec:
        raise cfg.error("missing [form] section", "form")
    coords = coordinate_names(n)
    param = _param_name(n)
    out = None
    for key, text in sec.items():
        if key in ("density", "rho"):
            continue
        try:
            term = KFormFamily.from_exprs(n, {key: text}, coords, param)
        except ParseError as exc:
            raise cfg.error(f"expression error in {key!r} at offset {exc.offset}: {exc}", "form", key) from None
        except (UnboundVariableError, ValueError) as exc:
            raise cfg.error(f"{exc} in {key!r}", "form", key) from None
        if out is not None and out.k != term.k:
            raise cfg.error("components of mixed degree", "form", key)
        out = term if out is None else out + term
    if out is None:
        raise cfg.error("no form components given", "form")
    return out


def field_from_config(cfg: LoadedConfig, n: int) -> TimeDepVectorField:
    sec = cfg.section("field")
    key = "X" if "X" in sec else ("v" if "v" in sec else None)
    if key is None:
        raise cfg.error("[field] needs 'X = (...)'", "field")
    exprs = parse_vector(sec[key])
    if len(exprs) != n:
        raise cfg.error(f"field has {len(exprs)} components, ambient dimension is {n}", "field", key)
    coords = coordinate_names(n)
    param = _param_name(n)
    comps = [_compile(cfg, "field", key, e, coords, param) for e in exprs]
    return TimeDepVectorField(comps, any(c.depends_on_param for c in comps))


def _grid(cfg: LoadedConfig, default=(0.0, 1.0, 5)):
    t_min = cfg.get("run", "t_min", default[0], float)
    t_max = cfg.get("run", "t_max", default[1], float)
    steps = cfg.get("run", "t_steps", default[2], int)
    if steps < 2:
        raise cfg.error("t_steps must be at least 2", "run", "t_steps")
    return [float(t) for t in np.linspace(t_min, t_max, steps)]


def scenario_from_config(cfg: LoadedConfig) -> Scenario:
    sec = cfg.section("scenario")
    name = sec.get("name", "custom").strip()
    tol = cfg.get("run", "tol", None, float)
    if tol is not None and not tol > 0:
        raise cfg.error("tol must be positive", "run", "tol")
    run = cfg.section("run")
    if name in BUILTIN:
        params = {k: parse_scalar(v) for k, v in sec.items() if k != "name"}
        if tol is not None:
            params["tol"] = tol
        try:
            sc = build(name, **params)
        except TypeError as exc:
            raise cfg.error(f"bad parameters for {name}: {exc}", "scenario") from None
        except DomainSpecError as exc:
            raise cfg.error(str(exc), "scenario") from None
        if any(k in run for k in ("t_min", "t_max", "t_steps")):
            sc.t_grid = _grid(cfg, (min(sc.t_grid), max(sc.t_grid), len(sc.t_grid)))
    elif name == "reynolds-custom":
        conf = {"rho": cfg.section("form").get("rho", "exp(-(x^2+y^2+z^2))"),
                "v": cfg.section("field").get("v", cfg.section("field").get("X", "(1, 0, 0)")),
                "spacetime": sec.get("spacetime", "false")}
        if cfg.section("domain"):
            conf["domain"] = domain_from_config(cfg)
        if "bound" in run:
            conf["bound"] = run["bound"]
        try:
            sc = reynolds_custom(conf, tol=tol, t_grid=_grid(cfg))
        except (ParseError, UnboundVariableError) as exc:
            raise cfg.error(str(exc), "form") from None
        except DomainSpecError as exc:
            raise cfg.error(str(exc), "domain") from None
    elif name == "custom":
        S0 = domain_from_config(cfg)
        form = form_from_config(cfg, S0.n)
        X = field_from_config(cfg, S0.n)
        grid = _grid(cfg)
        try:
            sc = Scenario(name=sec.get("label", "custom"), n=S0.n, S0=S0, form=form, field=X, flow=FlowMap(X),
                          t_interval=(min(min(grid), 0.0), max(max(grid), 0.0)), t_grid=grid,
                          tol=tol or 1e-6, param_name=_param_name(S0.n), metadata={"config": cfg.path})
        except Exception as exc:
            raise cfg.error(str(exc), "form") from None
        if "bound" in run:
            b = _compile(cfg, "run", "bound", run["bound"], [f"p{i + 1}" for i in range(S0.k)], None)
            sc.bound_candidate = DensityField.on_parameters(lambda p: b(0.0, p))
    else:
        raise cfg.error(f"unknown scenario {name!r}; available: {', '.join(sorted(BUILTIN))}, "
                        "reynolds-custom, custom", "scenario", "name")
    h = cfg.get("run", "h", None, float)
    if h is not None:
        if not h > 0:
            raise cfg.error("h must be positive", "run", "h")
        sc.h = h
    rt = cfg.get("run", "residual_tol", None, float)
    if rt is not None:
        sc.residual_tol = rt
    sc.metadata.setdefault("config", cfg.path)
    return sc


@dataclass
class IntegrationJob:
    complex: CellComplex
    form: KFormFamily | None
    density: DensityField | None
    t: float
    tol: float


def integration_from_config(cfg: LoadedConfig) -> IntegrationJob:
    S = domain_from_config(cfg)
    t = cfg.get("run", "t", 0.0, float)
    tol = cfg.get("run", "tol", 1e-8, float)
    if not tol > 0:
        raise cfg.error("tol must be positive", "run", "tol")
    sec = cfg.section("form")
    if "density" in sec:
        coords = coordinate_names(S.n)
        f = _compile(cfg, "form", "density", sec["density"], coords, _param_name(S.n))
        return IntegrationJob(S, None, DensityField.from_ambient(lambda tt, x: f(tt, x)), t, tol)
    form = form_from_config(cfg, S.n)
    if form.k != S.k:
        raise cfg.error(f"a {form.k}-form cannot be integrated over a {S.k}-dimensional domain", "form")
    return IntegrationJob(S, form, None, t, tol)
