"""``transportkit`` command line: run scenarios, verification suites and one-off integrals.

Exit codes: 0 success, 2 residual or divergence failure, 1 any other error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .config import ConfigError, integration_from_config, load_config, parse_scalar, scenario_from_config
from .domains import DomainSpecError
from .exprlang import ParseError
from .quadrature import DivergenceError, integrate_density, integrate_form
from .scenarios import BUILTIN, PreflightError, build
from .transport import boundedness_witness, transport_report
from .verification import run_suite

__all__ = ["main", "RunConfig", "cmd_run", "cmd_verify", "cmd_integrate", "example_config"]

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2
log = logging.getLogger("transportkit")

_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "warning": logging.WARNING,
           "info": logging.INFO, "debug": logging.DEBUG}


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    target: str
    overrides: list = field(default_factory=list)
    tol: float | None = None
    t_min: float | None = None
    t_max: float | None = None
    t_steps: int | None = None
    h: float | None = None
    out: str | None = None
    format: str | None = None
    seed: int = 0
    workers: int | None = None
    rhs: str = "time_dependent"
    witness: int = 0

    def __post_init__(self):
        if self.t_steps is not None and self.t_steps < 2:
            raise UsageError("--t-steps must be at least 2")
        if self.tol is not None and not self.tol > 0:
            raise UsageError("--tol must be positive")
        if self.h is not None and not self.h > 0:
            raise UsageError("--h must be positive")
        if self.format not in (None, "csv", "table"):
            raise UsageError("--format must be csv or table")


def example_config(name: str) -> str:
    """Text of the shipped example config for a built-in scenario."""
    return resources.files("transportkit").joinpath("configs", f"{name}.ini").read_text(encoding="utf-8")


def _parse_overrides(items) -> dict:
    out = {}
    for item in items:
        if "=" not in item:
            raise UsageError(f"override {item!r} is not of the form key=value")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _load_scenario(cfg: RunConfig):
    overrides = _parse_overrides(cfg.overrides)
    if cfg.target in BUILTIN:
        return build(cfg.target, **{k: parse_scalar(v) for k, v in overrides.items()})
    if os.path.exists(cfg.target):
        conf = load_config(cfg.target)
        for k, v in overrides.items():
            sec, _, key = k.rpartition(".")
            conf.sections.setdefault((sec or "scenario").lower(), {})[key] = v
        return scenario_from_config(conf)
    raise UsageError(f"unknown scenario {cfg.target!r}; available: {', '.join(sorted(BUILTIN))} "
                     "or a path to a config file")


def _apply_grid(sc, cfg: RunConfig):
    if cfg.t_min is None and cfg.t_max is None and cfg.t_steps is None:
        return
    lo = min(sc.t_grid) if cfg.t_min is None else cfg.t_min
    hi = max(sc.t_grid) if cfg.t_max is None else cfg.t_max
    steps = len(sc.t_grid) if cfg.t_steps is None else cfg.t_steps
    if not hi > lo:
        raise UsageError("--t-max must exceed --t-min")
    grid = [float(t) for t in np.linspace(lo, hi, steps)]
    r_max = sc.metadata.get("r_max")
    if r_max is not None and max(grid) >= r_max:
        raise UsageError(f"{sc.param_name} must stay below {r_max:g} for this scenario")
    sc.t_grid = grid
    sc.t_interval = (min(lo, 0.0), max(hi, 0.0))


def cmd_run(cfg: RunConfig, stdout=None) -> int:
    stdout = stdout or sys.stdout
    sc = _load_scenario(cfg)
    _apply_grid(sc, cfg)
    if cfg.tol is not None:
        sc.tol = cfg.tol
    if cfg.h is not None:
        sc.h = cfg.h
    log.info("preflight %s", sc.name)
    sc.preflight(seed=cfg.seed, check_integral=False)
    workers = cfg.workers or os.cpu_count() or 1
    try:
        rep = transport_report(sc, rhs=cfg.rhs, workers=workers)
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_FAIL
    fmt = cfg.format or ("csv" if cfg.out else "table")
    text = rep.to_csv() if fmt == "csv" else rep.table() + "\n"
    if cfg.out:
        with open(cfg.out, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
        meta = " ".join(f"{k}={v}" for k, v in sorted(rep.metadata.items()) if k != "config")
        print(f"wrote {cfg.out}: {len(rep.t_grid)} rows, scenario {rep.scenario} ({meta}), "
              f"{'PASS' if rep.passed else 'FAIL'}", file=stdout)
    else:
        stdout.write(text)
    if cfg.witness:
        w = boundedness_witness(sc, sample_count=cfg.witness, seed=cfg.seed)
        print(f"boundedness: {len(w.violations)} violation(s), max ratio {w.max_ratio:.3g}; {w.note}", file=stdout)
    if not all(rep.converged):
        log.warning("some integrals did not reach the requested tolerance")
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_verify(suite: str, seed: int = 0, workers: int = 1, stdout=None) -> int:
    stdout = stdout or sys.stdout
    checks = run_suite(suite, seed=seed, workers=workers)
    for c in checks:
        print(c.line(), file=stdout)
    failed = sum(not c.passed for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} checks passed (suite {suite}, seed {seed})", file=stdout)
    return EXIT_OK if failed == 0 else EXIT_FAIL


def cmd_integrate(path: str, tol: float | None = None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    job = integration_from_config(load_config(path))
    tol = tol or job.tol
    try:
        if job.density is not None:
            res = integrate_density(job.density, job.complex, tol, t=job.t)
        else:
            res = integrate_form(job.form, job.complex, job.t, tol)
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=stdout)
        return EXIT_FAIL
    print(f"value          {res.value:.15g}", file=stdout)
    print(f"abs_integral   {res.abs_integral:.15g}", file=stdout)
    print(f"error_estimate {res.abs_error_estimate:.3e}", file=stdout)
    print(f"converged      {'yes' if res.converged else 'no'}", file=stdout)
    return EXIT_OK if res.converged else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="transportkit", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="evaluate both sides of the transport identity over a parameter grid")
    r.add_argument("target", help=f"built-in scenario ({', '.join(sorted(BUILTIN))}) or config path")
    r.add_argument("overrides", nargs="*", help="key=value parameter overrides (section.key for configs)")
    r.add_argument("--t-min", type=float)
    r.add_argument("--t-max", type=float)
    r.add_argument("--t-steps", type=int)
    r.add_argument("--tol", type=float)
    r.add_argument("--h", type=float, help="finite-difference step of the left side")
    r.add_argument("--out")
    r.add_argument("--format", choices=("csv", "table"))
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--workers", type=int)
    r.add_argument("--rhs", choices=("time_dependent", "time_independent", "divergence"), default="time_dependent")
    r.add_argument("--witness", type=int, default=0, metavar="N",
                   help="also sample the boundedness hypothesis at N points per cell")

    v = sub.add_parser("verify", help="run the built-in property suites")
    v.add_argument("suite", choices=("algebra", "quadrature", "flow", "transport", "all"))
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--workers", type=int, default=1)

    i = sub.add_parser("integrate", help="integrate a config-defined form or density")
    i.add_argument("config")
    i.add_argument("--tol", type=float)

    e = sub.add_parser("example-config", help="print the shipped config of a built-in scenario")
    e.add_argument("name", choices=sorted(BUILTIN))
    return p


def _setup_logging():
    level = _LEVELS.get(os.environ.get("TRANSPORTKIT_LOG", "warn").strip().lower(), logging.WARNING)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            cfg = RunConfig(args.target, args.overrides, args.tol, args.t_min, args.t_max, args.t_steps, args.h,
                            args.out, args.format, args.seed, args.workers, args.rhs, args.witness)
            return cmd_run(cfg)
        if args.command == "verify":
            return cmd_verify(args.suite, args.seed, args.workers)
        if args.command == "integrate":
            return cmd_integrate(args.config, args.tol)
        if args.command == "example-config":
            sys.stdout.write(example_config(args.name))
            return EXIT_OK
    except (UsageError, ConfigError, PreflightError, DomainSpecError, ParseError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"transportkit: error: {msg}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # report, never dump a traceback unless debugging
        log.debug("unhandled error", exc_info=True)
        print(f"transportkit: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
