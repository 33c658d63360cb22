"""Command-line front end.

A run is a pure function of its :class:`RunConfig`. The config can come
from a JSON file (``--config``); command-line flags override the file.
The effective config, minus the worker count, is echoed into every report
header, so reports are byte-identical across runs and worker counts.

Exit status: 0 when no unflagged record violates its bound, 1 otherwise,
2 on a config error, 3 on an engine error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import comparison as cmp
from . import geodesics as geo
from . import jacobi as jac
from . import kernels, mcp, reports
from .models import FORMAT_VERSION, model_from_name

WORKERS_ENV = "SASAKI_LAB_WORKERS"
COMMANDS = ("kernels", "dist", "exp", "jacobi", "hessian", "verify", "diameter", "mcp")
EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG, EXIT_ENGINE = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Everything a run depends on.

    Points and vectors are chart coordinates and frame coefficients.
    ``tolerance`` replaces the relative record tolerance ``1e-6``.
    ``workers`` only changes how tasks are scheduled.
    """

    command: str = "verify"
    model: str = "heisenberg3"
    eps: float = 0.25
    eps_grid: tuple = cmp.DEFAULT_EPS_GRID + (0.0,)
    base: tuple | None = None
    point_from: tuple | None = None
    point_to: tuple | None = None
    velocity: tuple | None = None
    t: float = 1.0
    suite: str = "all"
    samples: int = 16
    seed: int = 0
    seed_count: int = 64
    case: str = "B"
    length: float = 1.0
    lam: float = 0.5
    center: tuple | None = None
    region: tuple | None = None
    t_grid: tuple = (0.1, 0.3, 0.5, 0.7, 0.9)
    mu_grid: tuple = (-4.0, -1.0, -0.25, 0.0, 0.25, 1.0, 4.0)
    r_grid: tuple = tuple(float(v) for v in np.linspace(0.05, 2.5, 50))
    out: str | None = None
    format: str | None = None
    tolerance: float | None = None
    workers: int | None = None

    def echo(self) -> dict:
        """Serializable config without scheduling knobs."""
        d = asdict(self)
        d.pop("workers")
        d["format_version"] = FORMAT_VERSION
        return d


_TUPLE_FIELDS = {"eps_grid", "base", "point_from", "point_to", "velocity", "center", "region",
                 "t_grid", "mu_grid", "r_grid"}
_FLOAT_FIELDS = {"eps", "t", "length", "lam", "tolerance"}
_INT_FIELDS = {"samples", "seed", "seed_count", "workers"}


def _floats(v, name):
    if isinstance(v, str):
        v = [s for s in v.replace(" ", "").split(",") if s]
    try:
        return tuple(float(u) for u in v)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: expected a list of numbers, got {v!r}") from exc


def _coerce(name, v):
    if v is None:
        return None
    if name in _TUPLE_FIELDS:
        return _floats(v, name)
    try:
        if name in _FLOAT_FIELDS:
            return float(v)
        if name in _INT_FIELDS:
            if isinstance(v, float) and not v.is_integer():
                raise ValueError
            return int(v)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: bad value {v!r}") from exc
    if not isinstance(v, str):
        raise ConfigError(f"{name}: expected a string, got {v!r}")
    return v


def make_config(values: dict, base: RunConfig | None = None) -> RunConfig:
    """Validate ``values`` against the schema and overlay them on ``base``."""
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(values) - known - {"format_version"})
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    clean = {k: _coerce(k, v) for k, v in values.items() if k in known}
    cfg = replace(base or RunConfig(), **clean)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    if cfg.command not in COMMANDS:
        raise ConfigError(f"command must be one of {COMMANDS}")
    if cfg.format is not None and cfg.format not in reports.FORMATS:
        raise ConfigError(f"format must be one of {reports.FORMATS}")
    if cfg.samples < 1:
        raise ConfigError("samples must be positive")
    if cfg.eps < 0 or any(e < 0 for e in cfg.eps_grid):
        raise ConfigError("eps must be nonnegative")
    if cfg.tolerance is not None and not cfg.tolerance >= 0:
        raise ConfigError("tolerance must be nonnegative")
    if cfg.workers is not None and cfg.workers < 1:
        raise ConfigError("workers must be positive")
    try:
        cmp.expand_suites(cfg.suite)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    for name in cfg.model.split(","):
        try:
            model_from_name(name)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def load_config(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return doc


# worker pool -------------------------------------------------------------------

def worker_count(cfg: RunConfig) -> int:
    if cfg.workers is not None:
        return cfg.workers
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


@contextmanager
def mapper_for(workers: int):
    """Order-preserving ``map``; a process pool when ``workers > 1``."""
    if workers <= 1:
        yield map
        return
    with ProcessPoolExecutor(max_workers=workers) as ex:
        yield lambda f, it: list(ex.map(f, it, chunksize=1))


# helpers -----------------------------------------------------------------------

def _point(M, v, name):
    if v is None:
        return np.zeros(M.dim)
    if len(v) != M.dim:
        raise ConfigError(f"{name} needs {M.dim} coordinates")
    return np.asarray(v, float)


def _write(text: str, out):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _rows_text(rows, columns, cfg: RunConfig, kind: str) -> str:
    fmt = cfg.format or (reports.format_from_path(cfg.out) if cfg.out else "csv")
    return reports.render(rows, columns, fmt, kind, cfg.echo())


# subcommands -------------------------------------------------------------------

def cmd_kernels(cfg: RunConfig) -> int:
    cols = ("mu", "r", "phi", "dphi", "psi", "dpsi", "ddpsi", "PsiCap")
    grid = kernels.kernel_grid(cfg.mu_grid, cfg.r_grid)
    rows = [dict(zip(cols, map(float, row))) for row in grid]
    _write(_rows_text(rows, cols, cfg, "kernels"), cfg.out)
    return EXIT_OK


def cmd_dist(cfg: RunConfig) -> int:
    M = model_from_name(cfg.model)
    B = M.backend
    x0 = B.from_chart(_point(M, cfg.point_from, "from"))
    x1 = B.from_chart(_point(M, cfg.point_to, "to"))
    res = geo.distance(M, cfg.eps, x0, x1, seed_count=cfg.seed_count)
    print(f"{res.length:.6f}")
    print(f"lambda {res.lam:.6f}")
    if cfg.out:
        doc = {"format_version": FORMAT_VERSION, "config": cfg.echo(), "length": res.length,
               "lambda": res.lam, "diagnostics": res.diagnostics}
        Path(cfg.out).write_text(json.dumps(reports._json_value(doc), sort_keys=True,
                                            indent=1) + "\n")
    return EXIT_OK


def cmd_exp(cfg: RunConfig) -> int:
    M = model_from_name(cfg.model)
    x0 = M.backend.from_chart(_point(M, cfg.point_from, "from"))
    if cfg.velocity is None or len(cfg.velocity) != M.dim:
        raise ConfigError(f"velocity needs {M.dim} frame coefficients")
    v = np.asarray(cfg.velocity, float)
    samples = max(2, cfg.samples)
    if cfg.eps > 0:
        arc = geo.exp_eps(M, cfg.eps, x0, v, cfg.t, samples=samples)
    else:
        arc = geo.sr_exp(M, x0, v[:-1], v[-1], cfg.t, samples=samples)
    cols = ("s", *[f"x{i}" for i in range(M.dim)], *[f"v{i}" for i in range(M.dim)], "lam", "p")
    rows = [dict(zip(cols, map(float, row))) for row in arc.csv_rows()]
    _write(_rows_text(rows, cols, cfg, "arc"), cfg.out)
    return EXIT_OK


def case_arc(M, eps: float, case: str, length: float, lam: float = 0.5):
    """Unit arc from the identity suited to a closed-form Jacobi case, with ``v0``."""
    m = M.n // 2
    a = np.zeros(M.n)
    v0 = np.zeros(M.dim)
    if case == "A":
        if m < 2:
            raise jac.WindowError("case A needs a horizontal vector orthogonal to g'_H "
                                  "and J g'_H, which exists only for n >= 4")
        a[0] = math.sqrt(lam)
        b = math.sqrt(eps * (1.0 - lam))
        v0[1] = 1.0
    elif case == "B":
        a[0] = 1.0
        b = 0.0
    else:
        b = math.sqrt(eps)
        v0[0] = 1.0
    arc = jac.unit_arc(M, eps, np.append(a, b), length)
    return arc, (None if case == "B" else v0)


def cmd_jacobi(cfg: RunConfig) -> int:
    M = model_from_name(cfg.model)
    case = cfg.case.upper()
    arc, v0 = case_arc(M, cfg.eps, case, cfg.length, cfg.lam)
    cf = jac.closed_form(case, arc, v0=v0)
    Y0, dY0 = cf.evaluate(0.0)
    sol = jac.jacobi_propagate(arc, Y0, dY0, samples=max(2, cfg.samples))
    Yc, _ = cf.evaluate(sol.t)
    Yo = sol.Y[:, :, 0]
    d = M.dim
    cols = ("t", *[f"closed{i}" for i in range(d)], *[f"ode{i}" for i in range(d)], "error")
    rows = []
    for t, yc, yo in zip(sol.t, Yc, Yo):
        rows.append(dict(zip(cols, [float(t), *map(float, yc), *map(float, yo),
                                    float(np.max(np.abs(yc - yo)))])))
    _write(_rows_text(rows, cols, cfg, "jacobi"), cfg.out)
    return EXIT_OK


def cmd_hessian(cfg: RunConfig) -> int:
    M = model_from_name(cfg.model)
    B = M.backend
    x0 = B.from_chart(_point(M, cfg.point_from, "from"))
    if cfg.point_to is None:
        raise ConfigError("hessian needs --to")
    x = B.from_chart(_point(M, cfg.point_to, "to"))
    if cfg.eps > 0:
        m = cmp.measure(M, cfg.eps, x0, x, seed_count=cfg.seed_count)
    else:
        m = cmp.sr_hessian(M, x0, x, seed_count=cfg.seed_count)
    if m.matrix is None:
        print(f"no hessian: {', '.join(m.flags)}")
        return EXIT_VIOLATION
    n = M.n
    H = m.matrix
    print(f"r {m.r:.12g}")
    print(f"lambda {m.lam:.12g}")
    for row in H:
        print(" ".join(reports.fmt_float(v) for v in row))
    print(f"lap_h {np.trace(H[:n, :n]):.12g}")
    print(f"lap_v {H[-1, -1]:.12g}")
    if m.flags:
        print("flags " + ",".join(m.flags))
    if cfg.out:
        doc = {"format_version": FORMAT_VERSION, "config": cfg.echo(), "r": m.r, "lambda": m.lam,
               "matrix": H.tolist(), "lap_h": float(np.trace(H[:n, :n])),
               "lap_v": float(H[-1, -1]), "flags": list(m.flags)}
        Path(cfg.out).write_text(json.dumps(reports._json_value(doc), sort_keys=True,
                                            indent=1) + "\n")
    return EXIT_OK


def _finish(records, cfg: RunConfig, suites) -> int:
    summary = reports.suite_summary(records, suites, cfg.tolerance)
    for line in reports.summary_lines(summary):
        print(line)
    if cfg.out:
        reports.emit_report(records, cfg.out, cfg.format, cfg.echo(), suites, cfg.tolerance)
    bad = sum(v[2] for v in summary.values())
    return EXIT_OK if bad == 0 else EXIT_VIOLATION


def cmd_verify(cfg: RunConfig) -> int:
    suites = cmp.expand_suites(cfg.suite)
    spec = cmp.SampleSpec(count=cfg.samples, seed=cfg.seed, seed_count=cfg.seed_count)
    records = []
    with mapper_for(worker_count(cfg)) as mapper:
        for name in cfg.model.split(","):
            M = model_from_name(name)
            if cfg.base is not None:
                cmp._check_base(M, M.backend.from_chart(np.asarray(cfg.base, float)))
            records += cmp.run_suites(M, suites, cfg.eps_grid, spec, mapper=mapper)
    return _finish(cmp.sort_records(records), cfg, suites)


def cmd_diameter(cfg: RunConfig) -> int:
    M = model_from_name(cfg.model)
    scan = cmp.diameter_scan(M, count=cfg.samples, seed=cfg.seed, seed_count=cfg.seed_count)
    print(f"diameter {scan.estimate:.6f}")
    for e, d in sorted(scan.eps_estimates.items(), reverse=True):
        print(f"diameter eps={e:g} {d:.6f}")
    return _finish(scan.records, cfg, ("diameter",))


def cmd_mcp(cfg: RunConfig) -> int:
    M = model_from_name(cfg.model)
    regions = None
    if cfg.center is not None or cfg.region is not None:
        if cfg.center is None or cfg.region is None:
            raise ConfigError("--center and --region go together")
        regions = [mcp.Region(tuple(_point(M, cfg.center, "center")),
                              tuple(_point(M, cfg.region, "region")))]
    with mapper_for(worker_count(cfg)) as mapper:
        res = mcp.mcp_exponent_probe(M, cfg.eps, regions, cfg.t_grid, seed=cfg.seed,
                                     mapper=mapper, per_stratum=cfg.samples,
                                     seed_count=cfg.seed_count)
    summary = res.summary()
    status = "PASS" if res.violations == 0 and not res.starved else "FAIL"
    print(f"{status} mcp: worst exponent {res.worst_exponent:.6f} (N={res.N}), "
          f"{res.violations} violations, {len(res.probes)} probes, {len(res.starved)} starved")
    if cfg.out:
        fmt = cfg.format or reports.format_from_path(cfg.out)
        rows = [p.as_dict() for p in res.probes]
        Path(cfg.out).write_text(reports.render(rows, reports.PROBE_COLUMNS, fmt, "mcp_probe",
                                                cfg.echo()))
        doc = {"format_version": FORMAT_VERSION, "config": cfg.echo(), **summary,
               "starved_regions": [{"center": list(r.center), "half_widths": list(r.half_widths),
                                    "error": e} for r, e in res.starved]}
        Path(reports.suite_path(cfg.out, "summary")).with_suffix(".json").write_text(
            json.dumps(reports._json_value(doc), sort_keys=True, indent=1) + "\n")
    return EXIT_OK if status == "PASS" else EXIT_VIOLATION


HANDLERS = {"kernels": cmd_kernels, "dist": cmd_dist, "exp": cmd_exp, "jacobi": cmd_jacobi,
            "hessian": cmd_hessian, "verify": cmd_verify, "diameter": cmd_diameter,
            "mcp": cmd_mcp}


def run(cfg: RunConfig) -> int:
    """Dispatch a validated config; returns the exit status."""
    return HANDLERS[cfg.command](cfg)


# argument parsing --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sasaki-lab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    S = argparse.SUPPRESS

    def common(sp, *extra):
        sp.add_argument("--config", help="JSON config file; flags override it")
        sp.add_argument("--model", default=S)
        sp.add_argument("--seed-count", dest="seed_count", type=int, default=S,
                        help="shooting seeds per BVP")
        sp.add_argument("--out", default=S)
        sp.add_argument("--format", choices=reports.FORMATS, default=S)
        sp.add_argument("--workers", type=int, default=S,
                        help=f"worker processes (default ${WORKERS_ENV} or 1)")
        for flag in extra:
            opts = {"dest": flag.lstrip("-").replace("-", "_"), "default": S}
            sp.add_argument(flag, **opts)
        return sp

    common(sub.add_parser("kernels", help="dump a kernel grid"), "--mu-grid", "--r-grid")
    common(sub.add_parser("dist", help="distance between two chart points"),
           "--from", "--to", "--eps")
    common(sub.add_parser("exp", help="geodesic samples from an initial velocity"),
           "--from", "--velocity", "--eps", "--t", "--samples")
    common(sub.add_parser("jacobi", help="closed-form Jacobi field against the ODE"),
           "--eps", "--case", "--length", "--lam", "--samples")
    common(sub.add_parser("hessian", help="Hessian of the distance at a point"),
           "--from", "--to", "--eps")
    v = common(sub.add_parser("verify", help="comparison suites"),
               "--eps-grid", "--base", "--samples", "--seed", "--tolerance")
    v.add_argument("--suite", default=S, choices=cmp.SUITES + ("all",))
    common(sub.add_parser("diameter", help="Hopf diameter scan"), "--samples", "--seed")
    common(sub.add_parser("mcp", help="measure contraction probes"),
           "--eps", "--center", "--region", "--t-grid", "--samples", "--seed")
    return p


_RENAMES = {"from": "point_from", "to": "point_to"}


def config_from_args(argv=None) -> RunConfig:
    ns = vars(build_parser().parse_args(argv))
    path = ns.pop("config", None)
    values = load_config(path) if path else {}
    values.pop("command", None)
    flags = {_RENAMES.get(k, k): v for k, v in ns.items()}
    values.update(flags)
    if values["command"] == "mcp" and "eps" not in flags and "eps" not in values:
        values["eps"] = 0.0
    if values["command"] == "diameter" and "model" not in values:
        values["model"] = "hopf3"
    if values["command"] == "diameter" and "samples" not in values:
        values["samples"] = 64
    if values["command"] == "exp" and "samples" not in values:
        values["samples"] = 65
    if values["command"] == "jacobi" and "samples" not in values:
        values["samples"] = 41
    if values["command"] == "mcp" and "samples" not in values:
        values["samples"] = 4
    return make_config(values)


def main(argv=None) -> int:
    try:
        cfg = config_from_args(argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # engine failures are reported, not raised
        print(f"error: {cfg.command} on {cfg.model}: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return EXIT_ENGINE


if __name__ == "__main__":
    sys.exit(main())
