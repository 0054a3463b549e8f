"""Command-line entry point.

Subcommands::

    bimot run      --config fig2 [--out DIR] [--seed N] [--jobs N] [--mode MODE]
    bimot sweep    --config my.json ...      (mode forced to 'sweep')
    bimot presets list
    bimot validate --config my.json

Exit codes: 0 ok, 2 configuration error, 3 physics diagnostic (dark
manifold), 4 numerical failure. Errors are reported on stderr as one JSON
record.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from typing import Optional, Sequence

import numpy as np
from scipy.constants import hbar

from .config import (BUILTIN_CONFIGS, MODES, ConfigError, RunConfig, load_document, parse_cases)
from .scheme import PRESETS, SchemeError, build_preset, validate
from .rates import rate_matrix
from .steady import DarkManifoldError, NumericalFailure, force, steady_populations
from .sweep import GridPointError, sweep

__all__ = ["main", "run", "write_csv", "EXIT_OK", "EXIT_CONFIG", "EXIT_PHYSICS", "EXIT_NUMERICAL"]

EXIT_OK, EXIT_CONFIG, EXIT_PHYSICS, EXIT_NUMERICAL = 0, 2, 3, 4
log = logging.getLogger("bimot")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _header(cfg: RunConfig, columns: Sequence[str], notes: Sequence[str]) -> list[str]:
    body = {k: v for k, v in cfg.document.items() if k not in ("output", "jobs")}
    lines = [
        f"# bimot force table: {cfg.name}",
        f"# columns: {', '.join(columns)}",
        "# sign convention: positive acceleration points along +z; restoring maps have"
        " a_z < 0 for z > 0 (stiffness kappa > 0) and a_z < 0 for v_z > 0 (damping alpha > 0)",
        *(f"# {n}" for n in notes),
        f"# config_hash: {cfg.hash}",
        f"# seed: {cfg.seed if cfg.seed is not None else 'none'}",
        "# config: " + json.dumps(body, sort_keys=True, separators=(",", ":"), allow_nan=False),
    ]
    return lines


def write_csv(path: str, cfg: RunConfig, columns, rows, notes=()) -> None:
    lines = _header(cfg, columns, notes)
    lines.append(",".join(columns))
    lines.extend(",".join(_fmt(x) for x in row) for row in rows)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _table(cfg: RunConfig):
    """Columns and rows for one configuration."""
    system = cfg.system
    unit = hbar * system.wavenumber * system.gamma / system.mass  # acceleration of hbar k Gamma
    notes = [f"acceleration unit hbar*k*Gamma/m = {_fmt(unit)} m/s^2",
             f"method: {cfg.method}"]
    if cfg.mode == "steady-3d-point":
        r, v = cfg.point()
        rm = rate_matrix(system, r, v)
        F = force(rm, steady_populations(rm)).F
        a = F / system.mass
        cols = ["x_m", "y_m", "z_m", "vx_m_s", "vy_m_s", "vz_m_s", "ax_m_s2", "ay_m_s2", "az_m_s2"]
        return cols, [list(r) + list(v) + list(a)], notes
    kmc = cfg.kmc
    fmap = sweep(system, cfg.axis, cfg.grid(), cfg.method, n_traj=kmc.get("n_traj", 1000),
                 T=kmc.get("T", "auto"), seed=kmc.get("seed", 0), relax=kmc.get("relax", "propagate"),
                 jobs=cfg.jobs, provenance=cfg.hash)
    stochastic = fmap.sigma is not None
    tail = ["az_m_s2"] + (["sigma_m_s2"] if stochastic else []) + ["az_hbar_k_gamma"]
    if fmap.axis == "full_grid":
        z, v = fmap.grid
        cols = ["z_m", "vz_m_s"] + tail
        rows = []
        for i, zz in enumerate(z):
            for j, vv in enumerate(v):
                row = [zz, vv, fmap.values[i, j]]
                if stochastic:
                    row.append(fmap.sigma[i, j])
                rows.append(row + [fmap.values[i, j] / unit])
        return cols, rows, notes
    cols = ["z_m" if fmap.axis == "z_at_v0" else "vz_m_s"] + tail
    rows = []
    for n, x in enumerate(fmap.grid):
        row = [x, fmap.values[n]]
        if stochastic:
            row.append(fmap.sigma[n])
        rows.append(row + [fmap.values[n] / unit])
    return cols, rows, notes


def _out_paths(cases: list[RunConfig], out: Optional[str], doc_name: str) -> list[str]:
    if len(cases) == 1:
        target = out or cases[0].output or f"{cases[0].name}.csv"
        if os.path.isdir(target):
            target = os.path.join(target, f"{cases[0].name}.csv")
        return [target]
    directory = out or doc_name
    os.makedirs(directory, exist_ok=True)
    return [os.path.join(directory, f"{c.name}.csv") for c in cases]


def run(cases: list[RunConfig], out: Optional[str] = None, doc_name: str = "run") -> list[str]:
    """Evaluate every case and write one CSV each; returns the paths."""
    paths = _out_paths(cases, out, doc_name)
    for cfg, path in zip(cases, paths):
        cols, rows, notes = _table(cfg)
        parent = os.path.dirname(path)
        if parent:
            os.makedirs(parent, exist_ok=True)
        write_csv(path, cfg, cols, rows, notes)
        log.info("wrote %s", path)
    return paths


def _error(kind: str, exc: BaseException, code: int, **extra) -> int:
    record = {"error": kind, "message": str(exc), "exit_code": code}
    record.update(extra)
    print(json.dumps(record, default=str), file=sys.stderr)
    return code


def _classify(exc: BaseException):
    point = None
    if isinstance(exc, GridPointError):
        point, exc = exc.point, exc.cause
    if isinstance(exc, DarkManifoldError):
        extra = {"sublevels": [s.label for s in exc.sublevels]}
        if point is not None:
            extra["grid_point"] = point
        return "dark_manifold", exc, EXIT_PHYSICS, extra
    if isinstance(exc, (NumericalFailure, np.linalg.LinAlgError, FloatingPointError)):
        return "numerical_failure", exc, EXIT_NUMERICAL, {} if point is None else {"grid_point": point}
    if isinstance(exc, (ConfigError, SchemeError)):
        return "config_error", exc, EXIT_CONFIG, {"path": getattr(exc, "path", "")}
    return None


def _load(args, mode_override=None):
    doc = load_document(args.config)
    if mode_override or getattr(args, "mode", None) or getattr(args, "seed", None) is not None \
            or getattr(args, "jobs", None):
        doc = _apply_overrides(doc, mode_override or getattr(args, "mode", None),
                               getattr(args, "seed", None), getattr(args, "jobs", None))
    return doc, parse_cases(doc)


def _apply_overrides(doc, mode, seed, jobs):
    doc = dict(doc)
    targets = [doc] + list(doc.get("cases", []))
    for d in targets:
        if mode is not None and (d is doc or "mode" in d):
            d["mode"] = mode
        if seed is not None and (d is doc or "kmc" in d):
            d["kmc"] = dict(d.get("kmc", {}), seed=seed)
        if jobs is not None and (d is doc or "jobs" in d):
            d["jobs"] = jobs
    return doc


def _cmd_run(args, mode_override=None) -> int:
    try:
        doc, cases = _load(args, mode_override)
    except (ConfigError, SchemeError) as exc:
        return _error("config_error", exc, EXIT_CONFIG, path=getattr(exc, "path", ""))
    except (json.JSONDecodeError, ValueError) as exc:
        return _error("config_error", exc, EXIT_CONFIG)
    try:
        paths = run(cases, args.out, doc.get("name", "run"))
    except Exception as exc:  # map solver errors to exit codes
        hit = _classify(exc)
        if hit is None:
            raise
        kind, cause, code, extra = hit
        return _error(kind, cause, code, **extra)
    for p in paths:
        print(p)
    return EXIT_OK


def _cmd_presets(args) -> int:
    print("level schemes:")
    for name in PRESETS:
        sch = build_preset(name)
        print(f"  {name:22s} {sch.n} sublevels, links: {', '.join(l.name for l in sch.links)}")
    print("run configs:")
    for name in BUILTIN_CONFIGS:
        print(f"  {name}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    try:
        _, cases = _load(args)
    except (ConfigError, SchemeError) as exc:
        return _error("config_error", exc, EXIT_CONFIG, path=getattr(exc, "path", ""))
    except ValueError as exc:
        return _error("config_error", exc, EXIT_CONFIG)
    for cfg in cases:
        problems = validate(cfg.system.scheme)
        status = "ok" if not problems else "; ".join(problems)
        print(f"{cfg.name}: {status} (hash {cfg.hash[:12]})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bimot", description="Rate-equation and Monte Carlo MOT force maps.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, mode=True):
        p.add_argument("--config", required=True, help="JSON file, CSV written by bimot, or a built-in name")
        p.add_argument("--out", help="output file (single case) or directory")
        p.add_argument("--seed", type=int, help="override the Monte Carlo seed")
        p.add_argument("--jobs", type=int, help="worker processes")
        if mode:
            p.add_argument("--mode", choices=MODES, help="override the run mode")

    common(sub.add_parser("run", help="run every case of a config"))
    common(sub.add_parser("sweep", help="force-map sweep (mode 'sweep')"), mode=False)
    pp = sub.add_parser("presets", help="list built-in schemes and configs")
    pp.add_argument("action", choices=["list"])
    vp = sub.add_parser("validate", help="check a config and its level scheme")
    vp.add_argument("--config", required=True)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "sweep":
        return _cmd_run(args, mode_override="sweep")
    if args.command == "presets":
        return _cmd_presets(args)
    return _cmd_validate(args)


if __name__ == "__main__":
    sys.exit(main())
