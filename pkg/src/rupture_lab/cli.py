"""Command-line entry point.

Subcommands: make-exact, solve, evolve, density, stratify, minkowski,
displacement, cover, verify.  Exit codes: 0 success, 1 failed
verification, 2 configuration error, 3 numeric failure.

All randomized routines take --seed (env RUPTURE_LAB_SEED overrides) and
identical (config, seed, inputs) produce byte-identical artifacts.
--threads caps internal parallelism; the reference implementation runs
single-threaded, so it only validates the value.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import density as density_mod
from . import exact, gmt, solver, symmetry
from .field import BallRegion, ScalarField, centered_grid, load_field, save_field

SCHEMA_VERSION = 1

_SOLVER_KEYS = {"p", "delta_schedule", "dt_safety", "max_steps", "tol_residual", "boundary"}


class ConfigError(Exception):
    pass


def emit_json(path: str | Path, payload: dict) -> None:
    doc = {"schema_version": SCHEMA_VERSION}
    doc.update(payload)
    Path(path).write_text(json.dumps(_plain(doc), sort_keys=True, indent=2) + "\n")


def emit_csv(path: str | Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_cell(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def _parse_point(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.split(","))


def _parse_radii(text: str) -> np.ndarray:
    """min:max:count, geometric ladder."""
    try:
        lo, hi, cnt = text.split(":")
        lo, hi, cnt = float(lo), float(hi), int(cnt)
    except ValueError as e:
        raise ConfigError(f"bad radii spec {text!r}, want min:max:count") from e
    if not (0 < lo < hi) or cnt < 1:
        raise ConfigError("radii spec needs 0 < min < max and count >= 1")
    return np.geomspace(lo, hi, cnt)


def _load_cloud(path: str) -> gmt.AtomicMeasure:
    rows = [r for r in Path(path).read_text().strip().splitlines() if r.strip()]
    if rows and any(c.isalpha() for c in rows[0]):
        rows = rows[1:]  # header
    data = np.array([[float(c) for c in r.split(",")] for r in rows])
    if data.ndim != 2 or data.shape[1] < 2:
        raise ConfigError("cloud CSV needs n coordinate columns plus a weight column")
    return gmt.AtomicMeasure(atoms=data[:, :-1], weights=data[:, -1])


def _solver_config(path: str) -> solver.SolverConfig:
    doc = json.loads(Path(path).read_text())
    unknown = set(doc) - _SOLVER_KEYS
    if unknown:
        raise ConfigError(f"unknown solver config keys: {sorted(unknown)}")
    if "p" not in doc or "delta_schedule" not in doc:
        raise ConfigError("solver config requires 'p' and 'delta_schedule'")
    kwargs = dict(doc)
    kwargs["delta_schedule"] = tuple(float(d) for d in kwargs["delta_schedule"])
    return solver.SolverConfig(**kwargs)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _cmd_make_exact(args) -> int:
    grid = centered_grid(args.n, args.shape, 2.0 * args.halfwidth / args.shape)
    if args.kind in ("radial", "cylinder"):
        axis = None
        if args.kind == "cylinder":
            axis = np.zeros((args.n, 1))
            axis[args.axis, 0] = 1.0
        sol = exact.HomogeneousSolution(dim=args.n, p=args.p, axis_subspace=axis)
        fld = exact.homogeneous_field(sol, grid)
    else:  # ode
        prof = exact.ode_profile(args.p, args.eps, s_max=args.eps + 4.0 * args.halfwidth)
        x1 = grid.coords(0)
        vals1 = prof.u(np.abs(x1))
        shape = [1] * args.n
        shape[0] = x1.size
        vals = np.broadcast_to(vals1.reshape(shape), grid.shape).copy()
        fld = ScalarField(grid, vals, name=f"ode(p={args.p},eps={args.eps})")
    save_field(fld, args.out)
    return 0


def _cmd_solve(args) -> int:
    cfg = _solver_config(args.config)
    init = load_field(args.init)
    f = load_field(args.forcing) if args.forcing else None
    res = (solver.cascade_solve if args.cascade else solver.solve_elliptic)(f, cfg, init)
    save_field(res.u, args.out)
    if args.histories:
        emit_csv(
            args.histories,
            ["step", "residual", "energy"],
            [
                (i, res.residual_history[i] if i < len(res.residual_history) else "",
                 res.energy_history[i] if i < len(res.energy_history) else "")
                for i in range(max(len(res.residual_history), len(res.energy_history)))
            ],
        )
    emit_json(
        Path(args.out).with_suffix(".json"),
        {
            "converged": bool(res.converged),
            "steps": res.steps,
            "active_rupture_cells": res.active_rupture_cells,
            "final_residual": float(res.residual_history[-1]) if len(res.residual_history) else None,
        },
    )
    return 0 if res.converged else 3


def _cmd_evolve(args) -> int:
    cfg = _solver_config(args.config)
    u0 = load_field(args.init)
    times = [float(t) for t in args.times.split(",")] if args.times else None
    snaps = solver.evolve_parabolic(u0, args.T, cfg, times=times)
    rows = []
    for i, (t, fld) in enumerate(snaps):
        path = f"{args.out_prefix}_{i:03d}.rfld"
        save_field(fld, path)
        rows.append((i, t, path))
    emit_csv(f"{args.out_prefix}_times.csv", ["index", "time", "path"], rows)
    return 0


def _cmd_density(args) -> int:
    u = load_field(args.field)
    f = load_field(args.forcing) if args.forcing else None
    radii = _parse_radii(args.radii)
    prof = density_mod.density_profile(u, f, _parse_point(args.point), radii, args.p)
    rows = []
    for v in prof.values:
        try:
            w = density_mod.pinch_W(u, f, v.x, v.r, v.p)
        except Exception:
            w = float("nan")
        rows.append(
            (v.r, v.D, v.D_f, v.F, v.H,
             v.I_f if v.I_f is not None else "nan", v.theta, v.theta_f, w)
        )
    emit_csv(args.out, ["r", "D", "D_f", "F", "H", "I_f", "theta", "theta_f", "W_f"], rows)
    emit_json(
        Path(args.out).with_suffix(".json"),
        {
            "monotone_defect": prof.monotone_defect,
            "truncated": prof.truncated,
            "point": list(_parse_point(args.point)),
            "p": args.p,
            "radii": prof.radii,
        },
    )
    return 0


def _cmd_stratify(args) -> int:
    u = load_field(args.field)
    g = u.grid
    f = load_field(args.forcing) if args.forcing else None
    rng = np.random.default_rng(args.seed)
    lo, hi = g.box_bounds()
    margin = 10.0 * args.rmax if args.rmax else 0.25 * float(np.min(hi - lo))
    pts = []
    for _ in range(args.samples):
        pts.append([rng.uniform(lo[a] + margin, hi[a] - margin) for a in range(g.dim)])
    report = symmetry.quantitative_stratum(
        u, f, args.p, args.k, args.epsilon, args.rmin,
        np.array(pts), r_max=args.rmax, seed=args.seed,
    )
    emit_csv(
        args.out,
        [f"x{a}" for a in range(g.dim)] + ["flagged", "best_defect"],
        [tuple(p) + (int(fl), bd) for p, fl, bd in zip(report.points, report.flagged, report.best_defect)],
    )
    emit_json(
        Path(args.out).with_suffix(".json"),
        {
            "epsilon": report.epsilon,
            "k": report.k,
            "r_min": report.r_min,
            "scales": report.scales,
            "flagged_count": report.count,
            "samples": len(report.points),
            "seed": args.seed,
        },
    )
    return 0


def _cmd_minkowski(args) -> int:
    u = load_field(args.field)
    mask = u.values < args.threshold
    radii = _parse_radii(args.radii)
    rep = gmt.minkowski_content(u.grid, mask, args.k, radii)
    emit_csv(
        args.out,
        ["r", "neighborhood_measure", "content"],
        zip(rep.radii, rep.neighborhood_measures, rep.contents),
    )
    emit_json(
        Path(args.out).with_suffix(".json"),
        {"dimension": rep.dimension, "k": args.k, "threshold": args.threshold},
    )
    return 0


def _cmd_displacement(args) -> int:
    mu = _load_cloud(args.cloud)
    x = _parse_point(args.x)
    val = gmt.displacement(mu, x, args.r, args.k)
    L, m_value = (None, None)
    if mu.in_ball(x, args.r).any():
        L, m_value = gmt.best_fit_affine(mu, (x, args.r), args.k)
    emit_json(
        args.out,
        {
            "displacement": val,
            "m_value": m_value,
            "k": args.k,
            "r": args.r,
            "x": list(x),
            "base": None if L is None else L.base,
            "frame": None if L is None else L.frame,
        },
    )
    return 0


def _cmd_cover(args) -> int:
    mu = _load_cloud(args.cloud)
    cover = gmt.vitali_cover(mu.atoms, args.radius)
    emit_csv(
        args.out,
        [f"x{a}" for a in range(mu.dim)] + ["radius"],
        [tuple(c) + (r,) for c, r in zip(cover.centers, cover.radii)],
    )
    emit_json(
        Path(args.out).with_suffix(".json"),
        {
            "kept": cover.count,
            "content_stat": cover.content_stat(args.k, args.R),
            "k": args.k,
            "R": args.R,
        },
    )
    return 0


def _cmd_verify(args) -> int:
    from .verify import run_suite

    results = run_suite(args.suite, seed=args.seed)
    ok = True
    for name, passed, detail in results:
        print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
        ok &= passed
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rupture-lab")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    sub = ap.add_subparsers(dest="command", required=True)

    m = sub.add_parser("make-exact", help="emit reference solutions as RFLD")
    m.add_argument("--n", type=int, required=True)
    m.add_argument("--p", type=float, default=3.0)
    m.add_argument("--kind", choices=["radial", "cylinder", "ode"], default="radial")
    m.add_argument("--eps", type=float, default=0.1)
    m.add_argument("--axis", type=int, default=-1, help="invariant axis for cylinder")
    m.add_argument("--shape", type=int, default=512)
    m.add_argument("--halfwidth", type=float, default=1.0)
    m.add_argument("--out", required=True)
    m.set_defaults(fn=_cmd_make_exact)

    s = sub.add_parser("solve", help="elliptic gradient-flow solve")
    s.add_argument("--config", required=True)
    s.add_argument("--init", required=True)
    s.add_argument("--forcing")
    s.add_argument("--cascade", action="store_true")
    s.add_argument("--histories")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=_cmd_solve)

    e = sub.add_parser("evolve", help="parabolic run with snapshots")
    e.add_argument("--config", required=True)
    e.add_argument("--init", required=True)
    e.add_argument("--T", type=float, required=True)
    e.add_argument("--times")
    e.add_argument("--out-prefix", required=True)
    e.set_defaults(fn=_cmd_evolve)

    d = sub.add_parser("density", help="functional profile over a radius ladder")
    d.add_argument("--field", required=True)
    d.add_argument("--forcing")
    d.add_argument("--point", required=True)
    d.add_argument("--radii", required=True, help="min:max:count geometric")
    d.add_argument("--p", type=float, required=True)
    d.add_argument("--out", required=True)
    d.set_defaults(fn=_cmd_density)

    st = sub.add_parser("stratify", help="quantitative stratum scan")
    st.add_argument("--field", required=True)
    st.add_argument("--forcing")
    st.add_argument("--p", type=float, required=True)
    st.add_argument("--k", type=int, required=True)
    st.add_argument("--epsilon", type=float, required=True)
    st.add_argument("--rmin", type=float, required=True)
    st.add_argument("--rmax", type=float)
    st.add_argument("--samples", type=int, default=64)
    st.add_argument("--out", required=True)
    st.set_defaults(fn=_cmd_stratify)

    mk = sub.add_parser("minkowski", help="Minkowski content of a sublevel mask")
    mk.add_argument("--field", required=True)
    mk.add_argument("--threshold", type=float, required=True)
    mk.add_argument("--k", type=int, required=True)
    mk.add_argument("--radii", required=True)
    mk.add_argument("--out", required=True)
    mk.set_defaults(fn=_cmd_minkowski)

    dp = sub.add_parser("displacement", help="best-plane displacement of a cloud")
    dp.add_argument("--cloud", required=True)
    dp.add_argument("--x", required=True)
    dp.add_argument("--r", type=float, required=True)
    dp.add_argument("--k", type=int, required=True)
    dp.add_argument("--out", required=True)
    dp.set_defaults(fn=_cmd_displacement)

    cv = sub.add_parser("cover", help="greedy Vitali cover of a cloud")
    cv.add_argument("--cloud", required=True)
    cv.add_argument("--radius", type=float, required=True)
    cv.add_argument("--k", type=int, default=0)
    cv.add_argument("--R", type=float, default=1.0)
    cv.add_argument("--out", required=True)
    cv.set_defaults(fn=_cmd_cover)

    v = sub.add_parser("verify", help="run the built-in property suite")
    v.add_argument("--suite", choices=["quick", "full"], default="quick")
    v.set_defaults(fn=_cmd_verify)
    return ap


def run(argv: list[str]) -> int:
    ap = _build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    env_seed = os.environ.get("RUPTURE_LAB_SEED")
    if env_seed is not None:
        args.seed = int(env_seed)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.fn(args)
    except (ConfigError, FileNotFoundError, ValueError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ArithmeticError, FloatingPointError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(run(sys.argv[1:]))
