"""``inflap`` command line: solve, study, transport, report.

Exit status: 0 success, 1 usage/config/IO error, 2 solver did not converge,
3 a verdict check failed.  Errors print one line on stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import io
from .asymptotics import SCHEMA_VERSION, SweepResult, build_verdict, run_asymptotic_study
from .config import DEFAULT_OUT, ENV_OUT, RunConfig, load_config
from .eigensolver import check_exponent, continuation_sweep
from .exceptions import InflapError, InfeasibleMarginals
from .geometry import build_domain, distance_to_boundary
from .measures import DiscreteMeasure, derived_measures, primal_dual_values
from .transport import (
    MAX_COST_ENTRIES, closed_form_cost, solve_discrete_ot, transport_rays, w1_to_boundary,
)

EXIT_OK, EXIT_USAGE, EXIT_NONCONVERGED, EXIT_VERDICT = 0, 1, 2, 3
AGREEMENT_RTOL = 1e-9
# the LP cross-check is skipped beyond this many sources
LP_MAX_SOURCES = 20_000

log = logging.getLogger("inflap")


class UsageError(Exception):
    pass


def _common(sp):
    sp.add_argument("--config", help="key=value config file")
    sp.add_argument("--shape", help="disk, rectangle (alias square), l_shape, annulus or polygon")
    sp.add_argument("--h", type=float, help="lattice spacing")
    sp.add_argument("--out", help=f"output directory (default ${ENV_OUT} or {DEFAULT_OUT})")
    sp.add_argument("--formats", help="comma-separated subset of csv,json,svg")
    sp.add_argument("--reproducible", action=argparse.BooleanOptionalAction, default=None)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--stencil", choices=("forward", "corners"))
    sp.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="inflap", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", help="first eigenpair for one exponent")
    _common(sp)
    sp.add_argument("--p", type=float)

    sp = sub.add_parser("study", help="p sweep and verdict")
    _common(sp)
    sp.add_argument("--p-list", help="comma-separated ascending exponents")
    sp.add_argument("--bound-constant", type=float,
                    help="constant C of the bound root <= 1/R1 + C h (default: calibrate)")

    sp = sub.add_parser("transport", help="transport a measure to the boundary")
    _common(sp)
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--from-eigen", type=float, metavar="P",
                     help="use the source measure of the eigenpair at exponent P")
    src.add_argument("--source", metavar="CSV", help="x,y,weight rows")
    src.add_argument("--uniform", action="store_true", help="uniform probability on the nodes")
    src.add_argument("--point", metavar="X,Y", help="unit point mass")
    sp.add_argument("--target-marginal", metavar="CSV",
                    help="x,y,weight rows fixing the boundary marginal")
    sp.add_argument("--boundary-stride", type=int,
                    help="use every k-th boundary sample in the LP (default: as needed)")
    sp.add_argument("--no-lp", action="store_true", help="skip the network-simplex cross-check")

    sp = sub.add_parser("report", help="rebuild the verdict from a saved sweep")
    sp.add_argument("sweep", help="sweep.json written by `study`")
    sp.add_argument("--bound-constant", type=float)
    sp.add_argument("--out", help="output directory")
    sp.add_argument("-v", "--verbose", action="store_true")
    return ap


def _config(args) -> RunConfig:
    overrides = {
        "shape": args.shape, "h": args.h, "out_dir": args.out, "formats": args.formats,
        "reproducible": args.reproducible, "seed": args.seed, "stencil": args.stencil,
        "p": getattr(args, "p", None), "p_list": getattr(args, "p_list", None),
    }
    return load_config(args.config, overrides)


def _out_dir(path) -> Path:
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".inflap_write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise UsageError(f"cannot write to output directory {path}: {exc.strerror}") from None
    return path


def _grid(cfg: RunConfig):
    return build_domain(cfg.domain, cfg.h, cfg.stencil)


def _ladder(p: float) -> list[float]:
    """Doubling exponents from 2 up to ``p`` (inclusive) for warm starts."""
    out = [2.0]
    while out[-1] * 2 < p:
        out.append(out[-1] * 2)
    if out[-1] != p:
        out.append(p)
    return out


def cmd_solve(args) -> int:
    cfg = _config(args)
    out = _out_dir(cfg.out_dir)
    grid = _grid(cfg)
    pair = continuation_sweep(grid, _ladder(cfg.p), cfg.solver)[-1]
    triple = derived_measures(pair, grid)
    rep = primal_dual_values(pair, triple, grid)
    tag = f"p{cfg.p:g}"
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": "eigenpair", "shape": cfg.domain.shape, "h": grid.h, "p": pair.p,
        "lambda": pair.lambda_p, "lambda_root": pair.root, "log_lambda": pair.log_lambda,
        "iterations": pair.iterations, "residual": pair.residual_norm,
        "rayleigh_value": pair.rayleigh_value, "converged": pair.converged,
        "n_nodes": grid.n_interior, "stencil": grid.stencil,
        "reproducible": cfg.reproducible, "seed": cfg.seed, "duality": rep.as_dict(),
    }
    if "json" in cfg.formats:
        io.write_json(out / f"eigenpair_{tag}.json", doc, "eigenpair")
    if "csv" in cfg.formats:
        io.write_field_csv(out / f"field_{tag}.csv", grid, pair.u.values, "u")
        io.write_field_csv(out / "distance.csv", grid, distance_to_boundary(grid).values, "d")
        io.write_measure_csv(out / f"f_{tag}.csv", triple.f)
        io.write_vector_csv(out / f"sigma_{tag}.csv", triple.sigma)
    if "svg" in cfg.formats:
        io.write_text(out / f"field_{tag}.svg",
                      io.svg_heatmap(grid, pair.u.values, title=f"u, p={cfg.p:g}"))
    print(f"p={pair.p:g} lambda={pair.lambda_p:.10g} lambda^(1/p)={pair.root:.10g} "
          f"iterations={pair.iterations} residual={pair.residual_norm:.3e} "
          f"converged={pair.converged}")
    return EXIT_OK if pair.converged else EXIT_NONCONVERGED


def _write_study(out: Path, cfg_formats, sweep: SweepResult, verdict: dict, panel=None):
    if "json" in cfg_formats:
        io.write_json(out / "sweep.json", sweep.to_dict(), "sweep")
        io.write_json(out / "verdict.json", verdict, "verdict")
    if "csv" in cfg_formats:
        io.write_sweep_csv(out / "sweep.csv", sweep)
    if "svg" in cfg_formats and panel is not None:
        io.write_text(out / "panel.svg", panel)


def _print_verdict(verdict: dict):
    print(f"shape={verdict['shape']} h={verdict['h']:g} R1={verdict['R1']:.6g}")
    for c in verdict["checks"]:
        val = "" if c["value"] is None else f" value={c['value']:.4g}"
        print(f"  {'PASS' if c['passed'] else 'FAIL'} {c['name']}{val}  {c['detail']}".rstrip())
    print("verdict:", "PASS" if verdict["passed"] else "FAIL")


def cmd_study(args) -> int:
    cfg = _config(args)
    out = _out_dir(cfg.out_dir)
    grid = _grid(cfg)
    sweep = run_asymptotic_study(cfg.domain, cfg.h, cfg.p_list, cfg.solver, grid=grid)
    verdict = build_verdict(sweep, args.bound_constant)
    panel = None
    last = next((p for p in reversed(sweep.pairs) if p is not None), None)
    if "svg" in cfg.formats and last is not None:
        triple = derived_measures(last, grid)
        rays = transport_rays(triple.f, grid, 1e-3, sweep.distance)
        panel = io.svg_panel([(f"u, p={last.p:g}", last.u.values, None),
                              (f"f, p={last.p:g}", triple.f.weights, None),
                              ("transport rays", sweep.distance.values, rays)], grid)
    _write_study(out, cfg.formats, sweep, verdict, panel)
    _print_verdict(verdict)
    return EXIT_OK if verdict["passed"] else EXIT_VERDICT


def _source_measure(args, cfg, grid):
    if args.from_eigen is not None:
        p = check_exponent(args.from_eigen)
        pair = continuation_sweep(grid, _ladder(p), cfg.solver)[-1]
        return derived_measures(pair, grid).f, f"eigen p={p:g}"
    if args.uniform:
        n = grid.n_interior
        return DiscreteMeasure.on_nodes(grid, np.full(n, 1.0 / n)), "uniform"
    if args.point is not None:
        try:
            x = np.array([float(t) for t in args.point.split(",")])
        except ValueError:
            raise UsageError(f"--point expects X,Y, got {args.point!r}") from None
        if x.shape != (2,) or not cfg.domain.contains(x[None, :])[0]:
            raise UsageError(f"point {args.point} is not inside the domain")
        return DiscreteMeasure(x[None, :], np.ones(1)), f"point {args.point}"
    try:
        pts, w = io.read_weighted_points(args.source)
    except OSError as exc:
        raise UsageError(f"cannot read source {args.source}: {exc.strerror}") from None
    if not np.all(cfg.domain.contains(pts)):
        raise UsageError(f"{args.source}: some source points lie outside the domain")
    return DiscreteMeasure(pts, w), f"file {args.source}"


def cmd_transport(args) -> int:
    cfg = _config(args)
    out = _out_dir(cfg.out_dir)
    grid = _grid(cfg)
    f, label = _source_measure(args, cfg, grid)
    if not f.total_mass > 0:
        raise UsageError("source measure has no mass")
    d = distance_to_boundary(grid) if f.nodes is not None else None
    doc = {"schema_version": SCHEMA_VERSION, "kind": "transport", "shape": cfg.domain.shape,
           "h": grid.h, "source": label, "n_sources": len(f.weights),
           "total_mass": f.total_mass, "fixed_marginal": args.target_marginal is not None,
           "value": None, "lp": None, "agreement": None}
    plan = None
    if args.target_marginal:
        try:
            tpts, tw = io.read_weighted_points(args.target_marginal)
        except OSError as exc:
            raise UsageError(f"cannot read {args.target_marginal}: {exc.strerror}") from None
        plan = solve_discrete_ot(f, tpts, tw)
        doc["value"] = plan.cost
        doc["lp"] = {"cost": plan.cost, "n_targets": len(tpts), "boundary_stride": 1,
                     "reference_cost": None, "certificate": plan.certificate}
    else:
        value, plan = w1_to_boundary(f, d, grid)
        doc["value"] = value
        m = len(f.weights)
        if not args.no_lp and m <= LP_MAX_SOURCES:
            nb = len(grid.boundary_points)
            stride = args.boundary_stride or max(1, math.ceil(m * nb / MAX_COST_ENTRIES))
            targets = grid.boundary_points[::stride]
            lp = solve_discrete_ot(f, targets)
            ref = closed_form_cost(f, targets)
            rel = abs(lp.cost - ref) / max(ref, 1e-300)
            doc["lp"] = {"cost": lp.cost, "n_targets": len(targets), "boundary_stride": stride,
                         "reference_cost": ref, "certificate": lp.certificate}
            doc["agreement"] = {"relative_difference": rel, "tolerance": AGREEMENT_RTOL,
                                "passed": bool(rel <= AGREEMENT_RTOL and lp.certificate["ok"])}
            if stride > 1:
                doc["note"] = (f"LP run on every {stride}th boundary sample; its cost is compared "
                               "with the closed form on the same targets")
        elif not args.no_lp:
            doc["note"] = f"LP skipped: {m} sources exceed {LP_MAX_SOURCES}"
    if "json" in cfg.formats:
        io.write_json(out / "transport.json", doc, "transport")
    if "csv" in cfg.formats and plan is not None:
        io.write_plan_csv(out / "plan.csv", plan)
    if "svg" in cfg.formats and f.nodes is not None:
        rays = transport_rays(f, grid, 1e-3, d)
        io.write_text(out / "transport.svg",
                      io.svg_heatmap(grid, f.weights, rays, title=f"source ({label})"))
    agree = doc["agreement"]
    print(f"value={doc['value']:.12g} mass={f.total_mass:.12g}"
          + ("" if agree is None else f" lp_agreement={'PASS' if agree['passed'] else 'FAIL'}"
             f" (rel {agree['relative_difference']:.2e})"))
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        data = json.loads(Path(args.sweep).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read {args.sweep}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{args.sweep} is not JSON: {exc.msg}") from None
    try:
        io.validate(data, "sweep")
    except Exception as exc:  # jsonschema.ValidationError
        raise UsageError(f"{args.sweep} is not a sweep record: "
                         f"{str(exc).splitlines()[0]}") from None
    sweep = SweepResult.from_dict(data)
    verdict = build_verdict(sweep, args.bound_constant)
    if args.out:
        io.write_json(_out_dir(args.out) / "verdict.json", verdict, "verdict")
    _print_verdict(verdict)
    return EXIT_OK if verdict["passed"] else EXIT_VERDICT


COMMANDS = {"solve": cmd_solve, "study": cmd_study, "transport": cmd_transport,
            "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, InfeasibleMarginals, InflapError, ValueError, OSError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        if isinstance(exc, InfeasibleMarginals):
            msg = f"InfeasibleMarginals: {msg}"
        print(f"inflap: error: {msg}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
