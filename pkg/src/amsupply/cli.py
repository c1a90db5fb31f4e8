"""Command-line entry point.

Stages communicate through files: ``cluster`` writes the clusters JSON that
``design`` and ``sweep`` read back. Payloads hold no timestamps and, unless
``--timings`` is given, no wall-clock values, so reruns are byte-identical.

Exit codes:

    0  success
    2  invalid configuration (bad flags or parameter values)
    3  instance validation failure
    4  infeasible design
    5  file I/O error
    6  distance-matrix provider error
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from amsupply.costmatrix import (
    CsvMatrixProvider,
    DegenerateMatrixError,
    DomainError,
    InlineMatrixProvider,
    MatrixResolutionError,
    MatrixTransportError,
    NormalizationWeights,
    RemoteMatrixProvider,
    build_cost_matrix,
    fetch_matrix,
)
from amsupply.locdesign import (
    INFEASIBLE,
    DanglingReferenceError,
    DesignModelError,
    build_design_model,
    solution_to_dict,
    solve_design,
)
from amsupply.model import (
    InstanceFormatError,
    MissingCoefficientError,
    UnknownReferenceError,
    load_instance,
    money,
    save_instance,
    validate_instance,
)
from amsupply.pmedian import (
    PMedianError,
    UnassignedClientError,
    aggregate_clusters,
    build_pmedian_problem,
    cluster_from_dict,
    cluster_to_dict,
    solve_pmedian,
)
from amsupply.scenarios import EmptyPartError, fit_demand_distribution, generate_orders, synthetic_instance
from amsupply.sweep import SweepError, export_curve, lead_time_grid, sweep_model, write_curve_svg

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VALIDATION = 3
EXIT_INFEASIBLE = 4
EXIT_IO = 5
EXIT_PROVIDER = 6

log = logging.getLogger("amsupply")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError(message, EXIT_CONFIG)


def _write_json(data, path: str) -> None:
    text = json.dumps(data, indent=2) + "\n"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _load_checked(path: str):
    instance = load_instance(path)
    problems = validate_instance(instance)
    if problems:
        for v in problems:
            print(f"{v.code} {v.path}: {v.message}", file=sys.stderr)
        raise CliError(f"{path}: {len(problems)} validation problem(s)", EXIT_VALIDATION)
    return instance


def _load_clusters(path: str):
    with open(path, encoding="utf-8") as fh:
        try:
            return cluster_from_dict(json.load(fh))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise CliError(f"{path}: not a clusters file ({exc})", EXIT_IO) from exc


def _weights(args) -> NormalizationWeights:
    try:
        return NormalizationWeights(time_weight=args.time_weight, distance_weight=args.distance_weight)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from exc


def _provider(args, instance):
    if args.matrix_csv:
        return CsvMatrixProvider(args.matrix_csv)
    if args.remote_url:
        return RemoteMatrixProvider(args.remote_url, args.cache_dir, api_key_env=args.api_key_env)
    if instance.matrix is None:
        raise CliError("instance has no inline matrix; pass --matrix-csv or --remote-url", EXIT_CONFIG)
    return InlineMatrixProvider(instance.matrix)


def cmd_cluster(args) -> int:
    weights = _weights(args)
    instance = _load_checked(args.instance)
    raw = fetch_matrix(_provider(args, instance), instance.locations)
    cost = build_cost_matrix(raw, weights)
    try:
        problem = build_pmedian_problem(instance, cost, args.p)
    except PMedianError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from exc
    clusters = aggregate_clusters(solve_pmedian(problem), instance.orders)
    _write_json(cluster_to_dict(clusters), args.out)
    print(f"objective {clusters.objective:.6f} with {len(clusters.open_ifs)} open IFs")
    for r in clusters.open_ifs:
        members = sum(1 for f in clusters.assignment.values() if f == r)
        units = sum(u for (s, _), u in clusters.demand_table.items() if s == r)
        print(f"  {r}: {members} clients, {units} units")
    return EXIT_OK


def _print_design(solution, seconds: float) -> None:
    print(f"total cost   {money(solution.total_cost)}")
    print(f"PCs          {solution.pc_count} ({', '.join(solution.open_pcs) or '-'})")
    print(f"printers     {solution.printer_total}")
    print(f"worst lead   {solution.worst_lead_hours:g} h")
    print(f"solve time   {seconds:.3f} s")


def cmd_design(args) -> int:
    if args.max_lead_hours is None or args.max_lead_hours < 0:
        raise CliError("--max-lead-hours must be given and >= 0", EXIT_CONFIG)
    instance = _load_checked(args.instance)
    clusters = _load_clusters(args.clusters)
    model = build_design_model(clusters, instance, args.max_lead_hours)
    solution = solve_design(model)
    _write_json(solution_to_dict(solution, model, timings=args.timings), args.out)
    if solution.status == INFEASIBLE:
        print(f"infeasible at max lead time {args.max_lead_hours:g} h; unreachable pairs:", file=sys.stderr)
        for r, p in solution.witnesses:
            print(f"  {r} {p}", file=sys.stderr)
        return EXIT_INFEASIBLE
    _print_design(solution, solution.solve_seconds)
    return EXIT_OK


def cmd_sweep(args) -> int:
    try:
        grid = lead_time_grid(args.from_h, args.to_h, args.step)
    except SweepError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from exc
    if args.jobs is not None and args.jobs < 1:
        raise CliError("--jobs must be >= 1", EXIT_CONFIG)
    instance = _load_checked(args.instance)
    clusters = _load_clusters(args.clusters)
    # fail on an unwritable destination before spending time on solves
    Path(args.out).open("a", encoding="utf-8").close()
    model = build_design_model(clusters, instance, grid[0])
    curve = sweep_model(model, grid, args.jobs)
    export_curve(curve, args.out, timings=args.timings)
    if args.svg:
        write_curve_svg(curve, args.svg)
    feasible = curve.feasible
    print(f"{len(curve.points)} grid points, {len(feasible)} feasible")
    if curve.invariance_threshold is not None:
        print(f"design unchanged from {curve.invariance_threshold:g} h on")
    if curve.selected is not None:
        s = curve.selected.point
        tag = " (degenerate curve)" if curve.selected.degenerate else ""
        print(f"cost-benefit point: {s.max_lead_hours:g} h, {s.pc_count} PCs, {money(s.total_cost)}{tag}")
    if not feasible:
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_generate(args) -> int:
    if args.count is not None and args.count < 1:
        raise CliError("--count must be >= 1", EXIT_CONFIG)
    if args.synthetic_cities is not None:
        if args.synthetic_cities < 2:
            raise CliError("--synthetic-cities must be >= 2", EXIT_CONFIG)
        demand_cities = args.demand_cities if args.demand_cities is not None else min(16, args.synthetic_cities)
        if demand_cities is not None and not 1 <= demand_cities <= args.synthetic_cities:
            raise CliError("--demand-cities must lie in [1, --synthetic-cities]", EXIT_CONFIG)
        instance = synthetic_instance(
            n_cities=args.synthetic_cities,
            n_orders=args.count or 87,
            seed=args.seed,
            demand_cities=demand_cities,
        )
    else:
        if not args.instance:
            raise CliError("generate needs --instance or --synthetic-cities", EXIT_CONFIG)
        if args.count is None:
            raise CliError("--count is required with --instance", EXIT_CONFIG)
        base = _load_checked(args.instance)
        if not base.orders:
            raise CliError("base instance has no orders to fit", EXIT_CONFIG)
        dist = fit_demand_distribution(base.orders)
        orders = generate_orders(dist, args.count, args.seed, base.locations)
        metadata = dict(base.metadata)
        metadata.update({"generated_orders": args.count, "seed": args.seed})
        instance = replace(base, orders=tuple(orders), metadata=metadata)
    save_instance(instance, args.out)
    print(f"wrote {len(instance.locations)} locations, {len(instance.orders)} order lines to {args.out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    instance = load_instance(args.instance)
    problems = validate_instance(instance)
    report = {
        "instance": os.path.basename(args.instance),
        "valid": not problems,
        "violations": [{"code": v.code, "path": v.path, "message": v.message} for v in problems],
    }
    if args.out:
        _write_json(report, args.out)
    if problems:
        for v in problems:
            print(f"{v.code} {v.path}: {v.message}")
        return EXIT_VALIDATION
    print("instance is valid")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="amsupply", description="Spare-part supply chain design with 3D printing.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add_instance(p, required=True):
        p.add_argument("--instance", required=required, help="instance JSON")

    c = sub.add_parser("cluster", help="p-median clustering of clients onto internal facilities")
    add_instance(c)
    src = c.add_mutually_exclusive_group()
    src.add_argument("--matrix-csv", help="travel matrix CSV (origin,destination,distance_m,travel_time_s)")
    src.add_argument("--remote-url", help="distance-matrix service endpoint")
    c.add_argument("--cache-dir", default=".matrix-cache", help="response cache for --remote-url")
    c.add_argument("--api-key-env", help="name of the environment variable holding the service key")
    c.add_argument("--time-weight", type=float, default=0.7)
    c.add_argument("--distance-weight", type=float, default=0.3)
    c.add_argument("--p", type=int, default=None, help="number of IFs to open (default: all candidates)")
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_cluster)

    d = sub.add_parser("design", help="choose PCs, printers and sources at one lead-time limit")
    add_instance(d)
    d.add_argument("--clusters", required=True)
    d.add_argument("--max-lead-hours", type=float, required=True)
    d.add_argument("--timings", action="store_true", help="store solve seconds in the payload")
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_design)

    s = sub.add_parser("sweep", help="solve the design over a grid of lead-time limits")
    add_instance(s)
    s.add_argument("--clusters", required=True)
    s.add_argument("--from", dest="from_h", type=float, default=4.0)
    s.add_argument("--to", dest="to_h", type=float, default=55.0)
    s.add_argument("--step", type=float, default=1.0)
    s.add_argument("--jobs", type=int, default=None, help="parallel solves (default: CPU count)")
    s.add_argument("--timings", action="store_true", help="store solve seconds in the CSV")
    s.add_argument("--svg", help="also draw the normalized curves")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)

    g = sub.add_parser("generate", help="write an instance with synthetic orders")
    add_instance(g, required=False)
    g.add_argument("--synthetic-cities", type=int, help="build a whole synthetic instance with this many cities")
    g.add_argument("--demand-cities", type=int, default=None, help="cities with demand in synthetic mode (default: min(16, cities))")
    g.add_argument("--count", type=int, help="number of order lines")
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    v = sub.add_parser("validate", help="check an instance and report every problem")
    add_instance(v)
    v.add_argument("--out", help="also write the report as JSON")
    v.set_defaults(func=cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (
        InstanceFormatError,
        UnknownReferenceError,
        DomainError,
        DegenerateMatrixError,
        DesignModelError,
        DanglingReferenceError,
        MissingCoefficientError,
        UnassignedClientError,
        EmptyPartError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (MatrixResolutionError, MatrixTransportError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
