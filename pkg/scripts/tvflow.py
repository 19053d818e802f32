#!/usr/bin/env python3
"""
tvflow command line: certified total variation flows on weighted graphs.

Subcommands: flow, resolvent, analyze, gen, selftest, batch.
"""

import sys
import argparse
from pathlib import Path

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from loguru import logger
from src.utils.logging_config import setup_logging
from config.settings import get_settings
from src.core.calculus import BoundaryCondition
from src.core.space import whole_space
from src.core.errors import BudgetExceeded, NotConverged, NotReached
from src.ingestion.generators import generate
from src.ingestion.loaders.graph_loader import (
    parse_graph_file,
    read_boundary_data,
    read_vertex_field,
    write_fields,
    write_graph_file,
)
from src.analysis.asymptotics import (
    asymptotic_profile,
    check_extinction_bound,
    check_ground_state,
    estimate_lambda1,
    extinction_estimate,
)
from src.solvers.flow import check_entropy, evolve, extinction_time
from src.solvers.resolvent import ResolventProblem, solve_resolvent
from src.workflows.experiment import load_specs, run_batch
from src.workflows.reporting import (
    format_reports,
    reports_frame,
    resolvent_frame,
    write_csv,
    write_certificate,
    write_summary,
    write_trajectory_csv,
)
from src.workflows.selftest import run_selftest


def parse_args(argv=None):
    """Parse command line arguments."""
    parser = argparse.ArgumentParser(description="Duality-certified total variation flow on weighted graphs")

    parser.add_argument("--seed", type=int, help="Seed for randomized suites (default: from settings)")
    parser.add_argument("--threads", type=int, help="Worker threads for batch runs (never affects results)")
    parser.add_argument("--quiet", action="store_true", help="Only warnings and errors on the console")
    parser.add_argument(
        "--log-level",
        type=str,
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging level (default: from settings)",
    )

    sub = parser.add_subparsers(dest="command", required=True)

    def add_problem(p, needs_u0: bool = True):
        p.add_argument("--graph", type=Path, required=True, help="mmgraph file (may carry interior, f and u)")
        p.add_argument("--bc", choices=["neumann", "whole", "dirichlet"], default="neumann")
        p.add_argument("--f", type=Path, help="Boundary data file with 'f' records (Dirichlet)")
        if needs_u0:
            p.add_argument("--u0", type=Path, help="Initial datum file with 'u' records")
        p.add_argument("--tol", type=float, help="Resolvent gap tolerance (default: from settings)")

    flow = sub.add_parser("flow", help="Run the implicit Euler flow")
    add_problem(flow)
    flow.add_argument("--tau", type=float, required=True, help="Time step")
    flow.add_argument("--T", type=float, required=True, dest="horizon", help="Horizon")
    flow.add_argument("--entropy", action="store_true", help="Also check entropy conditions along the trajectory")
    flow.add_argument("--out", type=Path, help="Trajectory CSV (default: <output_dir>/flow.csv)")

    resolvent = sub.add_parser("resolvent", help="Solve one resolvent J_lambda(g)")
    add_problem(resolvent, needs_u0=False)
    resolvent.add_argument("--g", type=Path, help="Datum file with 'u' records (default: the graph file's)")
    resolvent.add_argument("--lambda", type=float, required=True, dest="lam", help="lambda > 0")
    resolvent.add_argument("--max-iters", type=int, help="Iteration cap (default: from settings, 200000)")
    resolvent.add_argument("--dump-certificate", type=Path, help="JSON certificate dump: condition report, u, v, Y and X")
    resolvent.add_argument("--out", type=Path, help="Result CSV (default: <output_dir>/resolvent.csv)")

    analyze = sub.add_parser("analyze", help="Spectral and extinction analysis")
    add_problem(analyze)
    analyze.add_argument("--tau", type=float, default=0.1)
    analyze.add_argument("--T", type=float, default=10.0, dest="horizon")
    analyze.add_argument("--lambda1", action="store_true", help="Estimate lambda_1 from subset witnesses")
    analyze.add_argument("--profile", action="store_true", help="Asymptotic profile and ground-state check")
    analyze.add_argument("--extinction", action="store_true", help="Extinction bracket and bound")
    analyze.add_argument("--budget", type=int, help="Subset evaluations for lambda_1 (default: from settings)")
    analyze.add_argument("--out", type=Path, help="Report CSV (default: <output_dir>/analysis.csv)")

    gen = sub.add_parser("gen", help="Generate a graph file")
    gen.add_argument("kind", choices=["path", "cycle", "grid2d", "from_image"])
    gen.add_argument("--n", type=int, help="Vertices (path, cycle)")
    gen.add_argument("--rows", type=int)
    gen.add_argument("--cols", type=int)
    gen.add_argument("--image", type=Path, help="8-bit PGM (from_image)")
    gen.add_argument("--boundary", choices=["neumann", "dirichlet"], default="neumann")
    gen.add_argument("--weight", type=float, default=1.0)
    gen.add_argument("--measure", type=float, default=1.0)
    gen.add_argument("--out", type=Path, required=True, help="Output mmgraph file")

    selftest = sub.add_parser("selftest", help="Gauss-Green, oracle and fixture suites")
    selftest.add_argument("--quick", action="store_true", help="Smaller random suites")

    batch = sub.add_parser("batch", help="Run experiments from a YAML file")
    batch.add_argument("specs", type=Path)
    batch.add_argument("--out-dir", type=Path, help="Root directory for per-experiment outputs")

    return parser.parse_args(argv)


# ==================== Helpers ====================
def _load_problem(args, needs_u0: bool = True):
    parsed = parse_graph_file(args.graph)
    graph = parsed.graph
    domain = parsed.domain
    if domain is None:
        domain = whole_space(graph)

    if args.bc == "dirichlet":
        f = read_boundary_data(args.f, domain) if args.f else parsed.boundary_data
        bc = BoundaryCondition.dirichlet(f)
    elif args.bc == "whole":
        bc = BoundaryCondition.whole_space()
    else:
        bc = BoundaryCondition.neumann()
    bc.validate(domain)

    u0 = None
    if needs_u0:
        source = getattr(args, "u0", None) or getattr(args, "g", None)
        u0 = read_vertex_field(source, domain) if source else parsed.vertex_field
        if u0 is None:
            raise ValueError("no initial datum: pass a field file or add 'u' records to the graph file")
    return domain, bc, u0


def _output(path, default_name: str) -> Path:
    return Path(path) if path else get_settings().get_output_path() / default_name


# ==================== Commands ====================
def cmd_flow(args) -> int:
    domain, bc, u0 = _load_problem(args)
    trajectory = evolve(domain, u0, bc, args.tau, args.horizon, tol=args.tol, progress=not args.quiet)
    out = write_trajectory_csv(trajectory, _output(args.out, "flow.csv"))
    logger.info(f"Trajectory: {trajectory.num_steps} steps, settled={trajectory.settled} -> {out}")

    failed = [n for n, c in enumerate(trajectory.certificates, start=1) if not c.condition_report.passed]
    if failed:
        logger.error(f"Uncertified steps: {failed}")
    ok = not failed
    if args.entropy:
        report = check_entropy(trajectory)
        logger.info(format_reports([report]))
        ok = ok and report.passed
    return 0 if ok else 1


def cmd_resolvent(args) -> int:
    domain, bc, g = _load_problem(args)
    problem = ResolventProblem(domain, g, args.lam, bc)
    try:
        certificate = solve_resolvent(problem, tol=args.tol, max_iters=args.max_iters)
    except NotConverged as e:
        if args.dump_certificate and e.certificate is not None:
            write_certificate(problem, e.certificate, args.dump_certificate)
        raise
    out = write_csv(resolvent_frame(problem, certificate), _output(args.out, "resolvent.csv"))
    if args.dump_certificate:
        write_certificate(problem, certificate, args.dump_certificate)
    report = certificate.condition_report
    logger.info(f"gap={certificate.gap:.3e}, iterations={certificate.iterations}, certificate {report.passed} -> {out}")
    return 0 if report.passed else 1


def cmd_analyze(args) -> int:
    domain, bc, u0 = _load_problem(args, needs_u0=args.extinction or args.profile)
    summary, reports = {}, []
    lambda1 = None

    if args.lambda1:
        try:
            estimate = estimate_lambda1(domain, bc, args.budget)
        except BudgetExceeded as e:
            logger.warning(str(e))
            estimate = e.best
        summary["lambda1"] = estimate.to_dict()
        lambda1 = estimate.lambda1_upper
        logger.info(f"lambda_1 <= {lambda1:.12g} ({estimate.method})")

    if args.extinction or args.profile:
        trajectory = evolve(domain, u0, bc, args.tau, args.horizon, tol=args.tol, progress=not args.quiet)
        try:
            bracket = extinction_time(trajectory)
        except NotReached as e:
            logger.error(str(e))
            write_summary(summary, _output(args.out, "analysis.csv").with_suffix(".json"))
            return 1
        summary["extinction_bracket"] = list(bracket.as_tuple())
        logger.info(f"T_ex in [{bracket.t_lo}, {bracket.t_hi}]")
        if args.extinction and lambda1:
            reports.append(check_extinction_bound(trajectory, lambda1, bracket))
        if args.profile and bracket.t_hi > 0:
            profile = asymptotic_profile(trajectory, bracket)
            summary["profile"] = profile.tolist()
            t_ex = extinction_estimate(trajectory, bracket)
            reports.append(check_ground_state(domain, profile, t_ex, bc, lambda1=lambda1, budget=args.budget))

    out = _output(args.out, "analysis.csv")
    write_csv(reports_frame(reports), out)
    write_summary({**summary, "checks": {r.name: r.to_dict() for r in reports}}, out.with_suffix(".json"))
    if reports:
        logger.info("\n" + format_reports(reports))
    return 0 if all(r.passed for r in reports) else 1


def cmd_gen(args) -> int:
    params = {"boundary": args.boundary, "weight": args.weight, "measure": args.measure}
    if args.kind in ("path", "cycle"):
        params["n"] = args.n
    elif args.kind == "grid2d":
        params.update(rows=args.rows, cols=args.cols)
    else:
        params["path"] = args.image
    if any(v is None for v in params.values()):
        raise ValueError(f"missing size arguments for '{args.kind}'")
    generated = generate(args.kind, **params)
    write_graph_file(args.out, generated.graph, generated.domain, vertex_field=generated.u0)
    if generated.domain.num_boundary:
        write_fields(args.out.with_suffix(".f.mmg"), generated.domain, boundary_data=generated.domain.boundary_data(0.0))
    logger.info(f"Wrote {args.kind} graph with {generated.graph.num_vertices} vertices to {args.out}")
    return 0


def cmd_selftest(args) -> int:
    reports = run_selftest(quick=args.quick, seed=get_settings().seed)
    logger.info("\n" + format_reports(reports))
    return 0 if all(r.passed for r in reports) else 1


def cmd_batch(args) -> int:
    specs = load_specs(args.specs)
    results = run_batch(specs, threads=get_settings().threads, output_dir=args.out_dir)
    for result in results:
        logger.info(f"  {result.name}: {result.status}")
    return 0 if all(r.exit_code == 0 for r in results) else 1


COMMANDS = {
    "flow": cmd_flow,
    "resolvent": cmd_resolvent,
    "analyze": cmd_analyze,
    "gen": cmd_gen,
    "selftest": cmd_selftest,
    "batch": cmd_batch,
}


def main(argv=None):
    """Main entry point."""
    args = parse_args(argv)

    settings = get_settings()
    if args.seed is not None:
        settings.seed = args.seed
    if args.threads is not None:
        settings.threads = args.threads
    setup_logging(log_level=args.log_level, quiet=args.quiet)

    try:
        return COMMANDS[args.command](args)

    except KeyboardInterrupt:
        logger.warning("Interrupted by user")
        return 130

    except NotConverged as e:
        logger.error(str(e))
        return 1

    except (ValueError, OSError) as e:
        logger.error(f"{args.command}: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
