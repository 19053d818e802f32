"""
Experiment orchestration for tvflow.

An ExperimentSpec names a graph source, a domain and boundary condition, an
initial datum and the tasks to run (flow, resolvent, analyses, checks).
run_experiment executes one spec and writes its artifacts; run_batch runs
several specs concurrently with per-experiment output directories.
"""

from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

import numpy as np
import yaml
from loguru import logger
from pydantic import BaseModel, Field, model_validator
from tqdm import tqdm

from config.settings import get_settings, positive_setting
from src.analysis.asymptotics import (
    asymptotic_profile,
    check_extinction_bound,
    check_ground_state,
    check_profile_norm,
    estimate_lambda1,
    extinction_estimate,
)
from src.core.calculus import BoundaryCondition
from src.core.errors import BudgetExceeded, NotConverged, NotExtinct, NotReached
from src.core.reports import CheckReport
from src.core.space import Domain, MetricMeasureGraph, VertexField, make_domain, trace
from src.ingestion.generators import generate
from src.ingestion.loaders.graph_loader import parse_graph_file, read_boundary_data, read_vertex_field
from src.solvers.flow import (
    FlowTrajectory,
    check_energy_dissipation,
    check_entropy,
    check_mean_conservation,
    check_regularity,
    check_variational_consistency,
    evolve,
    extinction_time,
)
from src.solvers.resolvent import ResolventProblem, solve_resolvent
from src.workflows.reporting import reports_frame, resolvent_frame, write_csv, write_summary, write_trajectory_csv

Task = Literal["flow", "resolvent"]
Analysis = Literal["extinction", "lambda1", "profile", "ground_state"]
Check = Literal["entropy", "regularity", "energy", "mean", "variational"]


# ==================== Spec ====================
class GraphSource(BaseModel):
    """Either an mmgraph file or a generator with its parameters."""

    file: Optional[Path] = None
    generator: Optional[Literal["path", "cycle", "grid2d", "from_image"]] = None
    params: Dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def check_source(self) -> "GraphSource":
        if (self.file is None) == (self.generator is None):
            raise ValueError("graph needs exactly one of 'file' or 'generator'")
        if self.file is not None and not self.file.exists():
            raise ValueError(f"graph file not found: {self.file}")
        if self.generator == "from_image" and not Path(self.params.get("path", "")).exists():
            raise ValueError(f"image not found: {self.params.get('path')}")
        return self


class InitialDatum(BaseModel):
    """u0 from a field file or an expression."""

    kind: Literal["file", "constant", "indicator", "noise", "values", "image"] = "constant"
    file: Optional[Path] = None
    value: float = 1.0
    vertices: List[int] = Field(default_factory=list)
    values: Optional[List[float]] = None
    seed: Optional[int] = Field(default=None, ge=0)

    @model_validator(mode="after")
    def check_datum(self) -> "InitialDatum":
        if self.kind == "file" and (self.file is None or not self.file.exists()):
            raise ValueError(f"u0 file not found: {self.file}")
        if self.kind == "noise" and self.seed is None:
            raise ValueError("noise initial data requires a seed")
        if self.kind == "values" and not self.values:
            raise ValueError("'values' initial data needs a non-empty list")
        return self


class ExperimentSpec(BaseModel):
    name: str = "experiment"
    graph: GraphSource
    interior: Optional[List[int]] = None
    bc: Literal["neumann", "whole", "dirichlet"] = "neumann"
    boundary_value: Optional[float] = None
    boundary_file: Optional[Path] = None
    boundary_from_trace: bool = False
    u0: InitialDatum = Field(default_factory=InitialDatum)

    tasks: List[Task] = Field(default_factory=lambda: ["flow"])
    analyses: List[Analysis] = Field(default_factory=list)
    checks: List[Check] = Field(default_factory=list)

    tau: float = Field(default=0.1, gt=0.0)
    horizon: float = Field(default=1.0, gt=0.0)
    lam: float = Field(default=1.0, gt=0.0, description="lambda of the resolvent task")
    tol: float = Field(default=1e-10, gt=0.0)
    max_iters: Optional[int] = Field(default=None, gt=0)
    budget: Optional[int] = Field(default=None, gt=0)
    lambda1: Optional[float] = Field(default=None, gt=0.0, description="Known lambda_1 for the extinction bound")
    output_dir: Optional[Path] = None

    @model_validator(mode="after")
    def check_boundary(self) -> "ExperimentSpec":
        if self.boundary_file is not None and not self.boundary_file.exists():
            raise ValueError(f"boundary file not found: {self.boundary_file}")
        given = [self.boundary_value is not None, self.boundary_file is not None, self.boundary_from_trace]
        if sum(given) > 1:
            raise ValueError("give at most one of boundary_value, boundary_file, boundary_from_trace")
        return self


@dataclass
class ExperimentResult:
    name: str
    status: Literal["success", "failed", "error"]
    summary: Dict[str, Any] = field(default_factory=dict)
    outputs: List[Path] = field(default_factory=list)
    errors: List[str] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return 0 if self.status == "success" else 1


# ==================== Setup ====================
def build_setup(spec: ExperimentSpec):
    """Resolve graph, domain, boundary condition and u0 of a spec."""
    file_f = file_u = None
    image_u0 = None
    if spec.graph.file is not None:
        parsed = parse_graph_file(spec.graph.file)
        graph: MetricMeasureGraph = parsed.graph
        domain: Domain = parsed.domain or make_domain(graph, range(graph.num_vertices))
        file_f, file_u = parsed.boundary_data, parsed.vertex_field
    else:
        generated = generate(spec.graph.generator, **spec.graph.params)
        graph, domain, image_u0 = generated.graph, generated.domain, generated.u0
    if spec.interior is not None:
        domain = make_domain(graph, spec.interior)

    u0 = _initial_datum(spec.u0, domain, file_u, image_u0)

    if spec.bc == "neumann":
        bc = BoundaryCondition.neumann()
    elif spec.bc == "whole":
        bc = BoundaryCondition.whole_space()
    elif spec.boundary_from_trace:
        bc = BoundaryCondition.dirichlet(trace(domain, u0))
    elif spec.boundary_file is not None:
        bc = BoundaryCondition.dirichlet(read_boundary_data(spec.boundary_file, domain))
    elif spec.boundary_value is not None:
        bc = BoundaryCondition.dirichlet(domain.boundary_data(spec.boundary_value))
    else:
        bc = BoundaryCondition.dirichlet(file_f)
    bc.validate(domain)
    return domain, bc, u0


def _initial_datum(
    datum: InitialDatum,
    domain: Domain,
    file_u: Optional[VertexField],
    image_u0: Optional[VertexField],
) -> VertexField:
    n = domain.num_interior
    if datum.kind == "file":
        return read_vertex_field(datum.file, domain)
    if datum.kind == "constant":
        if file_u is not None:
            return file_u
        return np.full(n, datum.value)
    if datum.kind == "indicator":
        u = np.zeros(n)
        for v in datum.vertices:
            if v not in domain.local_index:
                raise ValueError(f"indicator vertex {v} is not interior")
            u[domain.local_index[v]] = datum.value
        return u
    if datum.kind == "noise":
        rng = np.random.default_rng(datum.seed)
        return datum.value * rng.uniform(-1.0, 1.0, size=n)
    if datum.kind == "values":
        return domain.vertex_field(datum.values)
    if image_u0 is None:
        raise ValueError("'image' initial data needs a from_image graph")
    return image_u0


# ==================== Run ====================
def _flow_checks(spec: ExperimentSpec, trajectory: FlowTrajectory, domain: Domain, u0: VertexField) -> List[CheckReport]:
    reports = []
    dirichlet = trajectory.bc.is_dirichlet
    for name in spec.checks:
        if name == "entropy":
            reports.append(check_entropy(trajectory))
        elif name == "energy":
            reports.append(check_energy_dissipation(trajectory))
        elif name == "regularity" and not dirichlet:
            reports.append(check_regularity(trajectory))
        elif name == "mean" and not dirichlet:
            reports.append(check_mean_conservation(trajectory))
        elif name == "variational" and dirichlet:
            steady = trajectory.steady if trajectory.steady is not None else trajectory.states[-1]
            for label, test in (("u", np.array(trajectory.states)), ("u0", u0), ("steady", steady)):
                report = check_variational_consistency(domain, trajectory, test)
                report.name = f"variational[{label}]"
                reports.append(report)
        else:
            logger.warning(f"Check '{name}' does not apply to a {trajectory.bc.kind} trajectory, skipped")
    return reports


def _analyses(spec: ExperimentSpec, trajectory: FlowTrajectory, summary: Dict[str, Any]) -> List[CheckReport]:
    reports = []
    domain, bc = trajectory.domain, trajectory.bc
    bracket = None
    if {"extinction", "profile", "ground_state"} & set(spec.analyses):
        try:
            bracket = extinction_time(trajectory)
            summary["extinction_bracket"] = list(bracket.as_tuple())
            summary["extinction_estimate"] = extinction_estimate(trajectory, bracket)
        except NotReached as e:
            summary["extinction_bracket"] = None
            logger.warning(str(e))

    lambda1 = spec.lambda1
    if "lambda1" in spec.analyses:
        try:
            estimate = estimate_lambda1(domain, bc, spec.budget)
        except BudgetExceeded as e:
            estimate = e.best
            summary["lambda1_budget_exceeded"] = True
        summary["lambda1"] = estimate.to_dict()
        lambda1 = lambda1 or estimate.lambda1_upper

    if bracket is not None and "extinction" in spec.analyses and lambda1:
        reports.append(check_extinction_bound(trajectory, lambda1, bracket))

    if bracket is not None and bracket.t_hi > 0 and {"profile", "ground_state"} & set(spec.analyses):
        try:
            profile = asymptotic_profile(trajectory, bracket)
            summary["profile"] = profile.tolist()
            reports.append(check_profile_norm(trajectory, bracket))
            if "ground_state" in spec.analyses:
                t_ex = extinction_estimate(trajectory, bracket)
                reports.append(check_ground_state(domain, profile, t_ex, bc, lambda1=lambda1, budget=spec.budget))
        except NotExtinct as e:
            logger.warning(str(e))
    return reports


def run_experiment(spec: ExperimentSpec, output_dir: Optional[Path] = None) -> ExperimentResult:
    """Run one experiment and write its artifacts.

    Returns:
        ExperimentResult whose status is ``failed`` when a certified check fails
        or a solve does not converge, ``error`` on invalid input.
    """
    out = Path(output_dir or spec.output_dir or get_settings().get_output_path()) / spec.name
    result = ExperimentResult(name=spec.name, status="success")
    summary: Dict[str, Any] = {"name": spec.name, "bc": spec.bc, "tau": spec.tau, "horizon": spec.horizon}
    reports: List[CheckReport] = []
    logger.info(f"Experiment '{spec.name}' -> {out}")

    try:
        domain, bc, u0 = build_setup(spec)
        summary["vertices"] = domain.num_interior
        summary["boundary_elements"] = domain.num_boundary

        if "resolvent" in spec.tasks:
            problem = ResolventProblem(domain, u0, spec.lam, bc)
            certificate = solve_resolvent(problem, tol=spec.tol, max_iters=spec.max_iters)
            result.outputs.append(write_csv(resolvent_frame(problem, certificate), out / "resolvent.csv"))
            summary["resolvent"] = {
                "lambda": spec.lam,
                "gap": certificate.gap,
                "iterations": certificate.iterations,
                "certificate": certificate.condition_report.to_dict(),
            }
            if not certificate.condition_report.passed:
                result.status = "failed"

        if "flow" in spec.tasks:
            trajectory = evolve(domain, u0, bc, spec.tau, spec.horizon, tol=spec.tol)
            result.outputs.append(write_trajectory_csv(trajectory, out / "trajectory.csv"))
            failed_steps = [
                n for n, c in enumerate(trajectory.certificates, start=1) if not c.condition_report.passed
            ]
            summary["flow"] = {
                "steps": trajectory.num_steps,
                "final_time": trajectory.final_time,
                "settled": trajectory.settled,
                "uncertified_steps": failed_steps,
            }
            if failed_steps:
                result.status = "failed"
            reports += _flow_checks(spec, trajectory, domain, u0)
            reports += _analyses(spec, trajectory, summary)

    except NotConverged as e:
        logger.error(f"Experiment '{spec.name}': {e}")
        result.status = "failed"
        result.errors.append(str(e))
        if e.trajectory is not None and e.trajectory.num_steps:
            result.outputs.append(write_trajectory_csv(e.trajectory, out / "trajectory.partial.csv"))
    except (ValueError, OSError) as e:
        logger.error(f"Experiment '{spec.name}' rejected: {e}")
        result.status = "error"
        result.errors.append(str(e))

    if reports:
        result.outputs.append(write_csv(reports_frame(reports), out / "checks.csv"))
        summary["checks"] = {r.name: r.to_dict() for r in reports}
        if not all(r.passed for r in reports):
            result.status = "failed" if result.status == "success" else result.status
    summary["status"] = result.status
    summary["errors"] = list(result.errors)
    result.summary = summary
    result.outputs.append(write_summary(summary, out / "summary.json"))
    logger.info(f"Experiment '{spec.name}' finished: {result.status}")
    return result


# ==================== Batch ====================
def load_specs(path: Path) -> List[ExperimentSpec]:
    """Load experiment specs from a YAML list or a mapping with an 'experiments' key."""
    with open(path, "r", encoding="utf-8") as f:
        data = yaml.safe_load(f)
    entries = data.get("experiments", []) if isinstance(data, dict) else data
    if not isinstance(entries, list):
        raise ValueError(f"{path}: expected a list of experiments")
    return [ExperimentSpec.model_validate(entry) for entry in entries]


def run_batch(
    specs: List[ExperimentSpec],
    threads: Optional[int] = None,
    output_dir: Optional[Path] = None,
) -> List[ExperimentResult]:
    """Run experiments concurrently; results keep the order of ``specs``."""
    threads = positive_setting(threads, "threads")
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ValueError("experiment names must be unique within a batch")

    results: Dict[int, ExperimentResult] = {}
    if threads <= 1:
        for i, spec in enumerate(tqdm(specs, desc="Experiments")):
            results[i] = run_experiment(spec, output_dir)
    else:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            future_to_index = {executor.submit(run_experiment, spec, output_dir): i for i, spec in enumerate(specs)}
            with tqdm(total=len(specs), desc="Experiments") as pbar:
                for future in as_completed(future_to_index):
                    results[future_to_index[future]] = future.result()
                    pbar.update(1)

    ordered = [results[i] for i in range(len(specs))]
    failed = sum(r.exit_code != 0 for r in ordered)
    logger.info(f"Batch finished: {len(ordered) - failed} succeeded, {failed} failed")
    return ordered
