"""
Self-test suites behind ``tvflow selftest``.

- gauss_green: the discrete Gauss-Green identity on random domains.
- oracle: solve_resolvent against an independent primal minimiser on domains
  with at most three interior vertices.
- fixtures: closed-form resolvents, flows, quotients and lambda_1 values from
  config/fixtures.yaml.
"""

import math
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import yaml
from loguru import logger

from config.settings import get_settings
from src.analysis.asymptotics import asymptotic_profile, estimate_lambda1, rayleigh_quotient
from src.core.calculus import BoundaryCondition, edge_field, gauss_green_terms
from src.core.reports import CheckReport
from src.core.space import Domain, build_graph, make_domain
from src.ingestion.generators import random_domain
from src.solvers.flow import evolve, extinction_time
from src.solvers.resolvent import ResolventProblem, dual_objective, primal_objective, solve_resolvent

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


# ==================== Gauss-Green ====================
def gauss_green_suite(count: int = 100, seed: int = 0, max_vertices: int = 50) -> CheckReport:
    """|volume + pairing + boundary| <= 1e-12 * sum of |terms| on random domains and fields."""
    rng = np.random.default_rng(seed)
    residuals = []
    for _ in range(count):
        domain = random_domain(rng, max_vertices=max_vertices).domain
        u = rng.uniform(-10.0, 10.0, size=domain.num_interior)
        X = edge_field(
            domain,
            rng.uniform(-1.0, 1.0, size=domain.num_interior_edges),
            rng.uniform(-1.0, 1.0, size=domain.num_boundary),
        )
        terms = gauss_green_terms(domain, u, X)
        scale = sum(abs(t) for t in terms)
        residuals.append(abs(sum(terms)) - 1e-12 * scale)
    return CheckReport(
        name="gauss_green",
        passed=all(r <= 0.0 for r in residuals),
        residuals=residuals,
        details={"count": count, "seed": seed},
    )


# ==================== Primal oracle ====================
def _coordinate_minimizer(nu: float, g: float, lam: float, anchors: List[float], weights: List[float]) -> float:
    """argmin_x 1/2 nu (x - g)^2 + lam * sum_k a_k |x - c_k|, exactly."""
    candidates = list(anchors)
    points = sorted(set(anchors))
    bounds = [-math.inf] + points + [math.inf]
    for lo, hi in zip(bounds, bounds[1:]):
        if math.isfinite(lo) and math.isfinite(hi):
            inner = 0.5 * (lo + hi)
        elif math.isfinite(hi):
            inner = hi - 1.0
        elif math.isfinite(lo):
            inner = lo + 1.0
        else:
            inner = 0.0
        slope = sum(a * math.copysign(1.0, inner - c) for a, c in zip(weights, anchors))
        x = g - lam * slope / nu
        if lo <= x <= hi:
            candidates.append(x)
    candidates.append(g)

    def h(x: float) -> float:
        return 0.5 * nu * (x - g) ** 2 + lam * sum(a * abs(x - c) for a, c in zip(weights, anchors))

    return min(candidates, key=h)


def brute_force_resolvent(problem: ResolventProblem, iterations: int = 70) -> np.ndarray:
    """Primal minimiser by nested golden-section search, innermost coordinate exact.

    Only for domains with at most three interior vertices.
    """
    domain = problem.domain
    n = domain.num_interior
    if n > 3:
        raise ValueError("brute-force oracle supports at most three interior vertices")
    g, lam, nu = problem.g, problem.lam, domain.measure
    f = problem.bc.data(domain) if problem.bc.is_dirichlet else np.zeros(0)
    tails, heads, w = domain.edge_tails, domain.edge_heads, domain.interior_weights

    values = np.concatenate([g, f])
    lo, hi = float(values.min()) - 1e-9, float(values.max()) + 1e-9

    def primal(u: np.ndarray) -> float:
        tv = float(np.dot(w, np.abs(u[heads] - u[tails])))
        if f.size:
            tv += float(np.dot(domain.perimeter, np.abs(u[domain.boundary_tails] - f)))
        return lam * tv + 0.5 * float(np.dot(nu, (u - g) ** 2))

    def settle_last(u: np.ndarray) -> None:
        k = n - 1
        anchors, weights = [], []
        for e in range(domain.num_interior_edges):
            if tails[e] == k:
                anchors.append(float(u[heads[e]]))
                weights.append(float(w[e]))
            elif heads[e] == k:
                anchors.append(float(u[tails[e]]))
                weights.append(float(w[e]))
        if f.size:
            for b in np.flatnonzero(domain.boundary_tails == k):
                anchors.append(float(f[b]))
                weights.append(float(domain.perimeter[b]))
        u[k] = _coordinate_minimizer(float(nu[k]), float(g[k]), lam, anchors, weights)

    def solve(u: np.ndarray, level: int) -> float:
        if level == n - 1:
            settle_last(u)
            return primal(u)

        def phi(x: float) -> float:
            u[level] = x
            return solve(u, level + 1)

        a, b = lo, hi
        c, d = b - _GOLDEN * (b - a), a + _GOLDEN * (b - a)
        fc, fd = phi(c), phi(d)
        for _ in range(iterations):
            if fc <= fd:
                b, d, fd = d, c, fc
                c = b - _GOLDEN * (b - a)
                fc = phi(c)
            else:
                a, c, fc = c, d, fd
                d = a + _GOLDEN * (b - a)
                fd = phi(d)
        return phi(0.5 * (a + b))

    u = g.copy()
    solve(u, 0)
    return u


def _oracle_domain(rng: np.random.Generator) -> Domain:
    generated = random_domain(rng, max_vertices=5, edge_probability=0.6, max_interior=3)
    return generated.domain


def oracle_suite(count: int = 200, seed: int = 0, tol: float = 1e-10) -> CheckReport:
    """||u - u_oracle||_inf <= 1e-4 and gap <= 1e-8 on random small problems."""
    rng = np.random.default_rng(seed)
    residuals, gaps = [], []
    for i in range(count):
        domain = _oracle_domain(rng)
        g = rng.uniform(-5.0, 5.0, size=domain.num_interior)
        lam = float(rng.uniform(0.05, 2.0))
        if domain.num_boundary and i % 2 == 0:
            bc = BoundaryCondition.dirichlet(rng.uniform(-5.0, 5.0, size=domain.num_boundary))
        else:
            bc = BoundaryCondition.neumann()
        problem = ResolventProblem(domain, g, lam, bc)
        # absolute gap <= tol, since P(u) <= P(g) at the stopping iterate
        certificate = solve_resolvent(problem, tol=tol / (1.0 + primal_objective(problem, g)))
        oracle = brute_force_resolvent(problem)
        residuals.append(float(np.max(np.abs(certificate.u - oracle))) - 1e-4)
        gaps.append(certificate.gap)
    return CheckReport(
        name="resolvent_oracle",
        passed=all(r <= 0.0 for r in residuals) and all(gap <= 1e-8 for gap in gaps),
        residuals=residuals,
        details={"count": count, "seed": seed, "max_gap": max(gaps, default=0.0)},
    )


# ==================== Fixtures ====================
def load_fixtures(path: Optional[Path] = None) -> Dict[str, Any]:
    path = Path(path) if path else get_settings().get_fixtures_path()
    with open(path, "r", encoding="utf-8") as f:
        return yaml.safe_load(f)


def _fixture_setup(fixtures: Dict[str, Any], entry: Dict[str, Any]):
    spec = fixtures["graphs"][entry["graph"]]
    graph = build_graph(spec["measures"], [tuple(e) for e in spec["edges"]])
    domain = make_domain(graph, spec["interior"])
    if entry["bc"] == "dirichlet":
        bc = BoundaryCondition.dirichlet(domain.boundary_data(float(entry.get("f", 0.0))))
    elif entry["bc"] == "whole":
        bc = BoundaryCondition.whole_space()
    else:
        bc = BoundaryCondition.neumann()
    return domain, bc


def fixture_suite(path: Optional[Path] = None, tol: float = 1e-6) -> CheckReport:
    """Compare every fixture with its derived value; residual is the absolute error minus tol."""
    fixtures = load_fixtures(path)
    residuals, labels = [], []

    def record(label: str, error: float) -> None:
        labels.append(label)
        residuals.append(error - tol)
        if error > tol:
            logger.warning(f"Fixture {label}: error {error:.3e}")

    for i, entry in enumerate(fixtures.get("resolvent", [])):
        domain, bc = _fixture_setup(fixtures, entry)
        problem = ResolventProblem(domain, entry["g"], entry["lam"], bc)
        certificate = solve_resolvent(problem)
        record(f"resolvent[{i}].u", float(np.max(np.abs(certificate.u - np.array(entry["u"])))))
        if "v" in entry:
            record(f"resolvent[{i}].v", float(np.max(np.abs(certificate.v - np.array(entry["v"])))))
        if "dual" in entry:
            record(f"resolvent[{i}].dual", abs(dual_objective(problem, certificate.Y) - entry["dual"]))
        record(f"resolvent[{i}].certificate", 0.0 if certificate.condition_report.passed else math.inf)

    for i, entry in enumerate(fixtures.get("flow", [])):
        domain, bc = _fixture_setup(fixtures, entry)
        trajectory = evolve(domain, entry["u0"], bc, entry["tau"], entry["horizon"])
        bracket = extinction_time(trajectory)
        inside = bracket.contains(entry["extinction"]) and bracket.width <= entry["tau"] * (1.0 + 1e-12)
        record(f"flow[{i}].extinction", 0.0 if inside else math.inf)
        if "profile" in entry:
            profile = asymptotic_profile(trajectory, bracket)
            record(f"flow[{i}].profile", float(np.max(np.abs(profile - np.array(entry["profile"])))))

    for i, entry in enumerate(fixtures.get("rayleigh", [])):
        domain, bc = _fixture_setup(fixtures, entry)
        record(f"rayleigh[{i}]", abs(rayleigh_quotient(domain, np.array(entry["u"], dtype=float), bc) - entry["value"]))

    for i, entry in enumerate(fixtures.get("lambda1", [])):
        domain, bc = _fixture_setup(fixtures, entry)
        record(f"lambda1[{i}]", abs(estimate_lambda1(domain, bc).lambda1_upper - entry["value"]))

    return CheckReport(
        name="fixtures",
        passed=all(r <= 0.0 for r in residuals),
        slack=tol,
        residuals=residuals,
        details={"labels": labels},
    )


def run_selftest(quick: bool = False, seed: int = 0) -> List[CheckReport]:
    """All suites; ``quick`` shrinks the random suites."""
    reports = [
        gauss_green_suite(count=20 if quick else 100, seed=seed),
        oracle_suite(count=20 if quick else 200, seed=seed),
        fixture_suite(),
    ]
    for report in reports:
        logger.info(f"selftest {report.name}: {report.status}")
    return reports
