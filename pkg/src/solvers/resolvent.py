"""
Resolvent solver for the total variation operator.

Solves u + lambda * dTV(u) containing g by maximising the dual

    D(Y) = 1/2 ||g||^2 - 1/2 ||g + div0 Y||^2 - sum_beta w_beta f(beta) (Y . nu)^-(beta)

over edge fields with ||Y||_inf <= lambda (Y = 0 on boundary elements unless the
condition is Dirichlet), then recovers u = g + div0 Y. The certificate field is
X = Y / lambda.
"""

from dataclasses import dataclass, field
from typing import Dict, Literal, Optional, Sequence

import numpy as np
from loguru import logger

from config.settings import get_settings, positive_setting
from src.core.calculus import (
    BoundaryCondition,
    EdgeField,
    differential,
    divergence0,
    edge_field,
    normal_trace,
    pairing,
    total_variation,
    truncate,
    variational_inequality_residual,
)
from src.core.errors import InfeasibleDual, NotConverged
from src.core.space import Domain, VertexField, trace

CertificateMode = Literal["weak", "entropy"]


@dataclass(frozen=True, eq=False)
class ResolventProblem:
    """Range condition u + lambda * A(u) containing g."""

    domain: Domain
    g: VertexField
    lam: float
    bc: BoundaryCondition

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam!r}")
        self.bc.validate(self.domain)
        object.__setattr__(self, "g", self.domain.check_vertex_field(np.array(self.g, dtype=float)))

    @property
    def optimizes_boundary(self) -> bool:
        return self.bc.is_dirichlet and self.domain.num_boundary > 0


@dataclass
class ConditionReport:
    """Residuals of the subdifferential characterisation for a pair (u, v) and field X."""

    mode: CertificateMode
    tol: float
    divergence_residual: float
    pairing_saturation: float
    boundary_residual: float
    sup_norm_excess: float
    entropy_residuals: Dict[float, float] = field(default_factory=dict)
    variational_residuals: Dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        checks = [
            self.divergence_residual,
            abs(self.pairing_saturation),
            self.boundary_residual,
            self.sup_norm_excess,
        ]
        checks.extend(abs(r) for r in self.entropy_residuals.values())
        return all(r <= self.tol for r in checks)

    def to_dict(self) -> Dict[str, object]:
        return {
            "mode": self.mode,
            "passed": self.passed,
            "tol": self.tol,
            "divergence_residual": self.divergence_residual,
            "pairing_saturation": self.pairing_saturation,
            "boundary_residual": self.boundary_residual,
            "sup_norm_excess": self.sup_norm_excess,
            "entropy_residuals": {str(k): r for k, r in self.entropy_residuals.items()},
            "variational_residuals": dict(self.variational_residuals),
        }


@dataclass(eq=False)
class ResolventCertificate:
    """Optimal pair (u, v) with dual field Y and its diagnostics."""

    u: VertexField
    v: VertexField
    Y: EdgeField
    lam: float
    gap: float
    iterations: int
    condition_report: Optional[ConditionReport] = None
    converged: bool = True

    @property
    def X(self) -> EdgeField:
        """Normalised certificate field, ||X||_inf <= 1."""
        return self.Y.scaled(1.0 / self.lam).clamped(1.0)


# ==================== Objectives ====================
def primal_objective(problem: ResolventProblem, u: VertexField) -> float:
    """P(u) = lambda TV_bc(u) + 1/2 ||u - g||^2_nu."""
    domain = problem.domain
    r = u - problem.g
    return problem.lam * total_variation(domain, u, problem.bc) + 0.5 * float(np.dot(domain.measure, r * r))


def dual_objective(problem: ResolventProblem, Y: EdgeField) -> float:
    domain = problem.domain
    g = problem.g
    u = g + divergence0(domain, Y)
    value = 0.5 * float(np.dot(domain.measure, g * g)) - 0.5 * float(np.dot(domain.measure, u * u))
    if problem.bc.is_dirichlet:
        f = problem.bc.data(domain)
        value -= float(np.dot(domain.perimeter * f, normal_trace(domain, Y)))
    return value


def duality_gap(problem: ResolventProblem, u: VertexField, Y: EdgeField) -> float:
    """P(u) - D(Y) for a dual-feasible Y.

    Raises:
        InfeasibleDual: If ||Y||_inf > lambda (1 + 1e-12) or Y charges the boundary
            under a non-Dirichlet condition.
    """
    bound = problem.lam * (1.0 + 1e-12)
    if Y.sup_norm > bound:
        raise InfeasibleDual(f"||Y||_inf = {Y.sup_norm!r} exceeds lambda = {problem.lam!r}")
    if not problem.bc.is_dirichlet and np.any(Y.boundary != 0):
        raise InfeasibleDual(f"Y is nonzero on boundary elements under a {problem.bc.kind} condition")
    return primal_objective(problem, u) - dual_objective(problem, Y)


# ==================== Solver ====================
def estimate_lipschitz(
    flux: "np.ndarray",
    measure: np.ndarray,
    iterations: int,
    safety: float,
) -> float:
    """Upper estimate of ||nu^{-1/2} M||^2 by power iteration on M^T nu^{-1} M."""
    p = flux.shape[1]
    if p == 0:
        return 0.0
    x = np.random.default_rng(0).standard_normal(p)
    x /= np.linalg.norm(x)
    estimate = 0.0
    for _ in range(iterations):
        y = flux.T @ ((flux @ x) / measure)
        estimate = float(np.linalg.norm(y))
        if estimate == 0.0:
            return 0.0
        x = y / estimate
    return safety * estimate


def _saturation_gap(
    lam: float,
    weights: np.ndarray,
    du: np.ndarray,
    y_interior: np.ndarray,
    perimeter: np.ndarray,
    boundary_jump: np.ndarray,
    y_boundary: np.ndarray,
) -> float:
    """P(u) - D(Y) at u = g + div0 Y, written as a sum of nonnegative terms."""
    gap = float(np.dot(weights, lam * np.abs(du) - y_interior * du))
    if perimeter.size:
        gap += float(np.dot(perimeter, lam * np.abs(boundary_jump) + y_boundary * boundary_jump))
    return gap


def solve_resolvent(
    problem: ResolventProblem,
    tol: Optional[float] = None,
    max_iters: Optional[int] = None,
    warm_start: Optional[EdgeField] = None,
    k_grid: Optional[Sequence[float]] = None,
) -> ResolventCertificate:
    """Compute J_lambda(g) with a duality certificate.

    Args:
        problem: The resolvent problem.
        tol: Relative gap tolerance; stops when gap <= tol (1 + |P(u)|). Defaults to settings.
        max_iters: Iteration cap. Defaults to settings.
        warm_start: Initial dual field Y (clipped to the box).
        k_grid: Truncation levels for an entropy-mode report; weak mode if None.

    Returns:
        ResolventCertificate with its condition report.

    Raises:
        NotConverged: If max_iters is reached with the gap above tolerance.
    """
    settings = get_settings()
    tol = positive_setting(tol, "solver_tol", "tol")
    max_iters = positive_setting(max_iters, "solver_max_iters", "max_iters")

    domain = problem.domain
    lam = problem.lam
    g = problem.g
    nu = domain.measure
    k = domain.num_interior_edges
    use_boundary = problem.optimizes_boundary
    f = problem.bc.data(domain) if problem.bc.is_dirichlet else np.zeros(domain.num_boundary)

    flux = domain.flux_matrix if use_boundary else domain.flux_matrix[:, :k]
    grad = domain.gradient_matrix
    bmat = domain.boundary_matrix
    weights = domain.interior_weights
    perimeter = domain.perimeter
    linear = np.concatenate([np.zeros(k), perimeter * f]) if use_boundary else np.zeros(k)

    def recover(y: np.ndarray) -> np.ndarray:
        return g + (flux @ y) / nu

    def objective(y: np.ndarray, u: np.ndarray) -> float:
        # 1/2 ||g||^2 - D(Y)
        return 0.5 * float(np.dot(nu, u * u)) - float(np.dot(linear, y))

    def gap_of(y: np.ndarray, u: np.ndarray) -> float:
        du = grad @ u
        if use_boundary:
            jump = bmat @ u - f
            return _saturation_gap(lam, weights, du, y[:k], perimeter, jump, y[k:])
        return _saturation_gap(lam, weights, du, y, np.zeros(0), np.zeros(0), np.zeros(0))

    size = flux.shape[1]
    if warm_start is not None:
        start = warm_start.stacked() if use_boundary else warm_start.interior
        y = np.clip(np.asarray(start, dtype=float).copy(), -lam, lam)
    else:
        y = np.zeros(size)

    u = recover(y)
    gap = gap_of(y, u)
    primal = primal_objective(problem, u)
    iterations = 0

    if size > 0 and gap > tol * (1.0 + abs(primal)):
        L = estimate_lipschitz(flux, nu, settings.power_iterations, settings.lipschitz_safety)
        logger.debug(f"Resolvent: n={domain.num_interior}, dual size={size}, L={L:.4e}, lambda={lam}")

        z, u_z = y.copy(), u.copy()
        t = 1.0
        current = objective(y, u)
        best_gap, best_y = gap, y.copy()
        momentum = False

        while iterations < max_iters:
            iterations += 1
            step = flux.T @ u_z - linear
            y_new = np.clip(z - step / L, -lam, lam)
            u_new = recover(y_new)
            candidate = objective(y_new, u_new)

            if candidate > current + 1e-14 * max(1.0, abs(current)):
                if momentum:
                    # non-monotone: drop the momentum and redo from y
                    z, u_z, t, momentum = y.copy(), u.copy(), 1.0, False
                    continue
                L *= 2.0
                logger.warning(f"Resolvent: plain step increased the objective, raising L to {L:.4e}")
                continue

            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            beta = (t - 1.0) / t_new
            z = y_new + beta * (y_new - y)
            u_z = u_new + beta * (u_new - u)
            momentum = beta > 0
            y, u, t, current = y_new, u_new, t_new, candidate

            gap = gap_of(y, u)
            if gap < best_gap:
                best_gap, best_y = gap, y.copy()
            primal = primal_objective(problem, u)
            if gap <= tol * (1.0 + abs(primal)):
                break
        else:
            certificate = _certificate(problem, best_y, best_gap, iterations, converged=False, k_grid=k_grid)
            logger.warning(f"Resolvent did not converge: gap={best_gap:.3e} after {iterations} iterations")
            raise NotConverged(best_gap, iterations, certificate)

    certificate = _certificate(problem, y, max(gap, 0.0), iterations, converged=True, k_grid=k_grid)
    logger.debug(f"Resolvent converged in {iterations} iterations, gap={certificate.gap:.3e}")
    return certificate


def _certificate(
    problem: ResolventProblem,
    y: np.ndarray,
    gap: float,
    iterations: int,
    converged: bool,
    k_grid: Optional[Sequence[float]],
) -> ResolventCertificate:
    domain = problem.domain
    k = domain.num_interior_edges
    if problem.optimizes_boundary:
        Y = edge_field(domain, y[:k], y[k:])
    else:
        Y = edge_field(domain, y[:k], np.zeros(domain.num_boundary))
    Y = Y.clamped(problem.lam)
    u = problem.g + divergence0(domain, Y)
    v = (problem.g - u) / problem.lam
    certificate = ResolventCertificate(u=u, v=v, Y=Y, lam=problem.lam, gap=gap, iterations=iterations, converged=converged)
    mode: CertificateMode = "entropy" if k_grid is not None else "weak"
    certificate.condition_report = verify_certificate(domain, u, v, certificate.X, problem.bc, mode=mode, k_grid=k_grid)
    return certificate


# ==================== Certificates ====================
def _boundary_saturation(perimeter: np.ndarray, nt: np.ndarray, jump: np.ndarray, zero_tol: float) -> float:
    """sum w_beta (|j| - nt j): zero iff nt lies in sign(j) wherever |nt| <= 1."""
    jump = np.where(np.abs(jump) <= zero_tol, 0.0, jump)
    return float(np.dot(perimeter, np.abs(jump) - nt * jump))


def entropy_k_grid(u0: VertexField, size: Optional[int] = None) -> list:
    """Quantiles of |u0| plus ||u0||_inf, positive and distinct."""
    size = positive_setting(size, "entropy_grid_size", "size")
    magnitude = np.abs(np.asarray(u0, dtype=float))
    top = float(magnitude.max()) if magnitude.size else 0.0
    if top <= 0:
        return [1.0]
    levels = np.linspace(0.0, 1.0, size + 1)[1:-1]
    grid = [float(q) for q in np.quantile(magnitude, levels)] + [top]
    return sorted({k for k in grid if k > 0})


def verify_certificate(
    domain: Domain,
    u: VertexField,
    v: VertexField,
    X: EdgeField,
    bc: BoundaryCondition,
    mode: CertificateMode = "weak",
    k_grid: Optional[Sequence[float]] = None,
    tol: Optional[float] = None,
    sign_zero_tol: Optional[float] = None,
) -> ConditionReport:
    """Check -div0 X = v, (X, Du) = |Du|, and the boundary condition for X.

    In entropy mode the pairing saturation is additionally checked on T_k u for
    every k in ``k_grid``. Never raises for a failed check.
    """
    settings = get_settings()
    tol = positive_setting(tol, "certificate_tol", "tol")
    zero_tol = settings.sign_zero_tol if sign_zero_tol is None else sign_zero_tol
    u = domain.check_vertex_field(u)
    v = np.asarray(v, dtype=float)

    div = divergence0(domain, X)
    divergence_residual = float(np.max(np.abs(div + v))) if div.size else 0.0

    du = differential(domain, u).interior
    saturation = float(np.dot(domain.interior_weights, np.abs(du))) - pairing(domain, X, u).total

    nt = normal_trace(domain, X)
    if not nt.size:
        boundary_residual = 0.0
    elif bc.is_dirichlet:
        jump = trace(domain, u) - bc.data(domain)
        boundary_residual = _boundary_saturation(domain.perimeter, nt, jump, zero_tol)
    else:
        boundary_residual = float(np.max(np.abs(nt)))

    entropy_residuals: Dict[float, float] = {}
    if mode == "entropy":
        for level in (k_grid if k_grid is not None else entropy_k_grid(u)):
            tu = truncate(u, level)
            dtu = differential(domain, tu).interior
            entropy_residuals[float(level)] = (
                float(np.dot(domain.interior_weights, np.abs(dtu))) - pairing(domain, X, tu).total
            )

    variational_residuals = {
        name: variational_inequality_residual(domain, u, v, X, w, bc)
        for name, w in (("w=0", np.zeros_like(u)), ("w=2u", 2.0 * u))
    }

    report = ConditionReport(
        mode=mode,
        tol=tol,
        divergence_residual=divergence_residual,
        pairing_saturation=saturation,
        boundary_residual=boundary_residual,
        sup_norm_excess=max(0.0, X.sup_norm - 1.0),
        entropy_residuals=entropy_residuals,
        variational_residuals=variational_residuals,
    )
    if not report.passed:
        logger.debug(f"Certificate check failed: {report.to_dict()}")
    return report
