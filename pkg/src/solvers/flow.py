"""
Implicit Euler evolution of the total variation flow.

Each step solves u_n = J_tau(u_{n-1}) with a duality certificate, so the
inclusion -v_n in dTV(u_n) with v_n = (u_{n-1} - u_n) / tau is certified along
the whole trajectory. The module also holds the trajectory-level checkers:
extinction, comparison, contraction, regularity, energy dissipation, mean
conservation, entropy conditions and variational consistency.
"""

import math
from dataclasses import dataclass, field
from typing import List, Literal, Optional, Sequence, Union

import numpy as np
from loguru import logger
from tqdm import tqdm

from config.settings import get_settings, positive_setting
from src.core.calculus import (
    BoundaryCondition,
    EdgeField,
    component_means,
    lp_norm,
    positive_part,
    total_variation,
)
from src.core.errors import GridMismatch, NotConverged, NotReached
from src.core.reports import CheckReport
from src.core.space import Domain, VertexField, trace
from src.solvers.resolvent import (
    ResolventCertificate,
    ResolventProblem,
    entropy_k_grid,
    solve_resolvent,
    verify_certificate,
)

StepSpec = Union[float, Sequence[float]]
Quadrature = Literal["trapezoid", "backward"]

_TIME_MATCH = 1e-12


@dataclass(frozen=True)
class ExtinctionBracket:
    """Closed interval [t_lo, t_hi] containing the extinction time."""

    t_lo: float
    t_hi: float

    @property
    def width(self) -> float:
        return self.t_hi - self.t_lo

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.t_lo + self.t_hi)

    def contains(self, t: float) -> bool:
        return self.t_lo <= t <= self.t_hi

    def as_tuple(self):
        return (self.t_lo, self.t_hi)


@dataclass(eq=False)
class FlowTrajectory:
    """Discrete trajectory t_0 = 0 < t_1 < ... with one certificate per step.

    ``certificates[n - 1]`` certifies the step from t_{n-1} to t_n. When the flow
    settles before the horizon the final state is held up to ``horizon``.
    """

    domain: Domain
    bc: BoundaryCondition
    times: List[float]
    states: List[VertexField]
    certificates: List[ResolventCertificate] = field(default_factory=list)
    horizon: float = 0.0
    settled: bool = False
    steady: Optional[VertexField] = None
    tol: float = 0.0
    extinction: Optional[ExtinctionBracket] = None

    @property
    def u0(self) -> VertexField:
        return self.states[0]

    @property
    def num_steps(self) -> int:
        return len(self.times) - 1

    @property
    def final_time(self) -> float:
        return self.times[-1]

    def step_size(self, n: int) -> float:
        return self.times[n] - self.times[n - 1]

    def velocity(self, n: int) -> VertexField:
        """v_n = (u_{n-1} - u_n) / tau_n, the certified element of dTV(u_n) with sign flipped."""
        return self.certificates[n - 1].v

    def field(self, n: int) -> EdgeField:
        return self.certificates[n - 1].X

    def index_of(self, t: float) -> Optional[int]:
        for n, s in enumerate(self.times):
            if abs(s - t) <= _TIME_MATCH * max(1.0, abs(t)):
                return n
        return None

    def state_at(self, t: float) -> VertexField:
        """State at a grid time, or the held final state after settling.

        Raises:
            ValueError: If t is neither a grid time nor covered by a settled tail.
        """
        n = self.index_of(t)
        if n is not None:
            return self.states[n]
        if self.settled and self.final_time < t <= self.horizon * (1.0 + _TIME_MATCH):
            return self.states[-1]
        raise ValueError(f"t={t} is not a time of this trajectory")


# ==================== Steady states ====================
def steady_state(domain: Domain, bc: BoundaryCondition, u0: VertexField) -> Optional[VertexField]:
    """Limit of the flow when it is known in closed form.

    Neumann and whole-space: nu-mean of u0 on each connected component.
    Dirichlet with constant data c: c on every component that touches the
    boundary and the nu-mean elsewhere. Otherwise None.
    """
    u0 = domain.check_vertex_field(u0)
    means = component_means(domain, u0)
    if not bc.is_dirichlet or domain.num_boundary == 0:
        return means
    f = bc.data(domain)
    if not np.all(f == f[0]):
        return None
    touching = np.zeros(domain.num_components, dtype=bool)
    touching[domain.component_labels[domain.boundary_tails]] = True
    return np.where(touching[domain.component_labels], float(f[0]), means)


def _time_grid(step: StepSpec, horizon: float) -> List[float]:
    if np.isscalar(step):
        tau = float(step)
        if not tau > 0:
            raise ValueError(f"Step size must be positive, got {tau!r}")
        count = int(math.ceil(horizon / tau - 1e-9))
        return [n * tau for n in range(count + 1)]
    schedule = [float(s) for s in step]
    if not schedule or any(not s > 0 for s in schedule):
        raise ValueError("Step schedule must be a non-empty sequence of positive sizes")
    times = [0.0]
    for n in range(1, len(schedule) + 1):
        times.append(math.fsum(schedule[:n]))
        if times[-1] >= horizon * (1.0 - 1e-12):
            break
    return times


# ==================== Evolution ====================
def evolve(
    domain: Domain,
    u0: VertexField,
    bc: BoundaryCondition,
    step: StepSpec,
    horizon: float,
    tol: Optional[float] = None,
    progress: bool = False,
) -> FlowTrajectory:
    """Run implicit Euler from u0 until the horizon or the steady state.

    Args:
        domain: Domain of the flow.
        u0: Initial datum.
        bc: Boundary condition.
        step: Uniform step tau, or a schedule of step sizes.
        horizon: Final time T.
        tol: Resolvent gap tolerance. Defaults to settings.solver_tol.
        progress: Show a tqdm progress bar over steps.

    Returns:
        FlowTrajectory with one certificate per step.

    Raises:
        NotConverged: If a resolvent solve fails; ``step`` holds the step index.
    """
    settings = get_settings()
    if not horizon > 0:
        raise ValueError(f"Horizon must be positive, got {horizon!r}")
    tol = positive_setting(tol, "solver_tol", "tol")
    bc.validate(domain)
    u0 = domain.check_vertex_field(np.array(u0, dtype=float))
    times = _time_grid(step, horizon)
    steady = steady_state(domain, bc, u0)
    settle_tol = settings.extinction_tol

    trajectory = FlowTrajectory(
        domain=domain, bc=bc, times=[0.0], states=[u0.copy()], horizon=horizon, steady=steady, tol=tol
    )
    logger.info(f"Flow: {bc.kind}, n={domain.num_interior}, steps<={len(times) - 1}, T={horizon}")

    if steady is not None and lp_norm(domain, u0 - steady) <= settle_tol:
        trajectory.settled = True
        logger.info("Flow: initial datum is already steady")
        return trajectory

    u = u0
    warm: Optional[EdgeField] = None
    for n in tqdm(range(1, len(times)), desc="flow", disable=not progress):
        tau = times[n] - times[n - 1]
        problem = ResolventProblem(domain, u, tau, bc)
        try:
            certificate = solve_resolvent(problem, tol=tol, warm_start=warm)
        except NotConverged as e:
            error = NotConverged(e.gap, e.iterations, e.certificate, step=n)
            error.trajectory = trajectory
            raise error from e

        if certificate.condition_report is not None and not certificate.condition_report.passed:
            logger.warning(f"Flow step {n}: certificate residuals above tolerance")

        trajectory.times.append(times[n])
        trajectory.states.append(certificate.u)
        trajectory.certificates.append(certificate)
        u = certificate.u
        warm = certificate.X.scaled(times[n + 1] - times[n]) if n + 1 < len(times) else None

        if steady is not None:
            done = lp_norm(domain, u - steady) <= settle_tol
        else:
            done = lp_norm(domain, certificate.v) <= settle_tol
        if done:
            trajectory.settled = True
            logger.info(f"Flow settled at t={times[n]} after {n} steps")
            break
    else:
        logger.info(f"Flow reached horizon T={horizon} after {len(times) - 1} steps")

    return trajectory


def extinction_time(trajectory: FlowTrajectory, tol: Optional[float] = None) -> ExtinctionBracket:
    """First bracket [t_{n-1}, t_n] with ||u(t_n) - steady||_{L2(nu)} <= tol.

    Without a closed-form steady state the bracket is the step where the
    trajectory settled at a fixed point.

    Raises:
        NotReached: If the trajectory does not reach its steady state.
    """
    tol = positive_setting(tol, "extinction_tol", "tol")
    domain = trajectory.domain
    if trajectory.steady is None:
        if not trajectory.settled:
            raise NotReached(trajectory.horizon)
        n = trajectory.num_steps
        bracket = ExtinctionBracket(trajectory.times[max(n - 1, 0)], trajectory.times[n])
    else:
        for n, u in enumerate(trajectory.states):
            if lp_norm(domain, u - trajectory.steady) <= tol:
                bracket = ExtinctionBracket(trajectory.times[max(n - 1, 0)], trajectory.times[n])
                break
        else:
            raise NotReached(trajectory.horizon)
    trajectory.extinction = bracket
    return bracket


# ==================== Pairwise checks ====================
def _aligned(traj1: FlowTrajectory, traj2: FlowTrajectory):
    """Common time grid of two trajectories, holding a settled tail.

    Raises:
        GridMismatch: If the grids disagree on their common prefix or the
            trajectories live on different domains.
    """
    if traj1.domain is not traj2.domain and (
        traj1.domain.num_interior != traj2.domain.num_interior
        or not np.array_equal(traj1.domain.interior, traj2.domain.interior)
    ):
        raise GridMismatch("Trajectories live on different domains")
    if traj1.bc.kind != traj2.bc.kind:
        raise GridMismatch(f"Boundary conditions differ: {traj1.bc.kind} vs {traj2.bc.kind}")
    short, long_ = (traj1, traj2) if len(traj1.times) <= len(traj2.times) else (traj2, traj1)
    for s, t in zip(short.times, long_.times):
        if abs(s - t) > _TIME_MATCH * max(1.0, abs(t)):
            raise GridMismatch(f"Time grids differ: {s} vs {t}")
    times = long_.times if short.settled else short.times
    states1 = [traj1.state_at(t) for t in times]
    states2 = [traj2.state_at(t) for t in times]
    return times, states1, states2


def check_comparison(
    traj1: FlowTrajectory,
    traj2: FlowTrajectory,
    q: float = 1,
    tol: Optional[float] = None,
) -> CheckReport:
    """||(u1(t) - u2(t))^+||_q <= ||(u1(0) - u2(0))^+||_q at every common grid time."""
    if q not in (1, 2, np.inf, float("inf")):
        raise ValueError(f"q must be 1, 2 or inf, got {q!r}")
    settings = get_settings()
    tol = positive_setting(tol, "certificate_tol", "tol")
    slack = settings.comparison_slack_factor * tol
    times, states1, states2 = _aligned(traj1, traj2)
    domain = traj1.domain

    bound = lp_norm(domain, positive_part(states1[0] - states2[0]), q)
    residuals = [lp_norm(domain, positive_part(a - b), q) - bound for a, b in zip(states1, states2)]
    return CheckReport(
        name="comparison",
        passed=all(r <= slack for r in residuals),
        slack=slack,
        times=list(times),
        residuals=residuals,
        details={"q": str(q), "initial": bound},
    )


def check_contraction(traj1: FlowTrajectory, traj2: FlowTrajectory, tol: Optional[float] = None) -> CheckReport:
    """||u1(t) - u2(t)||_{L2(nu)} is non-increasing in t."""
    settings = get_settings()
    tol = positive_setting(tol, "certificate_tol", "tol")
    slack = settings.comparison_slack_factor * tol
    times, states1, states2 = _aligned(traj1, traj2)
    distances = [lp_norm(traj1.domain, a - b) for a, b in zip(states1, states2)]
    residuals = [b - a for a, b in zip(distances, distances[1:])]
    return CheckReport(
        name="contraction",
        passed=all(r <= slack for r in residuals),
        slack=slack,
        times=list(times[1:]),
        residuals=residuals,
        details={"distances": distances},
    )


# ==================== Single-trajectory checks ====================
def check_regularity(
    trajectory: FlowTrajectory,
    min_steps: Optional[int] = None,
    atol: Optional[float] = None,
) -> CheckReport:
    """Smoothing estimates for the difference quotients q_n = (u_n - u_{n-1}) / tau_n.

    Checks ||q_n||_{L1(nu)} <= ||u0||_{L1(nu)} / t_n * (1 + 2 tau_n / t_n) at every
    step with t_n >= min_steps * tau_n and, when u0 >= 0, the pointwise bound
    q_n <= (u_n / t_n) * (1 + 2 tau_n / t_n) + atol.
    """
    if trajectory.bc.is_dirichlet:
        raise ValueError("Regularity estimates apply to Neumann and whole-space trajectories")
    settings = get_settings()
    min_steps = settings.regularity_min_steps if min_steps is None else min_steps
    atol = settings.certificate_tol if atol is None else atol
    domain = trajectory.domain
    l1_initial = lp_norm(domain, trajectory.u0, 1)
    nonnegative = bool(np.all(trajectory.u0 >= 0))

    times, residuals, pointwise, skipped = [], [], [], 0
    for n in range(1, trajectory.num_steps + 1):
        t, tau = trajectory.times[n], trajectory.step_size(n)
        if t < min_steps * tau * (1.0 - 1e-12):
            skipped += 1
            continue
        slack_factor = 1.0 + 2.0 * tau / t
        quotient = -trajectory.velocity(n)
        times.append(t)
        residuals.append(lp_norm(domain, quotient, 1) - l1_initial / t * slack_factor)
        if nonnegative:
            bound = trajectory.states[n] / t * slack_factor + atol
            pointwise.append(float(np.max(quotient - bound)))

    passed = all(r <= atol for r in residuals) and all(r <= 0.0 for r in pointwise)
    return CheckReport(
        name="regularity",
        passed=passed,
        slack=atol,
        times=times,
        residuals=residuals,
        details={"pointwise_residuals": pointwise, "nonnegative": nonnegative, "skipped_steps": skipped},
    )


def check_energy_dissipation(trajectory: FlowTrajectory, tol: Optional[float] = None) -> CheckReport:
    """1/2 ||u_n - u_{n-1}||^2 + tau TV(u_n) <= tau TV(u_{n-1}) at every step.

    u_{n-1} is a competitor in the minimisation that defines u_n.
    """
    tol = positive_setting(tol, "certificate_tol", "tol")
    domain, bc = trajectory.domain, trajectory.bc
    tv = [total_variation(domain, u, bc) for u in trajectory.states]
    residuals = []
    for n in range(1, trajectory.num_steps + 1):
        tau = trajectory.step_size(n)
        jump = lp_norm(domain, trajectory.states[n] - trajectory.states[n - 1])
        residuals.append(0.5 * jump * jump + tau * tv[n] - tau * tv[n - 1])
    monotone = all(b <= a + tol for a, b in zip(tv, tv[1:]))
    return CheckReport(
        name="energy_dissipation",
        passed=monotone and all(r <= tol for r in residuals),
        slack=tol,
        times=trajectory.times[1:],
        residuals=residuals,
        details={"total_variation": tv, "monotone": monotone},
    )


def check_mean_conservation(trajectory: FlowTrajectory, tol: float = 1e-9) -> CheckReport:
    """Sum of nu * u on each connected component stays at its initial value."""
    if trajectory.bc.is_dirichlet:
        raise ValueError("Mass is conserved only under Neumann and whole-space conditions")
    domain = trajectory.domain
    labels = domain.component_labels
    initial = np.bincount(labels, weights=domain.measure * trajectory.u0)
    residuals = [
        float(np.max(np.abs(np.bincount(labels, weights=domain.measure * u) - initial)))
        for u in trajectory.states[1:]
    ]
    return CheckReport(
        name="mean_conservation",
        passed=all(r <= tol for r in residuals),
        slack=tol,
        times=trajectory.times[1:],
        residuals=residuals,
        details={"components": int(domain.num_components), "initial_mass": initial.tolist()},
    )


def check_entropy(
    trajectory: FlowTrajectory,
    k_grid: Optional[Sequence[float]] = None,
    tol: Optional[float] = None,
) -> CheckReport:
    """Entropy conditions (X_n, D T_k u_n) = |D T_k u_n| at every step and level k."""
    tol = positive_setting(tol, "certificate_tol", "tol")
    grid = list(k_grid) if k_grid is not None else entropy_k_grid(trajectory.u0)
    domain, bc = trajectory.domain, trajectory.bc
    residuals, failed_steps = [], []
    for n in range(1, trajectory.num_steps + 1):
        report = verify_certificate(
            domain, trajectory.states[n], trajectory.velocity(n), trajectory.field(n), bc,
            mode="entropy", k_grid=grid, tol=tol,
        )
        worst = max(
            [report.divergence_residual, abs(report.pairing_saturation), report.boundary_residual]
            + [abs(r) for r in report.entropy_residuals.values()]
        )
        residuals.append(worst)
        if not report.passed:
            failed_steps.append(n)
    return CheckReport(
        name="entropy",
        passed=not failed_steps,
        slack=tol,
        times=trajectory.times[1:],
        residuals=residuals,
        details={"k_grid": grid, "failed_steps": failed_steps},
    )


def check_variational_consistency(
    domain: Domain,
    trajectory: FlowTrajectory,
    test: Union[VertexField, Sequence[VertexField]],
    quadrature: Quadrature = "trapezoid",
    slack_factor: Optional[float] = None,
) -> CheckReport:
    """Variational inequality for a Dirichlet trajectory against a test path v.

    LHS = int_0^T TV_f(u) dt
    RHS = int_0^T [int dv/dt (v - u) dnu + TV_f(v)] dt - 1/2 ||(v - u)(T)||^2 + 1/2 ||v(0) - u0||^2

    ``test`` is either one field (constant in time) or one field per grid time.
    Passes iff LHS <= RHS + slack_factor * tau * max(1, TV_f(u0), TV_f(v(0))).

    Raises:
        GridMismatch: If the test path is not on the trajectory's time grid.
        ValueError: If the trajectory is not Dirichlet with f = trace of u0.
    """
    bc = trajectory.bc
    if not bc.is_dirichlet:
        raise ValueError("Variational consistency is checked for Dirichlet trajectories")
    f = bc.data(domain)
    if f.size and np.max(np.abs(trace(domain, trajectory.u0) - f)) > 1e-12 * max(1.0, float(np.max(np.abs(f)))):
        raise ValueError("Boundary data must equal the trace of the initial datum")
    slack_factor = positive_setting(slack_factor, "variational_slack_factor", "slack_factor")

    count = len(trajectory.times)
    array = np.asarray(test, dtype=float)
    if array.ndim == 1:
        path = [domain.check_vertex_field(array)] * count
    elif array.shape[0] == count:
        path = [domain.check_vertex_field(v) for v in array]
    else:
        raise GridMismatch(f"Test path has {array.shape[0]} states, trajectory has {count} grid times")

    u = trajectory.states
    tv_u = [total_variation(domain, s, bc) for s in u]
    tv_v = [total_variation(domain, s, bc) for s in path]
    lhs = rhs = 0.0
    for n in range(1, count):
        tau = trajectory.step_size(n)
        dv = (path[n] - path[n - 1]) / tau
        gap_now = path[n] - u[n]
        if quadrature == "trapezoid":
            lhs += 0.5 * tau * (tv_u[n - 1] + tv_u[n])
            gap_avg = 0.5 * (path[n - 1] - u[n - 1] + gap_now)
            rhs += tau * float(np.dot(domain.measure, dv * gap_avg)) + 0.5 * tau * (tv_v[n - 1] + tv_v[n])
        elif quadrature == "backward":
            lhs += tau * tv_u[n]
            rhs += tau * float(np.dot(domain.measure, dv * gap_now)) + tau * tv_v[n]
        else:
            raise ValueError(f"Unknown quadrature {quadrature!r}")
    final = lp_norm(domain, path[-1] - u[-1])
    initial = lp_norm(domain, path[0] - u[0])
    rhs += -0.5 * final * final + 0.5 * initial * initial

    tau_max = max((trajectory.step_size(n) for n in range(1, count)), default=0.0)
    slack = slack_factor * tau_max * max(1.0, tv_u[0], tv_v[0])
    return CheckReport(
        name="variational_consistency",
        passed=lhs <= rhs + slack,
        slack=slack,
        times=[trajectory.final_time],
        residuals=[lhs - rhs],
        details={"lhs": lhs, "rhs": rhs, "quadrature": quadrature},
    )


def check_step_refinement(
    domain: Domain,
    u0: VertexField,
    bc: BoundaryCondition,
    steps: Sequence[float],
    t: float,
    tol: Optional[float] = None,
) -> CheckReport:
    """||u_tau(t) - u_{tau/2}(t)||_{L2(nu)} for each tau in ``steps``; passes when decreasing.

    Every tau must divide t so that t is a grid time of both runs.
    """
    differences = []
    for tau in steps:
        coarse = evolve(domain, u0, bc, tau, t, tol=tol)
        fine = evolve(domain, u0, bc, tau / 2.0, t, tol=tol)
        differences.append(lp_norm(domain, coarse.state_at(t) - fine.state_at(t)))
    residuals = [b - a for a, b in zip(differences, differences[1:])]
    slack = get_settings().certificate_tol
    return CheckReport(
        name="step_refinement",
        passed=all(r <= slack for r in residuals),
        slack=slack,
        times=[float(s) for s in steps],
        residuals=residuals,
        details={"differences": differences},
    )
