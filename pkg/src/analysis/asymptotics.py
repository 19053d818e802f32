"""
Spectral quantities of the total variation flow.

Rayleigh quotients, upper estimates of lambda_1 from subset witnesses,
extinction-time estimates, asymptotic profiles and ground-state checks.
"""

from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from loguru import logger
from scipy import linalg, sparse
from scipy.sparse import linalg as sparse_linalg

from config.settings import get_settings, positive_setting
from src.core.calculus import BoundaryCondition, lp_norm, nu_mean, total_variation
from src.core.errors import BudgetExceeded, NonZeroMean, NotExtinct, NotReached, ZeroField
from src.core.reports import CheckReport
from src.core.space import Domain, VertexField
from src.solvers.flow import ExtinctionBracket, FlowTrajectory, extinction_time
from src.solvers.resolvent import ResolventProblem, solve_resolvent

EstimateMethod = Literal["subset-enumeration", "flow-profile", "gradient-descent"]
ExtinctionMethod = Literal["extrapolate", "midpoint"]

_CHUNK = 4096
_DENSE_LIMIT = 2000


@dataclass
class SpectralEstimate:
    """Upper bound on lambda_1 together with the field attaining it."""

    lambda1_upper: float
    witness: VertexField
    method: EstimateMethod
    evaluations: int = 0

    def to_dict(self) -> Dict[str, object]:
        return {
            "lambda1_upper": self.lambda1_upper,
            "method": self.method,
            "evaluations": self.evaluations,
            "witness": self.witness.tolist(),
        }


# ==================== Rayleigh quotient ====================
def rayleigh_quotient(domain: Domain, u: VertexField, bc: BoundaryCondition) -> float:
    """TV_bc(u) / ||u||_{L2(nu)}; Dirichlet conditions use f = 0.

    Raises:
        ZeroField: If u = 0.
        NonZeroMean: Under Neumann or whole-space conditions when u has nonzero nu-mean.
    """
    u = domain.check_vertex_field(u)
    norm = lp_norm(domain, u)
    if norm == 0.0:
        raise ZeroField()
    if bc.is_dirichlet:
        tv = total_variation(domain, u, BoundaryCondition.homogeneous_dirichlet(domain))
    else:
        mean = nu_mean(domain, u)
        if abs(mean) > 1e-12 * norm:
            raise NonZeroMean(mean)
        tv = total_variation(domain, u, bc)
    return tv / norm


# ==================== Subset witnesses ====================
def _subset_scores(domain: Domain, dirichlet: bool, bits: np.ndarray) -> np.ndarray:
    """Closed-form quotient of the indicator witness of every row of ``bits``.

    Neumann: cut(S) / sqrt(nu(S) nu(S^c) / nu(Omega)) for chi_S - nu(S)/nu(Omega).
    Dirichlet: (cut(S) + boundary weight of S) / sqrt(nu(S)) for chi_S.
    Empty or full sets under Neumann score inf.
    """
    bits = bits.astype(float)
    mass = bits @ domain.measure
    cut = np.abs(bits[:, domain.edge_tails] - bits[:, domain.edge_heads]) @ domain.interior_weights
    if dirichlet:
        cut = cut + bits[:, domain.boundary_tails] @ domain.perimeter
    return _quotient(domain, dirichlet, cut, mass)


def _quotient(domain: Domain, dirichlet: bool, cut: np.ndarray, mass: np.ndarray) -> np.ndarray:
    """Scores from cut weights (boundary weight included for Dirichlet) and nu-masses."""
    cut = np.asarray(cut, dtype=float)
    mass = np.asarray(mass, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        if dirichlet:
            scores = cut / np.sqrt(mass)
            scores[mass <= 0] = np.inf
        else:
            total = domain.total_measure
            rest = total - mass
            scores = cut / np.sqrt(mass * rest / total)
            scores[(mass <= 0) | (rest <= 0)] = np.inf
    return scores


def _mask_bits(masks: np.ndarray, n: int) -> np.ndarray:
    return ((masks[:, None] >> np.arange(n, dtype=np.int64)) & 1).astype(bool)


def _witness(domain: Domain, dirichlet: bool, members: np.ndarray) -> VertexField:
    chi = members.astype(float)
    if dirichlet:
        return chi
    return chi - float(np.dot(domain.measure, chi)) / domain.total_measure


def _estimate(domain: Domain, bc: BoundaryCondition, members: np.ndarray, method: EstimateMethod, evaluations: int):
    witness = _witness(domain, bc.is_dirichlet, members)
    return SpectralEstimate(rayleigh_quotient(domain, witness, bc), witness, method, evaluations)


def _enumerate(domain: Domain, dirichlet: bool, threads: int) -> Tuple[float, int]:
    """Smallest score over all subsets; ties resolve to the smallest mask."""
    n = domain.num_interior
    top = 1 << n
    starts = list(range(1, top, _CHUNK))

    def scan(start: int) -> Tuple[float, int]:
        masks = np.arange(start, min(start + _CHUNK, top), dtype=np.int64)
        scores = _subset_scores(domain, dirichlet, _mask_bits(masks, n))
        k = int(np.argmin(scores))
        return float(scores[k]), int(masks[k])

    results: Dict[int, Tuple[float, int]] = {}
    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            futures = {executor.submit(scan, s): i for i, s in enumerate(starts)}
            for future in as_completed(futures):
                results[futures[future]] = future.result()
    else:
        results = {i: scan(s) for i, s in enumerate(starts)}
    # chunk order, strict improvement only
    best = (np.inf, 0)
    for i in range(len(starts)):
        if results[i][0] < best[0]:
            best = results[i]
    return best


def _operator(domain: Domain, dirichlet: bool) -> sparse.csr_matrix:
    """Weighted graph Laplacian of the domain, plus boundary weights on the diagonal for Dirichlet."""
    k = domain.num_interior_edges
    grad = domain.gradient_matrix
    lap = grad.T @ sparse.diags(domain.interior_weights, 0, shape=(k, k)) @ grad
    if dirichlet and domain.num_boundary:
        mb = domain.num_boundary
        bmat = domain.boundary_matrix
        lap = lap + bmat.T @ sparse.diags(domain.perimeter, 0, shape=(mb, mb)) @ bmat
    return sparse.csr_matrix(lap)


def _sweep_seed(domain: Domain, dirichlet: bool) -> np.ndarray:
    """Vertex order of the first nontrivial generalized eigenvector of (L, diag(nu))."""
    n = domain.num_interior
    lap = _operator(domain, dirichlet)
    index = 0 if dirichlet else 1
    if n <= _DENSE_LIMIT:
        _, vectors = linalg.eigh(lap.toarray(), np.diag(domain.measure))
    else:
        _, vectors = sparse_linalg.eigsh(
            lap, k=index + 1, M=sparse.diags(domain.measure), sigma=-1e-6, which="LM"
        )
    return np.argsort(vectors[:, index], kind="stable")


def _sweep(domain: Domain, dirichlet: bool, order: np.ndarray, limit: int) -> Tuple[np.ndarray, float, int]:
    """Best prefix of ``order`` among its first ``limit`` sweep cuts, in O(n + edges)."""
    n = domain.num_interior
    rank = np.empty(n, dtype=np.int64)
    rank[order] = np.arange(n)
    # prefix k cuts edge e iff min rank <= k < max rank
    lo = np.minimum(rank[domain.edge_tails], rank[domain.edge_heads])
    hi = np.maximum(rank[domain.edge_tails], rank[domain.edge_heads])
    weights = domain.interior_weights
    steps = np.bincount(lo, weights=weights, minlength=n + 1) - np.bincount(hi, weights=weights, minlength=n + 1)
    cut = np.cumsum(steps)[:n]
    if dirichlet:
        cut = cut + np.cumsum(_boundary_weight(domain)[order])
    mass = np.cumsum(domain.measure[order])

    count = min(n if dirichlet else n - 1, limit)
    scores = _quotient(domain, dirichlet, cut[:count], mass[:count])
    k = int(np.argmin(scores))
    members = np.zeros(n, dtype=bool)
    members[order[: k + 1]] = True
    return members, float(scores[k]), count


def _boundary_weight(domain: Domain) -> np.ndarray:
    return np.bincount(domain.boundary_tails, weights=domain.perimeter, minlength=domain.num_interior)


def _adjacency(domain: Domain) -> sparse.csr_matrix:
    n = domain.num_interior
    half = sparse.coo_matrix(
        (domain.interior_weights, (domain.edge_tails, domain.edge_heads)), shape=(n, n)
    )
    return sparse.csr_matrix(half + half.T)


def _local_search(domain: Domain, bc: BoundaryCondition, budget: int) -> SpectralEstimate:
    """Sweep cut over a spectral ordering, then single-flip steepest descent.

    Memory stays linear in the number of vertices and edges: sweep cuts come
    from running sums, and each flip is scored from its cut delta.
    """
    dirichlet = bc.is_dirichlet
    n = domain.num_interior
    order = _sweep_seed(domain, dirichlet)
    members, score, evaluations = _sweep(domain, dirichlet, order, budget)
    logger.debug(f"lambda1 sweep seed: score={score:.6g} after {evaluations} cuts")
    if evaluations < (n if dirichlet else n - 1):
        raise BudgetExceeded(budget, _estimate(domain, bc, members, "gradient-descent", evaluations))

    adjacency = _adjacency(domain)
    degree = np.asarray(adjacency.sum(axis=1)).ravel()
    if dirichlet:
        degree = degree + _boundary_weight(domain)
    nu = domain.measure
    inside = members.astype(float)
    mass = float(np.dot(nu, inside))
    cut = float(np.abs(inside[domain.edge_tails] - inside[domain.edge_heads]) @ domain.interior_weights)
    if dirichlet:
        cut += float(inside[domain.boundary_tails] @ domain.perimeter)

    while True:
        if evaluations + n > budget:
            best = _estimate(domain, bc, members, "gradient-descent", evaluations)
            raise BudgetExceeded(budget, best)
        # +1 adds a vertex to S, -1 removes it
        direction = 1.0 - 2.0 * inside
        flip_cut = cut + direction * (degree - 2.0 * (adjacency @ inside))
        flip_mass = mass + direction * nu
        evaluations += n
        flip_scores = _quotient(domain, dirichlet, flip_cut, flip_mass)
        j = int(np.argmin(flip_scores))
        if not flip_scores[j] < score:
            break
        members[j] = not members[j]
        inside[j] = 1.0 - inside[j]
        cut, mass, score = float(flip_cut[j]), float(flip_mass[j]), float(flip_scores[j])
    return _estimate(domain, bc, members, "gradient-descent", evaluations)


def estimate_lambda1(
    domain: Domain,
    bc: BoundaryCondition,
    budget: Optional[int] = None,
    threads: Optional[int] = None,
) -> SpectralEstimate:
    """Upper bound on lambda_1 from indicator witnesses.

    Exhaustive over all subsets when 2^n fits in the budget, otherwise a sweep
    cut followed by single-flip descent. Disconnected domains under Neumann or
    whole-space conditions give 0 with a locally constant witness.

    Raises:
        BudgetExceeded: If the local search runs out of evaluations; carries the best estimate.
    """
    budget = positive_setting(budget, "lambda1_budget", "budget")
    threads = positive_setting(threads, "threads")
    dirichlet = bc.is_dirichlet
    n = domain.num_interior

    if not dirichlet:
        if n < 2:
            raise ValueError("lambda_1 under Neumann conditions needs at least two interior vertices")
        if not domain.is_connected():
            members = domain.component_labels == 0
            logger.info(f"Domain has {domain.num_components} components, lambda_1 = 0")
            return _estimate(domain, bc, members, "subset-enumeration", 0)

    if n < 62 and (1 << n) <= budget:
        score, mask = _enumerate(domain, dirichlet, threads)
        members = _mask_bits(np.array([mask], dtype=np.int64), n)[0]
        estimate = _estimate(domain, bc, members, "subset-enumeration", (1 << n) - 1)
        logger.info(f"lambda_1 <= {estimate.lambda1_upper:.10g} by enumeration of {n} vertices")
        return estimate

    estimate = _local_search(domain, bc, budget)
    logger.info(f"lambda_1 <= {estimate.lambda1_upper:.10g} by local search ({estimate.evaluations} evaluations)")
    return estimate


def functional_constant(domain: Domain, bc: BoundaryCondition, budget: Optional[int] = None) -> float:
    """Lower bound 1 / lambda1_upper on the Poincare (Neumann) or Sobolev (Dirichlet) constant."""
    estimate = estimate_lambda1(domain, bc, budget)
    if estimate.lambda1_upper == 0.0:
        return float("inf")
    return 1.0 / estimate.lambda1_upper


# ==================== Extinction and profiles ====================
def _bracket(trajectory: FlowTrajectory, bracket: Optional[ExtinctionBracket]) -> ExtinctionBracket:
    if bracket is not None:
        return bracket
    if trajectory.extinction is not None:
        return trajectory.extinction
    try:
        return extinction_time(trajectory)
    except NotReached as e:
        raise NotExtinct(str(e)) from e


def _steady(trajectory: FlowTrajectory) -> VertexField:
    return trajectory.steady if trajectory.steady is not None else trajectory.states[-1]


def extinction_estimate(
    trajectory: FlowTrajectory,
    bracket: Optional[ExtinctionBracket] = None,
    method: ExtinctionMethod = "extrapolate",
) -> float:
    """Point estimate of T_ex inside the extinction bracket.

    ``extrapolate`` continues the distance to the steady state linearly from
    the last two states before extinction, which is exact while the flow decays
    along a fixed profile; the result is clamped to the bracket.
    """
    bracket = _bracket(trajectory, bracket)
    if bracket.t_hi == 0.0:
        return 0.0
    if method == "midpoint":
        return bracket.midpoint
    if method != "extrapolate":
        raise ValueError(f"Unknown extinction estimate {method!r}")

    hi = trajectory.index_of(bracket.t_hi)
    if hi is None:
        return bracket.midpoint
    a, b = (hi - 2, hi - 1) if hi >= 2 else (0, 1)
    steady = _steady(trajectory)
    d_a = lp_norm(trajectory.domain, trajectory.states[a] - steady)
    d_b = lp_norm(trajectory.domain, trajectory.states[b] - steady)
    t_a, t_b = trajectory.times[a], trajectory.times[b]
    slope = (d_b - d_a) / (t_b - t_a)
    if not slope < 0:
        return bracket.midpoint
    return float(np.clip(t_b - d_b / slope, bracket.t_lo, bracket.t_hi))


def asymptotic_profile(
    trajectory: FlowTrajectory,
    bracket: Optional[ExtinctionBracket] = None,
    t_ex: Optional[float] = None,
    method: ExtinctionMethod = "extrapolate",
) -> VertexField:
    """Rescaled state w(t*) = (u(t*) - steady) / (1 - t*/T_ex) near extinction.

    t* is the last grid time with 1 - t*/T_ex >= profile_min_denominator.

    Raises:
        NotExtinct: If the trajectory has no extinction bracket.
    """
    bracket = _bracket(trajectory, bracket)
    if bracket.t_hi == 0.0:
        return trajectory.u0.copy()
    t_ex = t_ex or extinction_estimate(trajectory, bracket, method)
    floor = get_settings().profile_min_denominator
    steady = _steady(trajectory)

    chosen = 0
    for n, t in enumerate(trajectory.times):
        if 1.0 - t / t_ex >= floor:
            chosen = n
    t_star = trajectory.times[chosen]
    profile = (trajectory.states[chosen] - steady) / (1.0 - t_star / t_ex)

    initial = lp_norm(trajectory.domain, trajectory.u0)
    if lp_norm(trajectory.domain, profile) > initial * (1.0 + 1e-6):
        logger.warning(f"Profile norm exceeds ||u0|| = {initial:.6g} at t={t_star}")
    logger.debug(f"Profile at t*={t_star} with T_ex={t_ex:.10g}")
    return profile


def check_profile_norm(
    trajectory: FlowTrajectory,
    bracket: Optional[ExtinctionBracket] = None,
    tol: Optional[float] = None,
) -> CheckReport:
    """||w(t)|| <= ||u0|| at every grid time before extinction."""
    tol = positive_setting(tol, "certificate_tol", "tol")
    bracket = _bracket(trajectory, bracket)
    domain = trajectory.domain
    initial = lp_norm(domain, trajectory.u0)
    times, residuals = [], []
    if bracket.t_hi > 0.0:
        t_ex = extinction_estimate(trajectory, bracket)
        steady = _steady(trajectory)
        floor = get_settings().profile_min_denominator
        for t, u in zip(trajectory.times, trajectory.states):
            scale = 1.0 - t / t_ex
            if scale < floor:
                break
            times.append(t)
            residuals.append(lp_norm(domain, u - steady) / scale - initial)
    slack = tol * max(1.0, initial)
    return CheckReport(
        name="profile_norm",
        passed=all(r <= slack for r in residuals),
        slack=slack,
        times=times,
        residuals=residuals,
    )


def profile_estimate(trajectory: FlowTrajectory, bracket: Optional[ExtinctionBracket] = None) -> SpectralEstimate:
    """Rayleigh quotient of the asymptotic profile as an upper bound on lambda_1."""
    domain, bc = trajectory.domain, trajectory.bc
    profile = asymptotic_profile(trajectory, bracket)
    if not bc.is_dirichlet:
        profile = profile - nu_mean(domain, profile)
    return SpectralEstimate(rayleigh_quotient(domain, profile, bc), profile, "flow-profile")


def check_ground_state(
    domain: Domain,
    w_star: VertexField,
    t_ex: float,
    bc: BoundaryCondition,
    tol: Optional[float] = None,
    lambda1: Optional[float] = None,
    budget: Optional[int] = None,
) -> CheckReport:
    """Eigen-inclusion and ground-state tests for an asymptotic profile.

    (1) w*/T_ex in dTV(w*), tested as J_1(w* + w*/T_ex) = w*.
    (2) RQ(w*) <= lambda1 + tol, with lambda1 from estimate_lambda1 when not given.
    """
    tol = positive_setting(tol, "certificate_tol", "tol")
    w_star = domain.check_vertex_field(np.array(w_star, dtype=float))
    if lp_norm(domain, w_star) == 0.0:
        raise ZeroField()
    if not t_ex > 0:
        raise ValueError(f"Extinction time must be positive, got {t_ex!r}")

    certificate = solve_resolvent(ResolventProblem(domain, w_star * (1.0 + 1.0 / t_ex), 1.0, bc))
    inclusion = float(np.max(np.abs(certificate.u - w_star)))

    centred = w_star if bc.is_dirichlet else w_star - nu_mean(domain, w_star)
    try:
        quotient = rayleigh_quotient(domain, centred, bc)
    except (ZeroField, NonZeroMean) as e:
        logger.warning(f"Ground-state quotient undefined: {e}")
        quotient = float("inf")
    if lambda1 is None:
        lambda1 = estimate_lambda1(domain, bc, budget).lambda1_upper

    residuals: List[float] = [inclusion - tol, quotient - lambda1 - tol]
    return CheckReport(
        name="ground_state",
        passed=all(r <= 0.0 for r in residuals),
        slack=tol,
        times=[t_ex],
        residuals=residuals,
        details={
            "inclusion_residual": inclusion,
            "inclusion_passed": inclusion <= tol,
            "rayleigh_quotient": quotient,
            "lambda1_upper": lambda1,
            "ground_state": quotient <= lambda1 + tol,
        },
    )


def check_extinction_bound(
    trajectory: FlowTrajectory,
    lambda1: float,
    bracket: Optional[ExtinctionBracket] = None,
) -> CheckReport:
    """t_hi <= ||u0 - steady||_{L2(nu)} / lambda1 + tau for an extinct trajectory."""
    if not lambda1 > 0:
        raise ValueError(f"lambda1 must be positive, got {lambda1!r}")
    bracket = _bracket(trajectory, bracket)
    tau = max((trajectory.step_size(n) for n in range(1, trajectory.num_steps + 1)), default=0.0)
    bound = lp_norm(trajectory.domain, trajectory.u0 - _steady(trajectory)) / lambda1 + tau
    residual = bracket.t_hi - bound
    return CheckReport(
        name="extinction_bound",
        passed=residual <= 1e-12 * max(1.0, bound),
        times=[bracket.t_hi],
        residuals=[residual],
        details={"bound": bound, "lambda1": lambda1, "bracket": list(bracket.as_tuple())},
    )
