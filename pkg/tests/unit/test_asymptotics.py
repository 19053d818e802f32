"""Tests for Rayleigh quotients, lambda_1 estimates, extinction and profiles."""

import math
import tracemalloc

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from src.analysis.asymptotics import (
    _subset_scores,
    _sweep,
    asymptotic_profile,
    check_extinction_bound,
    check_ground_state,
    check_profile_norm,
    estimate_lambda1,
    extinction_estimate,
    functional_constant,
    profile_estimate,
    rayleigh_quotient,
)
from src.core.calculus import BoundaryCondition, lp_norm
from src.core.errors import BudgetExceeded, NonZeroMean, NotExtinct, ZeroField
from src.core.space import build_graph, make_domain, whole_space
from src.ingestion.generators import grid2d, path_graph
from src.solvers.flow import evolve, steady_state

SQRT2 = math.sqrt(2.0)


@pytest.fixture
def g2_flow(g2, neumann):
    return evolve(g2, [1.0, -1.0], neumann, 0.25, 2.0)


@pytest.fixture
def d1_flow(d1, zero_dirichlet):
    return evolve(d1, [2.0], zero_dirichlet, 0.25, 3.0)


class TestRayleighQuotient:
    def test_closed_forms(self, g2, d1, neumann, zero_dirichlet):
        assert rayleigh_quotient(g2, np.array([1.0, -1.0]), neumann) == pytest.approx(SQRT2)
        assert rayleigh_quotient(d1, np.array([1.0]), zero_dirichlet) == 1.0

    def test_scale_invariant(self, g2, neumann):
        u = np.array([0.3, -0.3])
        assert rayleigh_quotient(g2, 2.0 * u, neumann) == rayleigh_quotient(g2, u, neumann)

    def test_undefined_cases(self, g2, neumann):
        with pytest.raises(ZeroField):
            rayleigh_quotient(g2, np.zeros(2), neumann)
        with pytest.raises(NonZeroMean):
            rayleigh_quotient(g2, np.array([1.0, 1.0]), neumann)


class TestLambda1:
    def test_two_point_space(self, g2, neumann):
        estimate = estimate_lambda1(g2, neumann)
        assert estimate.lambda1_upper == pytest.approx(SQRT2)
        assert estimate.method == "subset-enumeration"
        assert estimate.lambda1_upper == rayleigh_quotient(g2, estimate.witness, neumann)

    def test_one_point_dirichlet(self, d1, zero_dirichlet):
        estimate = estimate_lambda1(d1, zero_dirichlet)
        assert estimate.lambda1_upper == pytest.approx(1.0)
        assert estimate.witness.tolist() == [1.0]

    def test_disconnected_domain(self, neumann):
        domain = whole_space(build_graph([1, 1, 1, 1], [(0, 1, 1), (2, 3, 1)]))
        assert estimate_lambda1(domain, neumann).lambda1_upper == 0.0
        assert functional_constant(domain, neumann) == math.inf

    def test_single_vertex_neumann(self, neumann):
        with pytest.raises(ValueError):
            estimate_lambda1(whole_space(build_graph([1.0], [])), neumann)

    def test_threads_do_not_change_the_result(self, neumann):
        domain = path_graph(14).domain
        serial = estimate_lambda1(domain, neumann, threads=1)
        parallel = estimate_lambda1(domain, neumann, threads=4)
        assert serial.lambda1_upper == parallel.lambda1_upper
        assert np.array_equal(serial.witness, parallel.witness)

    def test_local_search_is_an_upper_bound(self, neumann):
        domain = grid2d(4, 4).domain
        exhaustive = estimate_lambda1(domain, neumann, budget=1 << 16)
        local = estimate_lambda1(domain, neumann, budget=5000)
        assert local.method == "gradient-descent"
        assert local.lambda1_upper >= exhaustive.lambda1_upper - 1e-12
        assert local.lambda1_upper == rayleigh_quotient(domain, local.witness, neumann)

    def test_budget_exceeded_carries_best(self, neumann):
        domain = grid2d(4, 4).domain
        with pytest.raises(BudgetExceeded) as info:
            estimate_lambda1(domain, neumann, budget=domain.num_interior)
        assert info.value.best is not None
        assert info.value.best.lambda1_upper > 0

    def test_budget_truncates_the_sweep(self, neumann):
        domain = grid2d(10, 10).domain
        with pytest.raises(BudgetExceeded) as info:
            estimate_lambda1(domain, neumann, budget=50)
        assert info.value.best.evaluations == 50
        assert 0 < info.value.best.lambda1_upper < math.inf

    def test_dirichlet_local_search_is_an_upper_bound(self):
        domain = grid2d(6, 6, boundary="dirichlet").domain
        bc = BoundaryCondition.homogeneous_dirichlet(domain)
        exhaustive = estimate_lambda1(domain, bc, budget=1 << 16)
        local = estimate_lambda1(domain, bc, budget=5000)
        assert local.method == "gradient-descent"
        assert local.lambda1_upper >= exhaustive.lambda1_upper - 1e-12

    @pytest.mark.parametrize("boundary", ["neumann", "dirichlet"])
    def test_sweep_matches_direct_scores(self, boundary):
        domain = grid2d(5, 6, boundary=boundary).domain
        dirichlet = boundary == "dirichlet"
        n = domain.num_interior
        order = np.random.default_rng(7).permutation(n)
        prefixes = np.zeros((n, n), dtype=bool)
        for k in range(n):
            prefixes[k, order[: k + 1]] = True
        if not dirichlet:
            prefixes = prefixes[:-1]
        direct = _subset_scores(domain, dirichlet, prefixes)

        budget = 10**6
        members, score, count = _sweep(domain, dirichlet, order, budget)
        assert count == len(direct) < budget
        assert score == pytest.approx(float(direct.min()), rel=1e-12)
        assert np.array_equal(members, prefixes[int(np.argmin(direct))])

    def test_large_grid_stays_linear_in_memory(self, neumann):
        domain = grid2d(100, 100).domain
        n = domain.num_interior
        tracemalloc.start()
        try:
            estimate = estimate_lambda1(domain, neumann, budget=50 * n)
        except BudgetExceeded as e:
            estimate = e.best
        finally:
            _, peak = tracemalloc.get_traced_memory()
            tracemalloc.stop()
        # an n x n boolean matrix alone would be 100 MB
        assert peak < n * n // 2
        assert 0 < estimate.lambda1_upper < math.inf
        assert estimate.lambda1_upper == rayleigh_quotient(domain, estimate.witness, neumann)

    @pytest.mark.parametrize("option", [{"budget": 0}, {"threads": 0}])
    def test_explicit_zero_is_rejected(self, g2, neumann, option):
        with pytest.raises(ValueError, match="must be positive"):
            estimate_lambda1(g2, neumann, **option)

    def test_functional_constant(self, g2, d1, neumann, zero_dirichlet):
        assert functional_constant(g2, neumann) == pytest.approx(1.0 / SQRT2)
        assert functional_constant(d1, zero_dirichlet) == pytest.approx(1.0)


class TestExtinction:
    def test_extrapolated_time(self, g2_flow, d1_flow):
        assert extinction_estimate(g2_flow) == pytest.approx(1.0, abs=1e-9)
        assert extinction_estimate(d1_flow) == pytest.approx(2.0, abs=1e-9)

    def test_midpoint(self, g2_flow):
        assert extinction_estimate(g2_flow, method="midpoint") == pytest.approx(0.875)

    def test_not_extinct(self, g2, neumann):
        short = evolve(g2, [1.0, -1.0], neumann, 0.25, 0.5)
        with pytest.raises(NotExtinct):
            extinction_estimate(short)

    def test_extinction_bound(self, g2, d1, neumann, zero_dirichlet):
        assert check_extinction_bound(evolve(g2, [1.1, -0.2], neumann, 0.25, 2.0), SQRT2).passed
        assert check_extinction_bound(evolve(d1, [1.3], zero_dirichlet, 0.25, 2.0), 1.0).passed
        with pytest.raises(ValueError):
            check_extinction_bound(evolve(d1, [1.3], zero_dirichlet, 0.25, 2.0), 0.0)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(min_value=0, max_value=2**32 - 1))
    def test_extinction_bound_on_random_data(self, seed):
        # two vertices or one interior vertex: the subset estimate of lambda_1 is exact
        rng = np.random.default_rng(seed)
        if seed % 2:
            domain = whole_space(build_graph(rng.uniform(0.5, 2.0, size=2), [(0, 1, float(rng.uniform(0.5, 2.0)))]))
            bc = BoundaryCondition.neumann()
        else:
            exterior = int(rng.integers(1, 4))
            edges = [(0, b, float(rng.uniform(0.5, 2.0))) for b in range(1, exterior + 1)]
            domain = make_domain(build_graph(rng.uniform(0.5, 2.0, size=exterior + 1), edges), [0])
            bc = BoundaryCondition.homogeneous_dirichlet(domain)
        u0 = rng.uniform(-2.0, 2.0, size=domain.num_interior)
        lambda1 = estimate_lambda1(domain, bc).lambda1_upper
        reach = lp_norm(domain, u0 - steady_state(domain, bc, u0)) / lambda1
        tau = max(reach, 1e-3) / int(rng.integers(3, 40))
        trajectory = evolve(domain, u0, bc, tau, reach + 3.0 * tau)
        report = check_extinction_bound(trajectory, lambda1)
        assert report.passed, report.details


class TestProfiles:
    def test_two_point_profile(self, g2_flow):
        assert asymptotic_profile(g2_flow) == pytest.approx([1.0, -1.0], abs=1e-6)

    def test_one_point_profile(self, d1_flow):
        assert asymptotic_profile(d1_flow) == pytest.approx([2.0], abs=1e-6)

    def test_steady_datum_is_its_own_profile(self, g2, neumann):
        trajectory = evolve(g2, [0.5, 0.5], neumann, 0.25, 1.0)
        assert asymptotic_profile(trajectory).tolist() == [0.5, 0.5]

    def test_profile_norm(self, g2_flow, d1_flow):
        assert check_profile_norm(g2_flow).passed
        assert check_profile_norm(d1_flow).passed

    def test_profile_estimate(self, g2_flow):
        estimate = profile_estimate(g2_flow)
        assert estimate.method == "flow-profile"
        assert estimate.lambda1_upper == pytest.approx(SQRT2, rel=1e-6)


class TestGroundState:
    def test_two_point_ground_state(self, g2, neumann):
        report = check_ground_state(g2, np.array([1.0, -1.0]), 1.0, neumann)
        assert report.passed
        assert report.details["inclusion_passed"]
        assert report.details["ground_state"]

    def test_one_point_ground_state(self, d1, zero_dirichlet):
        assert check_ground_state(d1, np.array([2.0]), 2.0, zero_dirichlet).passed

    def test_wrong_profile_fails_inclusion(self, g2, neumann):
        report = check_ground_state(g2, np.array([2.0, -1.0]), 1.0, neumann, lambda1=SQRT2)
        assert not report.passed
        assert not report.details["inclusion_passed"]

    def test_profile_from_flow(self, g2_flow, g2, neumann):
        profile = asymptotic_profile(g2_flow)
        assert check_ground_state(g2, profile, extinction_estimate(g2_flow), neumann).passed

    def test_invalid_arguments(self, g2, neumann):
        with pytest.raises(ZeroField):
            check_ground_state(g2, np.zeros(2), 1.0, neumann)
        with pytest.raises(ValueError):
            check_ground_state(g2, np.array([1.0, -1.0]), 0.0, neumann)
