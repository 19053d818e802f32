"""Tests for the discrete calculus: signs, Gauss-Green, pairing and truncation."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from src.core.calculus import (
    BoundaryCondition,
    component_means,
    differential,
    divergence0,
    edge_field,
    edge_field_from_mapping,
    gauss_green_residual,
    gauss_green_terms,
    lp_norm,
    normal_trace,
    nu_mean,
    pairing,
    theta_density,
    total_variation,
    truncate,
)
from src.core.errors import MissingBoundaryData, NonPositiveK
from src.core.space import build_graph, whole_space
from src.ingestion.generators import random_domain


def test_differential_sign(g2):
    du = differential(g2, np.array([1.0, 3.0]))
    assert du.interior.tolist() == [2.0]
    assert du.scope == "interior"


def test_divergence_of_unit_flux(g2):
    X = edge_field(g2, np.array([1.0]))
    assert divergence0(g2, X).tolist() == [1.0, -1.0]


def test_boundary_flux_enters_divergence(d1):
    X = edge_field(d1, np.zeros(0), np.array([0.5]))
    assert divergence0(d1, X).tolist() == [0.5]
    assert normal_trace(d1, X).tolist() == [-0.5]


def test_interior_only_field_has_no_boundary_flux(d1):
    X = edge_field(d1)
    assert X.scope == "interior"
    assert divergence0(d1, X).tolist() == [0.0]


def test_total_variation(g2, d1):
    assert total_variation(g2, np.array([1.0, -1.0]), BoundaryCondition.neumann()) == 2.0
    assert total_variation(d1, np.array([1.0]), BoundaryCondition.homogeneous_dirichlet(d1)) == 1.0
    assert total_variation(d1, np.array([1.0]), BoundaryCondition.neumann()) == 0.0


def test_total_variation_needs_boundary_data(d1):
    with pytest.raises(MissingBoundaryData):
        total_variation(d1, np.array([1.0]), BoundaryCondition.dirichlet(None))


def test_whole_space_condition_rejects_boundary(d1):
    with pytest.raises(ValueError):
        BoundaryCondition.whole_space().validate(d1)


def test_mapping_is_antisymmetric():
    domain = whole_space(build_graph([1, 1, 1], [(0, 1, 1), (1, 2, 1)]))
    X = edge_field_from_mapping(domain, {(1, 0): 0.25, (1, 2): -0.5})
    assert X.value(domain, 0, 1) == -0.25
    assert X.value(domain, 1, 0) == 0.25
    assert X.value(domain, 2, 1) == 0.5
    with pytest.raises(KeyError):
        edge_field_from_mapping(domain, {(0, 2): 1.0})


def test_pairing_mass(g2):
    X = edge_field(g2, np.array([-1.0]))
    mass = pairing(g2, X, np.array([1.0, -1.0]))
    assert mass.total == 2.0
    assert mass.as_mapping(g2) == {(0, 1): 2.0}


def test_theta_only_where_gradient_is_nonzero():
    domain = whole_space(build_graph([1, 1, 1], [(0, 1, 1), (1, 2, 1)]))
    X = edge_field(domain, np.array([0.5, -0.3]))
    theta = theta_density(domain, X, np.array([1.0, 1.0, 0.0]))
    assert theta == {(1, 2): pytest.approx(0.3)}


def test_gauss_green_on_one_point_domain(d1):
    X = edge_field(d1, np.zeros(0), np.array([0.7]))
    terms = gauss_green_terms(d1, np.array([3.0]), X)
    assert terms[1] == 0.0
    assert gauss_green_residual(d1, np.array([3.0]), X) == pytest.approx(0.0, abs=1e-15)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**32 - 1))
def test_gauss_green_identity(seed):
    rng = np.random.default_rng(seed)
    domain = random_domain(rng, max_vertices=50).domain
    u = rng.uniform(-10.0, 10.0, size=domain.num_interior)
    X = edge_field(
        domain,
        rng.uniform(-1.0, 1.0, size=domain.num_interior_edges),
        rng.uniform(-1.0, 1.0, size=domain.num_boundary),
    )
    terms = gauss_green_terms(domain, u, X)
    assert abs(sum(terms)) <= 1e-12 * max(sum(abs(t) for t in terms), 1e-300)


def test_truncate():
    assert truncate(np.array([-3.0, 0.5, 2.0]), 1.0).tolist() == [-1.0, 0.5, 1.0]
    with pytest.raises(NonPositiveK):
        truncate(np.array([1.0]), 0.0)


def test_norms_and_means():
    domain = whole_space(build_graph([1.0, 3.0], [(0, 1, 1.0)]))
    u = np.array([4.0, -2.0])
    assert lp_norm(domain, u, 1) == 10.0
    assert lp_norm(domain, u, np.inf) == 4.0
    assert lp_norm(domain, u) == pytest.approx(np.sqrt(28.0))
    assert nu_mean(domain, u) == pytest.approx(-0.5)


def test_component_means_per_component():
    domain = whole_space(build_graph([1, 1, 2, 2], [(0, 1, 1), (2, 3, 1)]))
    means = component_means(domain, np.array([1.0, 3.0, 0.0, 6.0]))
    assert means.tolist() == [2.0, 2.0, 3.0, 3.0]
