"""Tests for the self-test suites and the brute-force oracle."""

import numpy as np
import pytest

from src.core.calculus import BoundaryCondition
from src.solvers.resolvent import ResolventProblem
from src.workflows.selftest import (
    _coordinate_minimizer,
    brute_force_resolvent,
    fixture_suite,
    gauss_green_suite,
    load_fixtures,
    oracle_suite,
)


def test_coordinate_minimizer_closed_forms():
    # 1/2 (x - 3)^2 + 0.5 |x - 1|  ->  2.5
    assert _coordinate_minimizer(1.0, 3.0, 0.5, [1.0], [1.0]) == pytest.approx(2.5)
    # pulled onto the kink
    assert _coordinate_minimizer(1.0, 1.2, 1.0, [1.0], [1.0]) == 1.0
    assert _coordinate_minimizer(1.0, 4.0, 1.0, [], []) == 4.0


def test_oracle_on_closed_forms(g2, d1):
    problem = ResolventProblem(g2, [3.0, 1.0], 0.5, BoundaryCondition.neumann())
    assert brute_force_resolvent(problem) == pytest.approx([2.5, 1.5], abs=1e-6)
    problem = ResolventProblem(d1, [0.0], 1.0, BoundaryCondition.dirichlet([2.0]))
    assert brute_force_resolvent(problem) == pytest.approx([1.0], abs=1e-9)


def test_oracle_rejects_large_domains():
    from src.ingestion.generators import path_graph

    domain = path_graph(4).domain
    with pytest.raises(ValueError):
        brute_force_resolvent(ResolventProblem(domain, np.zeros(4), 1.0, BoundaryCondition.neumann()))


def test_gauss_green_suite():
    report = gauss_green_suite(count=10, seed=3)
    assert report.passed
    assert len(report.residuals) == 10


def test_oracle_suite():
    report = oracle_suite(count=6, seed=1)
    assert report.passed, report.details


def test_fixture_suite():
    fixtures = load_fixtures()
    assert {"graphs", "resolvent", "flow", "rayleigh", "lambda1"} <= set(fixtures)
    report = fixture_suite()
    assert report.passed, [label for label, r in zip(report.details["labels"], report.residuals) if r > 0]
