"""
Shared fixtures: the two-point space G2, the one-point Dirichlet domain D1,
the three-path with a single interior vertex, and random domains.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.core.calculus import BoundaryCondition
from src.core.space import build_graph, make_domain, whole_space
from src.ingestion.generators import random_domain


@pytest.fixture
def g2():
    """Two vertices of unit mass joined by a unit edge, no boundary."""
    return whole_space(build_graph([1.0, 1.0], [(0, 1, 1.0)]))


@pytest.fixture
def d1():
    """Vertex 0 interior, vertex 1 exterior: one boundary element (0, 1) of weight 1."""
    return make_domain(build_graph([1.0, 1.0], [(0, 1, 1.0)]), [0])


@pytest.fixture
def three_path():
    """Path 0 - 1 - 2 with interior {1}."""
    return make_domain(build_graph([1.0, 1.0, 1.0], [(0, 1, 1.0), (1, 2, 1.0)]), [1])


@pytest.fixture
def neumann():
    return BoundaryCondition.neumann()


@pytest.fixture
def zero_dirichlet(d1):
    return BoundaryCondition.homogeneous_dirichlet(d1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def random_domains(rng):
    return [random_domain(rng, max_vertices=20).domain for _ in range(10)]
