"""Tests for graph generators."""

import numpy as np
import pytest
from PIL import Image

from src.core.calculus import BoundaryCondition
from src.ingestion.generators import cycle_graph, from_image, generate, grid2d, path_graph, random_domain
from src.solvers.flow import evolve


def test_path_of_two_is_the_two_point_space():
    generated = path_graph(2)
    assert generated.domain.is_whole_space
    assert generated.graph.edges.tolist() == [[0, 1]]
    assert generated.graph.measure.tolist() == [1.0, 1.0]
    assert generated.u0 is None


def test_cycle():
    assert cycle_graph(5).graph.num_edges == 5
    with pytest.raises(ValueError):
        cycle_graph(2)


def test_neumann_grid():
    generated = grid2d(3, 4)
    assert generated.graph.num_vertices == 12
    assert generated.graph.num_edges == 17
    assert generated.domain.num_boundary == 0


def test_dirichlet_grid():
    domain = grid2d(3, 3, boundary="dirichlet").domain
    assert domain.interior.tolist() == [4]
    assert domain.num_boundary == 4
    assert domain.perimeter_total == 4.0


@pytest.mark.parametrize("rows, cols", [(2, 5), (5, 2), (1, 1)])
def test_dirichlet_grid_needs_an_interior(rows, cols):
    with pytest.raises(ValueError, match="rows and cols >= 3"):
        grid2d(rows, cols, boundary="dirichlet")


def test_weight_and_measure():
    generated = grid2d(2, 2, weight=0.5, measure=2.0)
    assert set(generated.graph.weights.tolist()) == {0.5}
    assert generated.domain.total_measure == 8.0


def test_generate_dispatch():
    assert generate("path", n=4).graph.num_vertices == 4
    assert generate("grid2d", rows=2, cols=3).graph.num_vertices == 6
    with pytest.raises(ValueError):
        generate("torus", n=3)
    with pytest.raises(ValueError):
        generate("grid2d", rows=3, cols=3, boundary="periodic")


def test_from_image(tmp_path):
    path = tmp_path / "flat.pgm"
    Image.new("L", (4, 3), 128).save(path)
    generated = from_image(path)
    assert generated.graph.num_vertices == 12
    assert generated.u0 == pytest.approx(np.full(12, 128 / 255.0))

    trajectory = evolve(generated.domain, generated.u0, BoundaryCondition.neumann(), 0.1, 1.0)
    assert trajectory.settled
    assert trajectory.num_steps == 0


def test_from_image_dirichlet_keeps_inner_pixels(tmp_path):
    path = tmp_path / "dot.pgm"
    pixels = np.zeros((3, 3), dtype=np.uint8)
    pixels[1, 1] = 255
    Image.fromarray(pixels).save(path)
    generated = from_image(path, boundary="dirichlet")
    assert generated.u0.tolist() == [1.0]


def test_random_domain_respects_caps():
    rng = np.random.default_rng(0)
    for _ in range(20):
        generated = random_domain(rng, max_vertices=6, max_interior=3)
        assert 2 <= generated.graph.num_vertices <= 6
        assert 1 <= generated.domain.num_interior <= 3
    whole = random_domain(rng, max_vertices=6, with_boundary=False)
    assert whole.domain.is_whole_space
