"""Tests for the mmgraph reader and writer."""

import numpy as np
import pytest

from src.core.calculus import edge_field
from src.core.errors import ParseError
from src.core.space import build_graph, make_domain
from src.ingestion.loaders.graph_loader import (
    GraphFileLoader,
    format_graph,
    parse_graph,
    parse_graph_file,
    read_boundary_data,
    read_edge_field,
    read_vertex_field,
    write_fields,
    write_graph_file,
)

G2_TEXT = """mmgraph 1
# two points
v 0 1.0
v 1 1.0
e 0 1 1.0
"""

D1_TEXT = """mmgraph 1
v 0 1.0
v 1 1.0
e 0 1 1.0
interior 0
f 0 1 2.5
u 0 -3.0
"""


def test_parse_two_point_space():
    parsed = parse_graph(G2_TEXT)
    assert parsed.graph.num_vertices == 2
    assert parsed.domain is None
    assert parsed.vertex_field is None


def test_parse_domain_with_fields():
    parsed = parse_graph(D1_TEXT)
    assert parsed.domain.boundary_elements == ((0, 1),)
    assert parsed.boundary_data.tolist() == [2.5]
    assert parsed.vertex_field.tolist() == [-3.0]


def test_edge_field_records():
    parsed = parse_graph(D1_TEXT + "x 1 0 0.25\n")
    assert parsed.edge_field.boundary.tolist() == [-0.25]


@pytest.mark.parametrize(
    "text, line",
    [
        ("mmgraph 1\nv 0 1\ne 0 1 1\n", 3),
        ("mmgraph 1\nv 0 1\nv 1 0\n", 3),
        ("mmgraph 1\nv 0 1\nv 1 1\ne 0 1 1\ne 1 0 2\n", 5),
        ("mmgraph 1\nv 0 1\nv 1 1\ne 0 1 -1\n", 4),
        ("mmgraph 1\nv 0 1\nv 1 abc\n", 3),
        ("mmgraph 1\nv 0 1\nw 1 1\n", 3),
        ("mmgraph 2\n", 1),
        ("mmgraph 1\nv 0 1\nv 2 1\n", 3),
        ("mmgraph 1\nv 0 1\nv 1 1\ne 0 1 1\ninterior 0\nf 1 0 3\n", 6),
        ("mmgraph 1\nv 0 1\nv 1 1\ne 0 1 1\ninterior 0\nu 1 3\n", 6),
        ("mmgraph 1\nv 0 1 2\n", 2),
    ],
)
def test_parse_errors_carry_line_numbers(text, line):
    with pytest.raises(ParseError) as info:
        parse_graph(text)
    assert info.value.line == line


def test_round_trip_is_exact(rng):
    graph = build_graph(rng.uniform(0.1, 10.0, size=6), [(i, i + 1, float(rng.uniform(0.1, 10.0))) for i in range(5)])
    domain = make_domain(graph, [1, 2, 3])
    f = rng.normal(size=domain.num_boundary)
    u = rng.normal(size=domain.num_interior)
    X = edge_field(domain, rng.uniform(-1, 1, size=domain.num_interior_edges), rng.uniform(-1, 1, size=domain.num_boundary))

    parsed = parse_graph(format_graph(graph, domain, f, u, X))
    assert np.array_equal(parsed.graph.measure, graph.measure)
    assert np.array_equal(parsed.graph.weights, graph.weights)
    assert parsed.domain.boundary_elements == domain.boundary_elements
    assert np.array_equal(parsed.boundary_data, f)
    assert np.array_equal(parsed.vertex_field, u)
    assert np.array_equal(parsed.edge_field.interior, X.interior)
    assert np.array_equal(parsed.edge_field.boundary, X.boundary)


def test_files(tmp_path, d1):
    path = write_graph_file(tmp_path / "d1.mmg", d1.graph, d1)
    parsed = parse_graph_file(path)
    assert parsed.metadata["filename"] == "d1.mmg"
    assert parsed.domain.boundary_elements == d1.boundary_elements

    fields = write_fields(
        tmp_path / "fields.mmg", d1,
        boundary_data=np.array([1.5]), vertex_field=np.array([4.0]),
        edge_field=edge_field(d1, np.zeros(0), np.array([0.5])),
    )
    assert read_vertex_field(fields, d1).tolist() == [4.0]
    assert read_boundary_data(fields, d1).tolist() == [1.5]
    assert read_edge_field(fields, d1).boundary.tolist() == [0.5]


def test_missing_records(tmp_path, d1):
    path = write_fields(tmp_path / "empty.mmg", d1)
    with pytest.raises(ParseError):
        read_vertex_field(path, d1)
    with pytest.raises(ParseError):
        parse_graph_file(path)


def test_loader_extensions(tmp_path):
    path = tmp_path / "g.mmgraph"
    path.write_text(G2_TEXT, encoding="utf-8")
    loader = GraphFileLoader(path)
    assert loader.can_load(path)
    assert not loader.can_load(tmp_path / "image.pgm")
    with pytest.raises(FileNotFoundError):
        GraphFileLoader(tmp_path / "absent.mmg")
