"""
Reader and writer for the line-oriented ``mmgraph`` text format.

    mmgraph 1
    v <index> <measure>
    e <i> <j> <weight>
    interior <i1> <i2> ...
    f <interior_vertex> <exterior_vertex> <value>
    u <vertex> <value>
    x <i> <j> <value>

Fields are whitespace separated, ``#`` starts a comment. Floats are written
with repr() so a written file parses back to identical values.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from loguru import logger

from src.core.calculus import EdgeField, edge_field_from_mapping
from src.core.errors import (
    DuplicateEdge,
    NonPositiveMeasure,
    NonPositiveWeight,
    ParseError,
    SelfLoop,
)
from src.core.space import Domain, MetricMeasureGraph, VertexField, build_graph, make_domain, whole_space

from .base_loader import BaseLoader

FORMAT_VERSION = "1"


@dataclass
class ParsedGraph:
    """Everything a graph file can carry; absent sections are None."""

    graph: Optional[MetricMeasureGraph] = None
    domain: Optional[Domain] = None
    boundary_data: Optional[np.ndarray] = None
    vertex_field: Optional[VertexField] = None
    edge_field: Optional[EdgeField] = None
    metadata: Dict[str, object] = field(default_factory=dict)


@dataclass
class _Sections:
    vertices: Dict[int, Tuple[float, int]] = field(default_factory=dict)
    edges: List[Tuple[int, int, float, int]] = field(default_factory=list)
    interior: List[Tuple[int, int]] = field(default_factory=list)
    boundary: Dict[Tuple[int, int], Tuple[float, int]] = field(default_factory=dict)
    values: Dict[int, Tuple[float, int]] = field(default_factory=dict)
    flows: Dict[Tuple[int, int], Tuple[float, int]] = field(default_factory=dict)
    last_line: int = 0


def _index(token: str, line: int) -> int:
    try:
        value = int(token)
    except ValueError:
        raise ParseError(line, f"expected a vertex index, got {token!r}") from None
    if value < 0:
        raise ParseError(line, f"vertex index must be non-negative, got {value}")
    return value


def _number(token: str, line: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(line, f"expected a number, got {token!r}") from None
    if not math.isfinite(value):
        raise ParseError(line, f"value must be finite, got {token!r}")
    return value


def _arity(tokens: List[str], count: int, line: int) -> None:
    if len(tokens) != count:
        raise ParseError(line, f"'{tokens[0]}' takes {count - 1} fields, got {len(tokens) - 1}")


def _scan(text: str) -> _Sections:
    sections = _Sections()
    seen_content = False
    for line_no, raw in enumerate(text.splitlines(), start=1):
        sections.last_line = line_no
        tokens = raw.split("#", 1)[0].split()
        if not tokens:
            continue
        tag = tokens[0]

        if tag == "mmgraph":
            if seen_content:
                raise ParseError(line_no, "header must be the first line")
            _arity(tokens, 2, line_no)
            if tokens[1] != FORMAT_VERSION:
                raise ParseError(line_no, f"unsupported format version {tokens[1]!r}")
        elif tag == "v":
            _arity(tokens, 3, line_no)
            i = _index(tokens[1], line_no)
            if i in sections.vertices:
                raise ParseError(line_no, f"vertex {i} declared twice")
            sections.vertices[i] = (_number(tokens[2], line_no), line_no)
        elif tag == "e":
            _arity(tokens, 4, line_no)
            sections.edges.append(
                (_index(tokens[1], line_no), _index(tokens[2], line_no), _number(tokens[3], line_no), line_no)
            )
        elif tag == "interior":
            if len(tokens) < 2:
                raise ParseError(line_no, "'interior' needs at least one vertex")
            sections.interior.extend((_index(t, line_no), line_no) for t in tokens[1:])
        elif tag == "f":
            _arity(tokens, 4, line_no)
            key = (_index(tokens[1], line_no), _index(tokens[2], line_no))
            if key in sections.boundary:
                raise ParseError(line_no, f"boundary value for {key} given twice")
            sections.boundary[key] = (_number(tokens[3], line_no), line_no)
        elif tag == "u":
            _arity(tokens, 3, line_no)
            i = _index(tokens[1], line_no)
            if i in sections.values:
                raise ParseError(line_no, f"value for vertex {i} given twice")
            sections.values[i] = (_number(tokens[2], line_no), line_no)
        elif tag == "x":
            _arity(tokens, 4, line_no)
            key = (_index(tokens[1], line_no), _index(tokens[2], line_no))
            if key in sections.flows or key[::-1] in sections.flows:
                raise ParseError(line_no, f"edge value for {key} given twice")
            sections.flows[key] = (_number(tokens[3], line_no), line_no)
        else:
            raise ParseError(line_no, f"unknown record type {tag!r}")
        seen_content = True
    return sections


def _build(sections: _Sections) -> MetricMeasureGraph:
    n = len(sections.vertices)
    for i, (_, line) in sections.vertices.items():
        if i >= n:
            raise ParseError(line, f"vertex indices must be contiguous from 0, got {i} with {n} vertices")
    for i, j, _, line in sections.edges:
        for endpoint in (i, j):
            if endpoint not in sections.vertices:
                raise ParseError(line, f"edge references vertex {endpoint} with no 'v' line")

    measures = [sections.vertices[i][0] for i in range(n)]
    try:
        return build_graph(measures, [(i, j, w) for i, j, w, _ in sections.edges])
    except NonPositiveMeasure as e:
        raise ParseError(sections.vertices[e.vertex][1], str(e)) from e
    except (NonPositiveWeight, DuplicateEdge) as e:
        raise ParseError(_edge_line(sections, e.edge), str(e)) from e
    except SelfLoop as e:
        raise ParseError(_edge_line(sections, (e.vertex, e.vertex)), str(e)) from e


def _edge_line(sections: _Sections, pair: Tuple[int, int]) -> int:
    key = tuple(sorted(pair))
    lines = [line for i, j, _, line in sections.edges if tuple(sorted((i, j))) == key]
    # the second occurrence of a duplicate is the offending line
    return lines[-1] if lines else sections.last_line


def parse_graph(text: str, graph: Optional[MetricMeasureGraph] = None, domain: Optional[Domain] = None) -> ParsedGraph:
    """Parse mmgraph text.

    Args:
        text: File contents.
        graph: Graph to resolve field records against when the text has no 'v' lines.
        domain: Domain to resolve field records against when the text has no 'interior' line.

    Returns:
        ParsedGraph with the sections present in the text.

    Raises:
        ParseError: On any malformed or inconsistent record, with its line number.
    """
    sections = _scan(text)
    parsed = ParsedGraph()

    if sections.vertices or sections.edges:
        parsed.graph = _build(sections)
    else:
        parsed.graph = graph

    if sections.interior:
        if parsed.graph is None:
            raise ParseError(sections.interior[0][1], "'interior' given without a graph")
        for v, line in sections.interior:
            if v >= parsed.graph.num_vertices:
                raise ParseError(line, f"interior vertex {v} is not a vertex of the graph")
        parsed.domain = make_domain(parsed.graph, [v for v, _ in sections.interior])
    elif domain is not None:
        parsed.domain = domain
    elif parsed.graph is not None and (sections.values or sections.flows):
        # field records without an 'interior' line live on the whole space
        parsed.domain = whole_space(parsed.graph)

    if sections.boundary:
        first_line = min(line for _, line in sections.boundary.values())
        if parsed.domain is None:
            raise ParseError(first_line, "boundary data given without an interior")
        elements = set(parsed.domain.boundary_elements)
        for key, (_, line) in sections.boundary.items():
            if key not in elements:
                raise ParseError(line, f"{key} is not a boundary element of the domain")
        missing = [b for b in parsed.domain.boundary_elements if b not in sections.boundary]
        if missing:
            raise ParseError(sections.last_line, f"no boundary value for element {missing[0]}")
        parsed.boundary_data = np.array([sections.boundary[b][0] for b in parsed.domain.boundary_elements])

    if sections.values:
        first_line = min(line for _, line in sections.values.values())
        if parsed.domain is None:
            raise ParseError(first_line, "vertex values given without a domain")
        local = parsed.domain.local_index
        for v, (_, line) in sections.values.items():
            if v not in local:
                raise ParseError(line, f"vertex {v} is not an interior vertex")
        missing = [v for v in local if v not in sections.values]
        if missing:
            raise ParseError(sections.last_line, f"no value for interior vertex {missing[0]}")
        parsed.vertex_field = parsed.domain.vertex_field({v: val for v, (val, _) in sections.values.items()})

    if sections.flows:
        first_line = min(line for _, line in sections.flows.values())
        if parsed.domain is None:
            raise ParseError(first_line, "edge values given without a domain")
        known = {(int(i), int(j)) for i, j in parsed.domain.interior_edges}
        known.update(parsed.domain.boundary_elements)
        for key, (_, line) in sections.flows.items():
            if key not in known and key[::-1] not in known:
                raise ParseError(line, f"{key} is not an edge of the domain")
        parsed.edge_field = edge_field_from_mapping(
            parsed.domain, {key: val for key, (val, _) in sections.flows.items()}
        )

    return parsed


def format_graph(
    graph: MetricMeasureGraph,
    domain: Optional[Domain] = None,
    boundary_data: Optional[np.ndarray] = None,
    vertex_field: Optional[VertexField] = None,
    edge_field: Optional[EdgeField] = None,
) -> str:
    """Serialise to mmgraph text; sections are emitted only when given."""
    lines = [f"mmgraph {FORMAT_VERSION}"]
    lines += [f"v {i} {float(m)!r}" for i, m in enumerate(graph.measure)]
    lines += [f"e {int(i)} {int(j)} {float(w)!r}" for (i, j), w in zip(graph.edges, graph.weights)]
    if domain is not None:
        lines.append("interior " + " ".join(str(int(v)) for v in domain.interior))
        lines += _field_lines(domain, boundary_data, vertex_field, edge_field)
    return "\n".join(lines) + "\n"


def _field_lines(
    domain: Domain,
    boundary_data: Optional[np.ndarray],
    vertex_field: Optional[VertexField],
    edge_field: Optional[EdgeField],
) -> List[str]:
    lines = []
    if boundary_data is not None:
        lines += [f"f {v} {b} {float(val)!r}" for (v, b), val in zip(domain.boundary_elements, boundary_data)]
    if vertex_field is not None:
        lines += [f"u {int(v)} {float(val)!r}" for v, val in zip(domain.interior, vertex_field)]
    if edge_field is not None:
        lines += [f"x {i} {j} {val!r}" for (i, j), val in edge_field.as_mapping(domain).items()]
    return lines


class GraphFileLoader(BaseLoader):
    """Loader for mmgraph files."""

    def get_supported_extensions(self) -> List[str]:
        return [".mmg", ".mmgraph", ".txt"]

    def load(self, graph: Optional[MetricMeasureGraph] = None, domain: Optional[Domain] = None) -> ParsedGraph:
        parsed = parse_graph(self.file_path.read_text(encoding="utf-8"), graph=graph, domain=domain)
        parsed.metadata = self._get_base_metadata()
        if parsed.graph is not None:
            logger.info(
                f"Loaded {self.file_path.name}: {parsed.graph.num_vertices} vertices, {parsed.graph.num_edges} edges"
            )
        return parsed


# ==================== File helpers ====================
def parse_graph_file(path: Path) -> ParsedGraph:
    """Read a graph file; the graph itself is mandatory.

    Raises:
        ParseError: If the file is malformed or has no vertices.
    """
    parsed = GraphFileLoader(path).load()
    if parsed.graph is None:
        raise ParseError(1, "file declares no vertices")
    return parsed


def write_graph_file(
    path: Path,
    graph: MetricMeasureGraph,
    domain: Optional[Domain] = None,
    boundary_data: Optional[np.ndarray] = None,
    vertex_field: Optional[VertexField] = None,
    edge_field: Optional[EdgeField] = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_graph(graph, domain, boundary_data, vertex_field, edge_field), encoding="utf-8")
    logger.debug(f"Wrote graph file {path}")
    return path


def read_vertex_field(path: Path, domain: Domain) -> VertexField:
    """Read ``u`` records for every interior vertex of ``domain``."""
    parsed = GraphFileLoader(path).load(graph=domain.graph, domain=domain)
    if parsed.vertex_field is None:
        raise ParseError(1, "file has no 'u' records")
    return parsed.vertex_field


def read_boundary_data(path: Path, domain: Domain) -> np.ndarray:
    """Read ``f`` records for every boundary element of ``domain``."""
    parsed = GraphFileLoader(path).load(graph=domain.graph, domain=domain)
    if parsed.boundary_data is None:
        raise ParseError(1, "file has no 'f' records")
    return parsed.boundary_data


def read_edge_field(path: Path, domain: Domain) -> EdgeField:
    parsed = GraphFileLoader(path).load(graph=domain.graph, domain=domain)
    if parsed.edge_field is None:
        raise ParseError(1, "file has no 'x' records")
    return parsed.edge_field


def write_fields(
    path: Path,
    domain: Domain,
    boundary_data: Optional[np.ndarray] = None,
    vertex_field: Optional[VertexField] = None,
    edge_field: Optional[EdgeField] = None,
) -> Path:
    """Write field records only, to be read back against the same domain."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"mmgraph {FORMAT_VERSION}"] + _field_lines(domain, boundary_data, vertex_field, edge_field)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
