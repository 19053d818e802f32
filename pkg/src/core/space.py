"""
Discrete metric measure spaces for tvflow.

A MetricMeasureGraph is a finite vertex set with positive masses and weighted
undirected edges. A Domain selects interior vertices; every edge leaving the
interior becomes one oriented boundary element (v, b) carrying the edge weight
as its perimeter measure.

Vertex fields are numpy arrays aligned with ``Domain.interior``; boundary data are
arrays aligned with ``Domain.boundary_elements``.
"""

from dataclasses import dataclass
from functools import cached_property
from typing import Dict, Iterable, Mapping, Sequence, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from loguru import logger

from src.core.errors import (
    DuplicateEdge,
    EmptyInterior,
    NonPositiveMeasure,
    NonPositiveWeight,
    SelfLoop,
)

VertexField = np.ndarray
BoundaryData = np.ndarray
BoundaryElement = Tuple[int, int]


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class MetricMeasureGraph:
    """Finite weighted graph with a vertex measure nu."""

    measure: np.ndarray
    edges: np.ndarray
    weights: np.ndarray

    @property
    def num_vertices(self) -> int:
        return int(self.measure.shape[0])

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def total_measure(self) -> float:
        return float(np.sum(self.measure))

    @cached_property
    def edge_lookup(self) -> Dict[Tuple[int, int], int]:
        """Map (i, j) with i < j to the edge position."""
        return {(int(i), int(j)): k for k, (i, j) in enumerate(self.edges)}

    def weight(self, i: int, j: int) -> float:
        """Weight of edge {i, j}; raises KeyError when absent."""
        key = (min(i, j), max(i, j))
        return float(self.weights[self.edge_lookup[key]])

    def adjacency(self) -> sparse.csr_matrix:
        """Symmetric weighted adjacency matrix."""
        n = self.num_vertices
        i, j = self.edges[:, 0], self.edges[:, 1]
        rows = np.concatenate([i, j])
        cols = np.concatenate([j, i])
        vals = np.concatenate([self.weights, self.weights])
        return sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


def build_graph(
    vertex_measures: Sequence[float],
    weighted_edges: Iterable[Tuple[int, int, float]],
) -> MetricMeasureGraph:
    """Validate inputs and build a MetricMeasureGraph.

    Args:
        vertex_measures: nu(v) for v = 0..n-1, all strictly positive.
        weighted_edges: (i, j, w) triples, w > 0, no self-loops or repeated pairs.

    Returns:
        Graph with edges stored as (min, max) pairs in lexicographic order.

    Raises:
        NonPositiveMeasure, NonPositiveWeight, DuplicateEdge, SelfLoop, ValueError.
    """
    measure = np.asarray(vertex_measures, dtype=float).reshape(-1)
    for v, m in enumerate(measure):
        if not np.isfinite(m) or m <= 0:
            raise NonPositiveMeasure(v, float(m))

    n = measure.shape[0]
    pairs: Dict[Tuple[int, int], float] = {}
    for entry in weighted_edges:
        i, j, w = int(entry[0]), int(entry[1]), float(entry[2])
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"Edge ({i}, {j}) references a vertex outside 0..{n - 1}")
        if i == j:
            raise SelfLoop(i)
        key = (min(i, j), max(i, j))
        if key in pairs:
            raise DuplicateEdge(key)
        if not np.isfinite(w) or w <= 0:
            raise NonPositiveWeight(key, w)
        pairs[key] = w

    ordered = sorted(pairs)
    edges = np.array(ordered, dtype=np.int64).reshape(-1, 2)
    weights = np.array([pairs[key] for key in ordered], dtype=float)

    logger.debug(f"Built graph with {n} vertices and {len(ordered)} edges")
    return MetricMeasureGraph(_frozen(measure.copy()), _frozen(edges), _frozen(weights))


@dataclass(frozen=True, eq=False)
class Domain:
    """Interior vertex set of a graph together with its crossing half-edges."""

    graph: MetricMeasureGraph
    interior: np.ndarray
    boundary_elements: Tuple[BoundaryElement, ...]
    perimeter: np.ndarray
    interior_edges: np.ndarray
    interior_weights: np.ndarray

    # ==================== Sizes ====================
    @property
    def num_interior(self) -> int:
        return int(self.interior.shape[0])

    @property
    def num_interior_edges(self) -> int:
        return int(self.interior_edges.shape[0])

    @property
    def num_boundary(self) -> int:
        return len(self.boundary_elements)

    @property
    def is_whole_space(self) -> bool:
        return self.num_boundary == 0 and self.num_interior == self.graph.num_vertices

    @cached_property
    def measure(self) -> np.ndarray:
        """nu restricted to the interior, aligned with ``interior``."""
        return _frozen(self.graph.measure[self.interior].copy())

    @property
    def total_measure(self) -> float:
        return float(np.sum(self.measure))

    @property
    def perimeter_total(self) -> float:
        """Discrete Per_nu(Omega): total weight of crossing edges."""
        return float(np.sum(self.perimeter))

    # ==================== Index maps ====================
    @cached_property
    def local_index(self) -> Dict[int, int]:
        return {int(v): k for k, v in enumerate(self.interior)}

    @cached_property
    def edge_tails(self) -> np.ndarray:
        return _frozen(np.array([self.local_index[int(i)] for i in self.interior_edges[:, 0]], dtype=np.int64))

    @cached_property
    def edge_heads(self) -> np.ndarray:
        return _frozen(np.array([self.local_index[int(j)] for j in self.interior_edges[:, 1]], dtype=np.int64))

    @cached_property
    def boundary_tails(self) -> np.ndarray:
        return _frozen(np.array([self.local_index[v] for v, _ in self.boundary_elements], dtype=np.int64))

    # ==================== Sparse operators ====================
    @cached_property
    def gradient_matrix(self) -> sparse.csr_matrix:
        """(du)_e = u(head) - u(tail) for interior edges oriented tail -> head."""
        k = self.num_interior_edges
        rows = np.concatenate([np.arange(k), np.arange(k)])
        cols = np.concatenate([self.edge_heads, self.edge_tails])
        vals = np.concatenate([np.ones(k), -np.ones(k)])
        return sparse.coo_matrix((vals, (rows, cols)), shape=(k, self.num_interior)).tocsr()

    @cached_property
    def boundary_matrix(self) -> sparse.csr_matrix:
        """Row beta selects the interior endpoint v of beta = (v, b)."""
        mb = self.num_boundary
        return sparse.coo_matrix(
            (np.ones(mb), (np.arange(mb), self.boundary_tails)),
            shape=(mb, self.num_interior),
        ).tocsr()

    @cached_property
    def flux_matrix(self) -> sparse.csr_matrix:
        """M with nu * div0(X) = M @ [X_interior; X_boundary]."""
        interior = -(self.gradient_matrix.T @ sparse.diags(self.interior_weights, 0, shape=(self.num_interior_edges, self.num_interior_edges)))
        boundary = self.boundary_matrix.T @ sparse.diags(self.perimeter, 0, shape=(self.num_boundary, self.num_boundary))
        return sparse.hstack([interior, boundary]).tocsr()

    # ==================== Connectivity ====================
    @cached_property
    def component_labels(self) -> np.ndarray:
        """Connected component label of each interior vertex (interior edges only)."""
        n = self.num_interior
        adj = sparse.coo_matrix(
            (np.ones(self.num_interior_edges), (self.edge_tails, self.edge_heads)),
            shape=(n, n),
        )
        _, labels = csgraph.connected_components(adj, directed=False)
        return _frozen(labels.astype(np.int64))

    @property
    def num_components(self) -> int:
        return int(self.component_labels.max()) + 1 if self.num_interior else 0

    def is_connected(self) -> bool:
        return self.num_components == 1

    # ==================== Field helpers ====================
    def vertex_field(self, values: Union[Mapping[int, float], Sequence[float], np.ndarray]) -> VertexField:
        """Coerce a mapping {global vertex: value} or an interior-aligned sequence to a field."""
        if isinstance(values, Mapping):
            field = np.empty(self.num_interior)
            for v, k in self.local_index.items():
                if v not in values:
                    raise ValueError(f"Vertex field has no value for interior vertex {v}")
                field[k] = float(values[v])
        else:
            field = np.asarray(values, dtype=float).reshape(-1).copy()
        return self.check_vertex_field(field)

    def check_vertex_field(self, u: np.ndarray) -> VertexField:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.num_interior,):
            raise ValueError(f"Vertex field has shape {u.shape}, expected ({self.num_interior},)")
        if not np.all(np.isfinite(u)):
            raise ValueError("Vertex field contains non-finite values")
        return u

    def boundary_data(self, values: Union[Mapping[BoundaryElement, float], Sequence[float], np.ndarray, float]) -> BoundaryData:
        """Coerce {(v, b): f} / an aligned sequence / a constant to boundary data."""
        if isinstance(values, Mapping):
            data = np.empty(self.num_boundary)
            for k, element in enumerate(self.boundary_elements):
                if element not in values:
                    raise ValueError(f"Boundary data has no value for element {element}")
                data[k] = float(values[element])
            return data
        if np.isscalar(values):
            return np.full(self.num_boundary, float(values))
        data = np.asarray(values, dtype=float).reshape(-1).copy()
        if data.shape != (self.num_boundary,):
            raise ValueError(f"Boundary data has shape {data.shape}, expected ({self.num_boundary},)")
        return data

    def as_vertex_mapping(self, u: VertexField) -> Dict[int, float]:
        return {int(v): float(u[k]) for k, v in enumerate(self.interior)}

    def as_boundary_mapping(self, values: np.ndarray) -> Dict[BoundaryElement, float]:
        return {element: float(values[k]) for k, element in enumerate(self.boundary_elements)}


def make_domain(graph: MetricMeasureGraph, interior: Iterable[int]) -> Domain:
    """Build the Domain with interior I and one boundary element per crossing half-edge.

    Raises:
        EmptyInterior: If interior is empty.
        ValueError: If interior references an unknown vertex.
    """
    members = sorted({int(v) for v in interior})
    if not members:
        raise EmptyInterior()
    for v in members:
        if not 0 <= v < graph.num_vertices:
            raise ValueError(f"Interior vertex {v} is not a vertex of the graph")

    inside = np.zeros(graph.num_vertices, dtype=bool)
    inside[members] = True

    interior_rows = []
    crossings = []
    for k, (i, j) in enumerate(graph.edges):
        i, j = int(i), int(j)
        if inside[i] and inside[j]:
            interior_rows.append(k)
        elif inside[i]:
            crossings.append(((i, j), graph.weights[k]))
        elif inside[j]:
            crossings.append(((j, i), graph.weights[k]))
        # edges with both endpoints outside are ignored

    crossings.sort(key=lambda item: item[0])
    boundary_elements = tuple(element for element, _ in crossings)
    perimeter = np.array([w for _, w in crossings], dtype=float)

    interior_rows = np.array(interior_rows, dtype=np.int64)
    interior_edges = graph.edges[interior_rows].copy() if interior_rows.size else np.zeros((0, 2), dtype=np.int64)
    interior_weights = graph.weights[interior_rows].copy() if interior_rows.size else np.zeros(0)

    domain = Domain(
        graph=graph,
        interior=_frozen(np.array(members, dtype=np.int64)),
        boundary_elements=boundary_elements,
        perimeter=_frozen(perimeter),
        interior_edges=_frozen(interior_edges),
        interior_weights=_frozen(interior_weights),
    )
    logger.debug(
        f"Domain: {domain.num_interior} interior vertices, {domain.num_interior_edges} interior edges, "
        f"{domain.num_boundary} boundary elements"
    )
    return domain


def whole_space(graph: MetricMeasureGraph) -> Domain:
    """Domain with every vertex interior and no boundary."""
    return make_domain(graph, range(graph.num_vertices))


def trace(domain: Domain, u: VertexField) -> np.ndarray:
    """Interior limit along each crossing edge: T u(v, b) = u(v)."""
    u = domain.check_vertex_field(u)
    return u[domain.boundary_tails].copy()


