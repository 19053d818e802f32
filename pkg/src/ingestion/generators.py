"""
Graph generators: paths, cycles, 2D grids and grids built from PGM images.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from loguru import logger

from src.core.space import Domain, MetricMeasureGraph, VertexField, build_graph, make_domain, whole_space
from src.ingestion.loaders.image_loader import load_pgm

GeneratorKind = Literal["path", "cycle", "grid2d", "from_image"]
GridBoundary = Literal["dirichlet", "neumann"]


@dataclass
class GeneratedGraph:
    graph: MetricMeasureGraph
    domain: Domain
    u0: Optional[VertexField] = None


def _check_size(name: str, value: int, minimum: int = 1) -> int:
    if int(value) < minimum:
        raise ValueError(f"{name} must be at least {minimum}, got {value}")
    return int(value)


def path_graph(n: int, weight: float = 1.0, measure: float = 1.0) -> GeneratedGraph:
    """Path 0 - 1 - ... - (n-1) as a whole space."""
    n = _check_size("n", n)
    graph = build_graph([measure] * n, [(i, i + 1, weight) for i in range(n - 1)])
    return GeneratedGraph(graph, whole_space(graph))


def cycle_graph(n: int, weight: float = 1.0, measure: float = 1.0) -> GeneratedGraph:
    n = _check_size("n", n, minimum=3)
    graph = build_graph([measure] * n, [(i, (i + 1) % n, weight) for i in range(n)])
    return GeneratedGraph(graph, whole_space(graph))


def grid2d(
    rows: int,
    cols: int,
    boundary: GridBoundary = "neumann",
    weight: float = 1.0,
    measure: float = 1.0,
) -> GeneratedGraph:
    """4-neighbour lattice with vertex r * cols + c.

    ``dirichlet`` makes the outermost ring exterior, so every edge from the
    ring into the interior becomes a boundary element; ``neumann`` keeps every
    vertex interior with no boundary.
    """
    rows = _check_size("rows", rows)
    cols = _check_size("cols", cols)
    if boundary == "dirichlet" and min(rows, cols) < 3:
        raise ValueError(f"Dirichlet grids need rows and cols >= 3 to leave an interior, got {rows}x{cols}")
    edges = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                edges.append((v, v + 1, weight))
            if r + 1 < rows:
                edges.append((v, v + cols, weight))
    graph = build_graph([measure] * (rows * cols), edges)

    if boundary == "neumann":
        domain = whole_space(graph)
    elif boundary == "dirichlet":
        interior = [r * cols + c for r in range(1, rows - 1) for c in range(1, cols - 1)]
        domain = make_domain(graph, interior)
    else:
        raise ValueError(f"Unknown grid boundary {boundary!r}")
    logger.debug(f"grid2d({rows}, {cols}, {boundary}): {domain.num_interior} interior vertices")
    return GeneratedGraph(graph, domain)


def from_image(path: Path, boundary: GridBoundary = "neumann", weight: float = 1.0, measure: float = 1.0) -> GeneratedGraph:
    """Grid over the pixels of a PGM image, with u0 = intensities in [0, 1]."""
    pixels = load_pgm(path)
    rows, cols = pixels.shape
    generated = grid2d(rows, cols, boundary, weight, measure)
    generated.u0 = pixels.reshape(-1)[generated.domain.interior].copy()
    return generated


def generate(kind: GeneratorKind, **params) -> GeneratedGraph:
    """Dispatch to a generator by name.

    Args:
        kind: One of path, cycle, grid2d, from_image.
        **params: Generator arguments (n, rows, cols, path, boundary, weight, measure).
    """
    if kind == "path":
        return path_graph(params["n"], params.get("weight", 1.0), params.get("measure", 1.0))
    if kind == "cycle":
        return cycle_graph(params["n"], params.get("weight", 1.0), params.get("measure", 1.0))
    if kind == "grid2d":
        return grid2d(
            params["rows"], params["cols"], params.get("boundary", "neumann"),
            params.get("weight", 1.0), params.get("measure", 1.0),
        )
    if kind == "from_image":
        return from_image(
            params["path"], params.get("boundary", "neumann"), params.get("weight", 1.0), params.get("measure", 1.0)
        )
    raise ValueError(f"Unknown generator {kind!r}")


def random_domain(
    rng: np.random.Generator,
    max_vertices: int = 50,
    edge_probability: float = 0.3,
    with_boundary: bool = True,
    low: float = 0.1,
    high: float = 10.0,
    max_interior: Optional[int] = None,
) -> GeneratedGraph:
    """Random graph with measures and weights uniform in (low, high).

    With ``with_boundary`` a random nonempty proper subset of at most
    ``max_interior`` vertices is the interior, otherwise the whole graph is.
    """
    n = int(rng.integers(2, max_vertices + 1))
    measures = rng.uniform(low, high, size=n)
    edges = [
        (i, j, float(rng.uniform(low, high)))
        for i in range(n)
        for j in range(i + 1, n)
        if rng.random() < edge_probability
    ]
    graph = build_graph(measures, edges)
    if not with_boundary:
        return GeneratedGraph(graph, whole_space(graph))
    cap = n - 1 if max_interior is None else min(n - 1, max_interior)
    size = int(rng.integers(1, cap + 1))
    interior = rng.choice(n, size=size, replace=False)
    return GeneratedGraph(graph, make_domain(graph, interior.tolist()))
