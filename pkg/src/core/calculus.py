"""
First-order calculus on a Domain: differential, zero-trace divergence, total
variation, Anzellotti pairing, normal trace, theta density and truncation.

Sign conventions (checked by gauss_green_residual):
    (du)_{x->y}        = u(y) - u(x)
    div0 X (v)         = (1/nu(v)) * sum_{y ~ v} w_{vy} X_{v->y}   (interior and boundary edges)
    (X . nu_Omega)^-   = -X_{v->b} on the boundary element (v, b)
so that sum nu u div0 X + sum_e w X du + sum_beta w_beta u(v) (X . nu)^- = 0.
"""

from dataclasses import dataclass
from typing import Dict, Literal, Mapping, Optional, Tuple

import numpy as np

from src.core.errors import MissingBoundaryData, NonPositiveK
from src.core.space import Domain, VertexField, trace

Scope = Literal["interior", "interior-and-boundary"]
BCKind = Literal["neumann", "whole", "dirichlet"]


# ==================== Boundary conditions ====================
@dataclass(frozen=True, eq=False)
class BoundaryCondition:
    """Neumann, whole-space or Dirichlet(f) boundary condition."""

    kind: BCKind
    f: Optional[np.ndarray] = None

    @classmethod
    def neumann(cls) -> "BoundaryCondition":
        return cls("neumann")

    @classmethod
    def whole_space(cls) -> "BoundaryCondition":
        return cls("whole")

    @classmethod
    def dirichlet(cls, f: Optional[np.ndarray]) -> "BoundaryCondition":
        return cls("dirichlet", None if f is None else np.asarray(f, dtype=float))

    @classmethod
    def homogeneous_dirichlet(cls, domain: Domain) -> "BoundaryCondition":
        return cls("dirichlet", np.zeros(domain.num_boundary))

    @property
    def is_dirichlet(self) -> bool:
        return self.kind == "dirichlet"

    def data(self, domain: Domain) -> np.ndarray:
        """Boundary data aligned with domain.boundary_elements.

        Raises:
            MissingBoundaryData: For Dirichlet without f.
        """
        if not self.is_dirichlet:
            return np.zeros(domain.num_boundary)
        if self.f is None:
            raise MissingBoundaryData()
        if self.f.shape != (domain.num_boundary,):
            raise MissingBoundaryData(
                f"Boundary data has shape {self.f.shape}, domain has {domain.num_boundary} boundary elements"
            )
        return self.f

    def validate(self, domain: Domain) -> None:
        if self.kind == "whole" and domain.num_boundary:
            raise ValueError("Whole-space condition requires a domain without boundary elements")
        self.data(domain)

    def __repr__(self) -> str:
        return f"BoundaryCondition({self.kind})"


# ==================== Edge fields ====================
@dataclass(frozen=True, eq=False)
class EdgeField:
    """Antisymmetric edge field stored in one orientation per edge.

    ``interior[e]`` is X_{tail->head} for interior edge e (tail < head);
    ``boundary[k]`` is X_{v->b} for boundary element k = (v, b).
    """

    interior: np.ndarray
    boundary: np.ndarray
    scope: Scope = "interior-and-boundary"

    @property
    def sup_norm(self) -> float:
        parts = [np.abs(self.interior), np.abs(self.boundary)]
        return float(max((p.max() for p in parts if p.size), default=0.0))

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.interior, self.boundary])

    def clamped(self, bound: float) -> "EdgeField":
        """Clip every value to [-bound, bound] so that sup_norm <= bound holds exactly."""
        return EdgeField(
            np.clip(self.interior, -bound, bound),
            np.clip(self.boundary, -bound, bound),
            self.scope,
        )

    def scaled(self, factor: float) -> "EdgeField":
        return EdgeField(self.interior * factor, self.boundary * factor, self.scope)

    def value(self, domain: Domain, x: int, y: int) -> float:
        """X_{x->y} for global vertices x, y; negates on reverse lookup."""
        key = (min(x, y), max(x, y))
        edges = domain.interior_edges
        hits = np.flatnonzero((edges[:, 0] == key[0]) & (edges[:, 1] == key[1]))
        if hits.size:
            val = float(self.interior[hits[0]])
            return val if x < y else -val
        for k, (v, b) in enumerate(domain.boundary_elements):
            if (v, b) == (x, y):
                return float(self.boundary[k])
            if (b, v) == (x, y):
                return -float(self.boundary[k])
        raise KeyError(f"({x}, {y}) is not an edge of the domain")

    def as_mapping(self, domain: Domain) -> Dict[Tuple[int, int], float]:
        """{(x, y): X_{x->y}} in storage orientation."""
        out = {(int(i), int(j)): float(val) for (i, j), val in zip(domain.interior_edges, self.interior)}
        out.update({element: float(val) for element, val in zip(domain.boundary_elements, self.boundary)})
        return out


def edge_field(
    domain: Domain,
    interior: Optional[np.ndarray] = None,
    boundary: Optional[np.ndarray] = None,
) -> EdgeField:
    """Build a field from aligned arrays; missing boundary values mean interior-only scope."""
    inner = np.zeros(domain.num_interior_edges) if interior is None else np.asarray(interior, dtype=float).copy()
    if inner.shape != (domain.num_interior_edges,):
        raise ValueError(f"Interior edge values have shape {inner.shape}, expected ({domain.num_interior_edges},)")
    if boundary is None:
        return EdgeField(inner, np.zeros(domain.num_boundary), "interior")
    outer = np.asarray(boundary, dtype=float).copy()
    if outer.shape != (domain.num_boundary,):
        raise ValueError(f"Boundary edge values have shape {outer.shape}, expected ({domain.num_boundary},)")
    return EdgeField(inner, outer, "interior-and-boundary")


def zero_field(domain: Domain) -> EdgeField:
    return edge_field(domain, boundary=np.zeros(domain.num_boundary))


def edge_field_from_mapping(domain: Domain, values: Mapping[Tuple[int, int], float]) -> EdgeField:
    """Build a field from {(x, y): X_{x->y}}; unspecified edges are 0."""
    inner = np.zeros(domain.num_interior_edges)
    outer = np.zeros(domain.num_boundary)
    edge_pos = {(int(i), int(j)): k for k, (i, j) in enumerate(domain.interior_edges)}
    boundary_pos = {element: k for k, element in enumerate(domain.boundary_elements)}
    for (x, y), val in values.items():
        x, y, val = int(x), int(y), float(val)
        if (x, y) in edge_pos:
            inner[edge_pos[(x, y)]] = val
        elif (y, x) in edge_pos:
            inner[edge_pos[(y, x)]] = -val
        elif (x, y) in boundary_pos:
            outer[boundary_pos[(x, y)]] = val
        elif (y, x) in boundary_pos:
            outer[boundary_pos[(y, x)]] = -val
        else:
            raise KeyError(f"({x}, {y}) is not an edge of the domain")
    return EdgeField(inner, outer, "interior-and-boundary")


@dataclass(frozen=True, eq=False)
class EdgeMeasure:
    """Signed mass per interior edge."""

    mass: np.ndarray

    @property
    def total(self) -> float:
        return float(np.sum(self.mass))

    def as_mapping(self, domain: Domain) -> Dict[Tuple[int, int], float]:
        return {(int(i), int(j)): float(m) for (i, j), m in zip(domain.interior_edges, self.mass)}


# ==================== Norms ====================
def lp_norm(domain: Domain, u: np.ndarray, q: float = 2.0) -> float:
    """||u||_{L^q(Omega, nu)} for q in [1, inf]."""
    u = np.asarray(u, dtype=float)
    if u.size == 0:
        return 0.0
    if np.isinf(q):
        return float(np.max(np.abs(u)))
    return float(np.sum(domain.measure * np.abs(u) ** q) ** (1.0 / q))


def positive_part(u: np.ndarray) -> np.ndarray:
    return np.maximum(u, 0.0)


def nu_mean(domain: Domain, u: VertexField) -> float:
    return float(np.dot(domain.measure, u) / domain.total_measure)


def component_means(domain: Domain, u: VertexField) -> np.ndarray:
    """Field equal to the nu-mean of u on each connected component."""
    labels = domain.component_labels
    mass = np.bincount(labels, weights=domain.measure)
    total = np.bincount(labels, weights=domain.measure * u)
    return (total / mass)[labels]


# ==================== Operators ====================
def differential(domain: Domain, u: VertexField) -> EdgeField:
    """(du)_{x->y} = u(y) - u(x) on interior edges."""
    u = domain.check_vertex_field(u)
    return EdgeField(domain.gradient_matrix @ u, np.zeros(domain.num_boundary), "interior")


def divergence0(domain: Domain, X: EdgeField) -> VertexField:
    """Zero-trace divergence, boundary fluxes included (0 for interior-only fields)."""
    return (domain.flux_matrix @ X.stacked()) / domain.measure


def total_variation(domain: Domain, u: VertexField, bc: BoundaryCondition) -> float:
    """|Du|(Omega) [+ boundary penalty sum w_beta |T u - f| for Dirichlet]."""
    u = domain.check_vertex_field(u)
    tv = float(np.dot(domain.interior_weights, np.abs(domain.gradient_matrix @ u)))
    if bc.is_dirichlet:
        f = bc.data(domain)
        tv += float(np.dot(domain.perimeter, np.abs(trace(domain, u) - f)))
    return tv


def pairing(domain: Domain, X: EdgeField, u: VertexField) -> EdgeMeasure:
    """(X, Du) with mass w_e X_e (du)_e on interior edges."""
    du = differential(domain, u).interior
    return EdgeMeasure(domain.interior_weights * X.interior * du)


def normal_trace(domain: Domain, X: EdgeField) -> np.ndarray:
    """(X . nu_Omega)^-(v, b) = -X_{v->b}."""
    return -np.asarray(X.boundary, dtype=float)


def gauss_green_terms(domain: Domain, u: VertexField, X: EdgeField) -> Tuple[float, float, float]:
    """The three terms of the Gauss-Green identity: volume, pairing, boundary."""
    u = domain.check_vertex_field(u)
    volume = float(np.dot(domain.measure * u, divergence0(domain, X)))
    interior = pairing(domain, X, u).total
    boundary = float(np.dot(domain.perimeter * trace(domain, u), normal_trace(domain, X)))
    return volume, interior, boundary


def gauss_green_residual(domain: Domain, u: VertexField, X: EdgeField) -> float:
    """int u div0 X dnu + int (X, Du) + int T u (X . nu)^- d|D chi|; zero up to rounding."""
    return float(sum(gauss_green_terms(domain, u, X)))


def theta_density(domain: Domain, X: EdgeField, u: VertexField) -> Dict[Tuple[int, int], float]:
    """theta_e = X_e sign((du)_e), only on edges where (du)_e != 0."""
    du = differential(domain, u).interior
    support = np.flatnonzero(du != 0)
    return {
        (int(domain.interior_edges[e, 0]), int(domain.interior_edges[e, 1])): float(X.interior[e] * np.sign(du[e]))
        for e in support
    }


def truncate(u: VertexField, k: float) -> VertexField:
    """T_k u = clamp(u, -k, k)."""
    if not k > 0:
        raise NonPositiveK(k)
    return np.clip(np.asarray(u, dtype=float), -k, k)


def variational_inequality_residual(
    domain: Domain,
    u: VertexField,
    v: VertexField,
    X: EdgeField,
    w: VertexField,
    bc: BoundaryCondition,
) -> float:
    """RHS - LHS of int v (w - u) dnu <= int (X, Dw) - int |Du| [+ boundary terms].

    Nonnegative for certified pairs (u, v) and any test function w; zero up to
    rounding when X also certifies the equality form.
    """
    lhs = float(np.dot(domain.measure * v, w - u))
    du = differential(domain, u).interior
    rhs = pairing(domain, X, w).total - float(np.dot(domain.interior_weights, np.abs(du)))
    if bc.is_dirichlet:
        f = bc.data(domain)
        nt = normal_trace(domain, X)
        rhs += float(np.dot(domain.perimeter, nt * (trace(domain, w) - f)))
        rhs -= float(np.dot(domain.perimeter, np.abs(trace(domain, u) - f)))
    return rhs - lhs


