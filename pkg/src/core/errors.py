"""
Named error types for tvflow.

Validation problems are ValueErrors; outcome problems of iterative procedures are
RuntimeErrors carrying whatever partial result was reached.
"""

from typing import Any, Optional, Tuple


# ==================== Space / Calculus ====================
class NonPositiveMeasure(ValueError):
    def __init__(self, vertex: int, value: float):
        self.vertex = vertex
        self.value = value
        super().__init__(f"Vertex {vertex} has non-positive measure {value!r}")


class NonPositiveWeight(ValueError):
    def __init__(self, edge: Tuple[int, int], value: float):
        self.edge = edge
        self.value = value
        super().__init__(f"Edge {edge} has non-positive weight {value!r}")


class DuplicateEdge(ValueError):
    def __init__(self, edge: Tuple[int, int]):
        self.edge = edge
        super().__init__(f"Edge {edge} appears more than once")


class SelfLoop(ValueError):
    def __init__(self, vertex: int):
        self.vertex = vertex
        super().__init__(f"Self-loop at vertex {vertex}")


class EmptyInterior(ValueError):
    def __init__(self):
        super().__init__("Domain interior must contain at least one vertex")


class MissingBoundaryData(ValueError):
    def __init__(self, detail: str = "Dirichlet condition requires boundary data f"):
        super().__init__(detail)


class NonPositiveK(ValueError):
    def __init__(self, k: float):
        self.k = k
        super().__init__(f"Truncation level must be positive, got {k!r}")


# ==================== Resolvent / Asymptotics ====================
class InfeasibleDual(ValueError):
    pass


class ZeroField(ValueError):
    def __init__(self):
        super().__init__("Rayleigh quotient is undefined for the zero field")


class NonZeroMean(ValueError):
    def __init__(self, mean: float):
        self.mean = mean
        super().__init__(f"Field must have zero nu-mean under Neumann conditions, mean={mean:.3e}")


class GridMismatch(ValueError):
    pass


# ==================== I/O ====================
class ParseError(ValueError):
    def __init__(self, line: int, reason: str):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class UnsupportedImageFormat(ValueError):
    pass


# ==================== Outcome errors ====================
class NotConverged(RuntimeError):
    def __init__(self, gap: float, iterations: int, certificate: Any = None, step: Optional[int] = None):
        self.gap = gap
        self.iterations = iterations
        self.certificate = certificate
        self.step = step
        self.trajectory = None
        where = f" at flow step {step}" if step is not None else ""
        super().__init__(f"Resolvent not converged{where}: gap={gap:.3e} after {iterations} iterations")


class NotReached(RuntimeError):
    def __init__(self, horizon: float):
        self.horizon = horizon
        super().__init__(f"Steady state not reached by horizon T={horizon}")


class NotExtinct(RuntimeError):
    def __init__(self, detail: str = "Trajectory has not reached extinction"):
        super().__init__(detail)


class BudgetExceeded(RuntimeError):
    def __init__(self, budget: int, best: Any = None):
        self.budget = budget
        self.best = best
        super().__init__(f"Subset search exceeded its budget of {budget} evaluations")
