"""
Report type returned by every trajectory and spectral checker.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List


@dataclass
class CheckReport:
    """Outcome of a property check: per-item residuals and a pass flag.

    A residual is ``lhs - rhs`` of the inequality being checked, so the check
    passes when every enforced residual is at most ``slack``.
    """

    name: str
    passed: bool
    slack: float = 0.0
    times: List[float] = field(default_factory=list)
    residuals: List[float] = field(default_factory=list)
    details: Dict[str, Any] = field(default_factory=dict)

    @property
    def status(self) -> str:
        return "passed" if self.passed else "failed"

    @property
    def worst(self) -> float:
        return max(self.residuals, default=0.0)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "status": self.status,
            "slack": self.slack,
            "worst_residual": self.worst,
            "times": list(self.times),
            "residuals": list(self.residuals),
            **self.details,
        }
