"""
CSV and JSON output for tvflow runs.

Numeric series go to CSV with 17 significant digits so values round-trip;
summaries go to a small JSON document with sorted keys. Neither carries
timestamps, so identical runs produce identical bytes.
"""

import json
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List

import numpy as np
import pandas as pd
from loguru import logger

from src.core.calculus import lp_norm, nu_mean, total_variation
from src.core.reports import CheckReport
from src.ingestion.loaders.graph_loader import write_fields
from src.solvers.flow import FlowTrajectory
from src.solvers.resolvent import ResolventCertificate, ResolventProblem

FLOAT_FORMAT = "%.17g"
TRAJECTORY_COLUMNS = ["t", "vertex", "u", "v", "tv", "mean", "l1", "l2", "linf", "gap"]


def trajectory_frame(trajectory: FlowTrajectory) -> pd.DataFrame:
    """Long-format table with one row per (grid time, interior vertex).

    ``v`` and ``gap`` are empty at t = 0, which has no resolvent step.
    """
    domain, bc = trajectory.domain, trajectory.bc
    vertices = domain.interior
    blocks = []
    for n, (t, u) in enumerate(zip(trajectory.times, trajectory.states)):
        if n == 0:
            v = np.full(domain.num_interior, np.nan)
            gap = np.nan
        else:
            v = trajectory.velocity(n)
            gap = trajectory.certificates[n - 1].gap
        blocks.append(
            pd.DataFrame(
                {
                    "t": t,
                    "vertex": vertices,
                    "u": u,
                    "v": v,
                    "tv": total_variation(domain, u, bc),
                    "mean": nu_mean(domain, u),
                    "l1": lp_norm(domain, u, 1),
                    "l2": lp_norm(domain, u, 2),
                    "linf": lp_norm(domain, u, np.inf),
                    "gap": gap,
                }
            )
        )
    return pd.concat(blocks, ignore_index=True)[TRAJECTORY_COLUMNS]


def resolvent_frame(problem: ResolventProblem, certificate: ResolventCertificate) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "vertex": problem.domain.interior,
            "g": problem.g,
            "u": certificate.u,
            "v": certificate.v,
            "gap": certificate.gap,
        }
    )


def reports_frame(reports: Iterable[CheckReport]) -> pd.DataFrame:
    rows = [
        {"check": r.name, "status": r.status, "worst_residual": r.worst, "slack": r.slack, "items": len(r.residuals)}
        for r in reports
    ]
    return pd.DataFrame(rows, columns=["check", "status", "worst_residual", "slack", "items"])


def write_csv(frame: pd.DataFrame, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.debug(f"Wrote {len(frame)} rows to {path}")
    return path


def write_trajectory_csv(trajectory: FlowTrajectory, path: Path) -> Path:
    return write_csv(trajectory_frame(trajectory), path)


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        # JSON has no infinities or NaN
        return value if math.isfinite(value) else str(value)
    if isinstance(value, Path):
        return str(value)
    return value


def write_summary(summary: Dict[str, Any], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.debug(f"Wrote summary {path}")
    return path


def _edge_records(problem: ResolventProblem, field) -> List[List[float]]:
    return [[x, y, value] for (x, y), value in field.as_mapping(problem.domain).items()]


def write_certificate(problem: ResolventProblem, certificate: ResolventCertificate, path: Path) -> Path:
    """Dump a resolvent certificate.

    ``path`` gets a JSON document with the condition report, gap, iteration
    count, u, v and the dual fields Y and X as [x, y, value] records.
    A sibling ``.fields.mmg`` file carries u and X as field records that
    read_vertex_field / read_edge_field load back against the same domain.
    """
    path = Path(path)
    document = {
        "lambda": certificate.lam,
        "gap": certificate.gap,
        "iterations": certificate.iterations,
        "converged": certificate.converged,
        "condition_report": certificate.condition_report.to_dict() if certificate.condition_report else None,
        "vertices": problem.domain.interior,
        "u": certificate.u,
        "v": certificate.v,
        "Y": _edge_records(problem, certificate.Y),
        "X": _edge_records(problem, certificate.X),
    }
    write_summary(document, path)
    write_fields(path.with_suffix(".fields.mmg"), problem.domain, vertex_field=certificate.u, edge_field=certificate.X)
    logger.info(f"Wrote certificate {path}")
    return path


def format_reports(reports: List[CheckReport]) -> str:
    """Plain-text table of check outcomes for the console."""
    if not reports:
        return "(no checks)"
    width = max(len(r.name) for r in reports)
    return "\n".join(f"{r.name:<{width}}  {r.status:<6}  worst={r.worst:.3e}" for r in reports)
