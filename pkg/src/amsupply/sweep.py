"""Lead-time sweeps and the cost-benefit point.

A sweep solves the design model once per grid value of the maximum lead
time. Tightening the lead time forces more production centers and raises
cost, so the curve traces the cost versus responsiveness trade-off.

The cost-benefit point is the crossing of the two min-max normalized
series (total cost and max lead time) when the feasible points are read in
order of decreasing lead time, i.e. increasing PC count.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from amsupply.locdesign import OPTIMAL, DesignModel, DesignSolution, build_design_model, solve_design
from amsupply.model import Instance
from amsupply.pmedian import ClusterSolution

CURVE_HEADER = (
    "max_lead_hours",
    "total_cost",
    "pc_count",
    "printer_total",
    "worst_lead_hours",
    "status",
    "solve_seconds",
)
COST_TOLERANCE = 1e-6


class SweepError(ValueError):
    pass


class InsufficientPointsError(SweepError):
    pass


class CurveFormatError(ValueError):
    pass


@dataclass(frozen=True)
class SweepPoint:
    max_lead_hours: float
    status: str
    total_cost: float | None = None
    pc_count: int | None = None
    printer_total: int | None = None
    worst_lead_hours: float | None = None
    solve_seconds: float | None = None
    design: DesignSolution | None = field(default=None, compare=False, repr=False)

    @property
    def feasible(self) -> bool:
        return self.status == OPTIMAL

    @classmethod
    def from_solution(cls, hours: float, solution: DesignSolution) -> "SweepPoint":
        if solution.status != OPTIMAL:
            return cls(hours, solution.status, solve_seconds=solution.solve_seconds, design=solution)
        return cls(
            max_lead_hours=hours,
            status=solution.status,
            total_cost=solution.total_cost,
            pc_count=solution.pc_count,
            printer_total=solution.printer_total,
            worst_lead_hours=solution.worst_lead_hours,
            solve_seconds=solution.solve_seconds,
            design=solution,
        )


@dataclass(frozen=True)
class SelectedPoint:
    index: int  # position in curve.points
    point: SweepPoint
    normalized_cost: float
    normalized_lead: float
    degenerate: bool = False


@dataclass
class SweepCurve:
    points: list[SweepPoint]
    selected: SelectedPoint | None = None
    invariance_threshold: float | None = None

    def __post_init__(self):
        hours = [p.max_lead_hours for p in self.points]
        if hours != sorted(hours):
            raise SweepError("sweep points must be sorted by max_lead_hours")

    @property
    def feasible(self) -> list[SweepPoint]:
        return [p for p in self.points if p.feasible]

    def cost_increases(self, tol: float = COST_TOLERANCE) -> list[tuple[float, float]]:
        """Adjacent feasible grid values where cost went up with a looser lead time."""
        feas = self.feasible
        return [
            (a.max_lead_hours, b.max_lead_hours)
            for a, b in zip(feas, feas[1:])
            if b.total_cost > a.total_cost + tol
        ]

    def infeasible_prefix_only(self) -> bool:
        seen_feasible = False
        for p in self.points:
            if p.feasible:
                seen_feasible = True
            elif seen_feasible:
                return False
        return True


def lead_time_grid(from_h: float, to_h: float, step_h: float) -> list[float]:
    if not (math.isfinite(from_h) and math.isfinite(to_h) and math.isfinite(step_h)):
        raise SweepError("sweep bounds must be finite")
    if step_h <= 0:
        raise SweepError("step must be > 0")
    if from_h > to_h:
        raise SweepError("from must be <= to")
    count = int(math.floor((to_h - from_h) / step_h + 1e-9)) + 1
    return [float(round(from_h + k * step_h, 9)) for k in range(count)]


def invariance_threshold(points: Sequence[SweepPoint]) -> float | None:
    """Smallest grid value from which every later design is identical.

    None when the last grid point is infeasible (nothing settles).
    """
    if not points or not points[-1].feasible or points[-1].design is None:
        return None
    final = points[-1].design.signature()
    start = len(points) - 1
    while start > 0:
        prev = points[start - 1]
        if not prev.feasible or prev.design is None or prev.design.signature() != final:
            break
        start -= 1
    return points[start].max_lead_hours


def _solve_point(model: DesignModel, hours: float) -> SweepPoint:
    return SweepPoint.from_solution(hours, solve_design(model.with_max_lead(hours)))


def sweep_model(model: DesignModel, grid: Sequence[float], jobs: int | None = 1) -> SweepCurve:
    grid = sorted(grid)
    if jobs is None:
        jobs = os.cpu_count() or 1
    if jobs > 1 and len(grid) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(grid))) as pool:
            # map keeps grid order regardless of completion order
            points = list(pool.map(_solve_point, [model] * len(grid), grid))
    else:
        points = [_solve_point(model, h) for h in grid]
    curve = SweepCurve(points)
    curve.invariance_threshold = invariance_threshold(points)
    if len(curve.feasible) >= 2:
        curve.selected = find_cost_benefit_point(curve)
    return curve


def sweep_lead_time(
    instance: Instance,
    clusters: ClusterSolution,
    from_h: float,
    to_h: float,
    step_h: float = 1.0,
    jobs: int | None = 1,
) -> SweepCurve:
    grid = lead_time_grid(from_h, to_h, step_h)
    model = build_design_model(clusters, instance, grid[0])
    return sweep_model(model, grid, jobs)


def _normalize(values: Sequence[float]) -> list[float] | None:
    lo, hi = min(values), max(values)
    if hi - lo <= 0:
        return None
    return [(v - lo) / (hi - lo) for v in values]


def find_cost_benefit_point(curve: SweepCurve) -> SelectedPoint:
    feas_idx = [i for i, p in enumerate(curve.points) if p.feasible]
    if len(feas_idx) < 2:
        raise InsufficientPointsError("need at least two feasible sweep points")
    # read from the loosest lead time down, i.e. as PCs are added
    order = sorted(feas_idx, key=lambda i: -curve.points[i].max_lead_hours)
    costs = [curve.points[i].total_cost for i in order]
    leads = [curve.points[i].max_lead_hours for i in order]
    ncost = _normalize(costs)
    nlead = _normalize(leads)
    if ncost is None or nlead is None:
        k = min(range(len(order)), key=lambda j: (costs[j], leads[j]))
        return SelectedPoint(
            order[k],
            curve.points[order[k]],
            0.0 if ncost is None else ncost[k],
            0.0 if nlead is None else nlead[k],
            degenerate=True,
        )
    k = next(j for j in range(len(order)) if ncost[j] >= nlead[j])
    if k > 0:
        here, before = abs(ncost[k] - nlead[k]), abs(ncost[k - 1] - nlead[k - 1])
        # k has the smaller max_lead_hours of the two, so it also wins ties
        if before < here:
            k -= 1
    return SelectedPoint(order[k], curve.points[order[k]], ncost[k], nlead[k])


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def export_curve(curve: SweepCurve, path: str | Path, timings: bool = True) -> None:
    """Write the curve as CSV; the selected point goes in a trailing comment row.

    With ``timings=False`` the solve_seconds column is left blank so that
    repeated runs produce identical files.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CURVE_HEADER)
        for p in curve.points:
            writer.writerow(
                [
                    _fmt(float(p.max_lead_hours)),
                    _fmt(p.total_cost),
                    _fmt(p.pc_count),
                    _fmt(p.printer_total),
                    _fmt(p.worst_lead_hours),
                    p.status,
                    _fmt(p.solve_seconds) if timings else "",
                ]
            )
        if curve.selected is not None:
            s = curve.selected
            tag = " degenerate=true" if s.degenerate else ""
            fh.write(
                f"# selected max_lead_hours={_fmt(float(s.point.max_lead_hours))} "
                f"total_cost={_fmt(s.point.total_cost)} pc_count={s.point.pc_count} "
                f"normalized_cost={_fmt(float(s.normalized_cost))} "
                f"normalized_lead={_fmt(float(s.normalized_lead))}{tag}\n"
            )


def _opt(text: str, kind):
    return None if text == "" else kind(text)


def load_curve(path: str | Path) -> SweepCurve:
    """Parse a CSV written by export_curve; designs are not stored, so they come back as None."""
    points, selected = [], None
    with open(path, newline="", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    body = [line for line in lines if not line.startswith("#")]
    for line in lines:
        if line.startswith("# selected"):
            selected = dict(item.split("=", 1) for item in line[len("# selected"):].split())
    reader = csv.reader(body)
    header = next(reader, None)
    if header is None or tuple(header) != CURVE_HEADER:
        raise CurveFormatError(f"{path}: expected header {','.join(CURVE_HEADER)}")
    for row in reader:
        if len(row) != len(CURVE_HEADER):
            raise CurveFormatError(f"{path}: bad row {row!r}")
        points.append(
            SweepPoint(
                max_lead_hours=float(row[0]),
                total_cost=_opt(row[1], float),
                pc_count=_opt(row[2], int),
                printer_total=_opt(row[3], int),
                worst_lead_hours=_opt(row[4], float),
                status=row[5],
                solve_seconds=_opt(row[6], float),
            )
        )
    curve = SweepCurve(points)
    if selected is not None:
        hours = float(selected["max_lead_hours"])
        idx = next((i for i, p in enumerate(points) if p.max_lead_hours == hours), None)
        if idx is None:
            raise CurveFormatError(f"{path}: selected point {hours} is not on the curve")
        curve.selected = SelectedPoint(
            idx,
            points[idx],
            float(selected["normalized_cost"]),
            float(selected["normalized_lead"]),
            degenerate=selected.get("degenerate") == "true",
        )
    return curve


def write_curve_svg(curve: SweepCurve, path: str | Path, width: int = 640, height: int = 360) -> None:
    """Line chart of normalized cost and normalized lead time against PC order."""
    feas = sorted(curve.feasible, key=lambda p: -p.max_lead_hours)
    margin = 40
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
    ]
    ncost = _normalize([p.total_cost for p in feas]) if len(feas) >= 2 else None
    nlead = _normalize([p.max_lead_hours for p in feas]) if len(feas) >= 2 else None
    if ncost and nlead:
        span = len(feas) - 1

        def xy(j: int, v: float) -> str:
            x = margin + (width - 2 * margin) * j / span
            y = height - margin - (height - 2 * margin) * v
            return f"{x:.1f},{y:.1f}"

        for series, color, label in ((ncost, "#c0392b", "normalized cost"), (nlead, "#2471a3", "normalized lead time")):
            pts = " ".join(xy(j, v) for j, v in enumerate(series))
            parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"><title>{label}</title></polyline>')
        if curve.selected is not None and not curve.selected.degenerate:
            j = next(k for k, p in enumerate(feas) if p.max_lead_hours == curve.selected.point.max_lead_hours)
            x, y = xy(j, curve.selected.normalized_cost).split(",")
            parts.append(f'<circle cx="{x}" cy="{y}" r="5" fill="none" stroke="black"/>')
        parts.append(
            f'<text x="{width / 2:.0f}" y="{height - 10}" text-anchor="middle" font-size="12">'
            "feasible points by decreasing max lead time</text>"
        )
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")
