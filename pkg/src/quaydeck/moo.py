"""Pareto-front machinery: dominance, filtering, normalization, hypervolume,
sparsity, and multi-seed policy evaluation.

Objectives are costs (lower is better) everywhere: crane idle time reported
in minutes per crane and empty travel in meters per task, matching how fronts
are tabulated. Min-max normalization is affine per objective, so evaluating
in these units changes no normalized quantity.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .env import FeatureScales, rollout
from .instance import TerminalInstance

FRONT_COLUMNS = ["p1", "p2", "objective_idle", "objective_dist",
                 "norm_idle", "norm_dist", "label"]


@dataclass(frozen=True)
class PolicyPoint:
    preference: tuple[float, float]
    objectives: tuple[float, float]  # (idle min/crane, empty m/task)
    label: str = ""

    def __post_init__(self):
        obj = np.asarray(self.objectives)
        if not np.all(np.isfinite(obj)) or np.any(obj < 0):
            raise ValueError(f"objectives must be finite and non-negative: {obj}")


@dataclass(frozen=True)
class NormalizationBounds:
    lo: tuple[float, float]
    hi: tuple[float, float]


@dataclass
class ParetoSet:
    points: list[PolicyPoint] = field(default_factory=list)
    bounds: NormalizationBounds | None = None

    def objective_array(self) -> np.ndarray:
        return np.array([p.objectives for p in self.points], dtype=float)


def dominates(a, b) -> bool:
    """Cost-space dominance: a is no worse everywhere and better somewhere."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return bool(np.all(a <= b) and np.any(a < b))


def nondominated_indices(values: np.ndarray) -> list[int]:
    """Indices of the non-dominated rows; exact duplicates keep the first.

    For two objectives: one sort plus a sweep instead of pairwise tests.
    """
    values = np.asarray(values, dtype=float)
    n = len(values)
    if n == 0:
        return []
    if values.shape[1] != 2:
        keep: list[int] = []
        seen: list[np.ndarray] = []
        for i, v in enumerate(values):
            if any(np.array_equal(v, s) for s in seen):
                continue
            if any(dominates(values[j], v) for j in range(n) if j != i):
                continue
            keep.append(i)
            seen.append(v)
        return keep
    order = sorted(range(n), key=lambda i: (values[i, 0], values[i, 1], i))
    keep = []
    best_y = np.inf
    last: tuple[float, float] | None = None
    for i in order:
        x, y = values[i]
        if (x, y) == last:
            continue
        if y < best_y:
            keep.append(i)
            best_y = y
            last = (x, y)
    return sorted(keep)


def pareto_filter(points: list[PolicyPoint]) -> ParetoSet:
    if not points:
        raise ValueError("need at least one point")
    values = np.array([p.objectives for p in points], dtype=float)
    keep = nondominated_indices(values)
    return ParetoSet([points[i] for i in keep])


def normalize(values: np.ndarray) -> tuple[np.ndarray, NormalizationBounds]:
    """Min-max scale each objective over the pooled comparison set."""
    values = np.asarray(values, dtype=float)
    if values.ndim != 2 or len(values) < 2:
        raise ValueError("need at least two points to normalize")
    lo = values.min(axis=0)
    hi = values.max(axis=0)
    span = hi - lo
    degenerate = np.nonzero(span == 0)[0]
    if degenerate.size:
        raise ValueError(
            f"objective {int(degenerate[0])} is constant over the comparison set"
        )
    z = (values - lo) / span
    return z, NormalizationBounds(tuple(lo.tolist()), tuple(hi.tolist()))


def apply_bounds(values: np.ndarray, bounds: NormalizationBounds) -> np.ndarray:
    lo = np.asarray(bounds.lo)
    hi = np.asarray(bounds.hi)
    return (np.asarray(values, dtype=float) - lo) / (hi - lo)


def hypervolume_2d(points: np.ndarray, reference=(1.0, 1.0)) -> float:
    """Exact dominated area between a normalized front and the reference.

    Points must lie in [0, 1]^2 and be mutually non-dominated; ties on the
    first objective collapse to the point with the smaller second objective.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) == 0:
        raise ValueError("need a non-empty (n, 2) array")
    if np.any(pts > 1.0) or np.any(pts < 0.0):
        raise ValueError("points must lie within the unit square")
    ref_x, ref_y = float(reference[0]), float(reference[1])
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    swept: list[tuple[float, float]] = []
    for i in order:
        x, y = pts[i]
        if swept and swept[-1][0] == x:
            continue  # tie on the first objective: keep the smaller second
        swept.append((float(x), float(y)))
    for (x0, y0), (x1, y1) in zip(swept, swept[1:]):
        if y1 >= y0:
            raise ValueError("points are not mutually non-dominated")
    area = 0.0
    for i, (x, y) in enumerate(swept):
        next_x = swept[i + 1][0] if i + 1 < len(swept) else ref_x
        area += (next_x - x) * (ref_y - y)
    return area


def sparsity(points: np.ndarray, m: int = 2) -> float:
    """Mean squared gap between neighbors per objective; lower is more even."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or len(pts) < 2:
        raise ValueError("sparsity needs at least two points")
    total = 0.0
    for j in range(m):
        col = np.sort(pts[:, j])
        total += float(np.sum(np.diff(col) ** 2))
    return total / (len(pts) - 1)


def evaluate_policy(policy, preference, inst: TerminalInstance, C: int,
                    base_seed: int, scales: FeatureScales | None = None,
                    label: str = "") -> PolicyPoint:
    """Mean objective vector over C greedy rollouts on consecutive seeds."""
    if C < 1:
        raise ValueError("C must be at least 1")
    totals = np.zeros(2)
    tasks = max(inst.task_count, 1)
    for k in range(C):
        traj = rollout(policy, inst, preference, base_seed + k,
                       mode="greedy", scales=scales)
        idle_s, meters = traj.objectives
        totals += (idle_s / 60.0 / inst.qc_count, meters / tasks)
    mean = totals / C
    return PolicyPoint(
        preference=(float(preference[0]), float(preference[1])),
        objectives=(float(mean[0]), float(mean[1])),
        label=label,
    )


# -- tabular front export ---------------------------------------------------

def export_front(points: list[PolicyPoint], path: str | Path,
                 bounds: NormalizationBounds | None = None) -> Path:
    """Write the delimited front table; normalized columns are blank when no
    comparison bounds are supplied."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(FRONT_COLUMNS)
        for p in points:
            if bounds is not None:
                z = apply_bounds(np.array([p.objectives]), bounds)[0]
                norm = [repr(float(z[0])), repr(float(z[1]))]
            else:
                norm = ["", ""]
            writer.writerow([
                repr(float(p.preference[0])), repr(float(p.preference[1])),
                repr(float(p.objectives[0])), repr(float(p.objectives[1])),
                *norm, p.label,
            ])
    return path


def load_front(path: str | Path) -> list[PolicyPoint]:
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != FRONT_COLUMNS:
            raise ValueError(f"unrecognized front table header in {path}")
        points = []
        for row in reader:
            points.append(PolicyPoint(
                preference=(float(row[0]), float(row[1])),
                objectives=(float(row[2]), float(row[3])),
                label=row[6],
            ))
    return points
