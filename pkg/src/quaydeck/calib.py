"""Preference calibration from anchor policies.

A requested preference names a direction in normalized objective space
(measured from the ideal corner at the origin). The two anchor policies
whose evaluated points angularly bracket that direction define a local
angle-to-preference interpolation:

    adjusted = p_lo + (angle_to_target / angle_between_anchors) * (p_hi - p_lo)

renormalized back onto the simplex. Requests outside the anchor fan clamp
to the nearest extreme anchor and are flagged.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .env import FeatureScales
from .instance import TerminalInstance
from .moo import NormalizationBounds, apply_bounds, evaluate_policy, nondominated_indices
from .preferences import as_preference

ANCHOR_FORMAT = "quaydeck-anchors/1"


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class Anchor:
    preference: tuple[float, float]   # policy input that produced the point
    point: tuple[float, float]        # normalized objective point

    @property
    def angle(self) -> float:
        return math.atan2(self.point[1], self.point[0])


@dataclass
class AnchorSet:
    anchors: list[Anchor]
    bounds: NormalizationBounds
    history: list[dict] = field(default_factory=list)  # misalignment per round

    def __post_init__(self):
        if len(self.anchors) < 2:
            raise CalibrationError("need at least two anchors")
        self.anchors = sorted(self.anchors, key=lambda a: a.angle)
        deduped = [self.anchors[0]]
        for a in self.anchors[1:]:
            if a.angle > deduped[-1].angle:
                deduped.append(a)
        self.anchors = deduped
        if len(self.anchors) < 2:
            raise CalibrationError("anchor directions are degenerate")
        values = np.array([a.point for a in self.anchors])
        if len(nondominated_indices(values)) != len(values):
            raise CalibrationError("anchor points must be mutually non-dominated")

    @property
    def angles(self) -> list[float]:
        return [a.angle for a in self.anchors]


@dataclass(frozen=True)
class CalibrationResult:
    preference: np.ndarray
    clamped: bool


def direction_angle(preference) -> float:
    p = as_preference(preference)
    return math.atan2(p[1], p[0])


def calibrate(target_pref, anchors: AnchorSet) -> CalibrationResult:
    """Map a requested direction to the policy input that lands there."""
    target = as_preference(target_pref)
    theta = direction_angle(target)
    angles = anchors.angles
    if theta <= angles[0]:
        clamped = theta < angles[0]
        return CalibrationResult(np.array(anchors.anchors[0].preference), clamped)
    if theta >= angles[-1]:
        clamped = theta > angles[-1]
        return CalibrationResult(np.array(anchors.anchors[-1].preference), clamped)
    hi = int(np.searchsorted(angles, theta))
    lo = hi - 1
    alpha_c = angles[hi] - angles[lo]
    p_lo = np.array(anchors.anchors[lo].preference)
    if alpha_c == 0.0:
        return CalibrationResult(p_lo, False)
    alpha_t = theta - angles[lo]
    p_hi = np.array(anchors.anchors[hi].preference)
    raw = p_lo + (alpha_t / alpha_c) * (p_hi - p_lo)
    raw = np.clip(raw, 0.0, None)
    total = raw.sum()
    if total == 0.0:
        return CalibrationResult(p_lo, False)
    return CalibrationResult(raw / total, False)


def build_anchor_set(policy, grid, inst: TerminalInstance, C: int,
                     iterations: int, base_seed: int = 0,
                     scales: FeatureScales | None = None,
                     tol_radians: float = 0.01,
                     evaluator=None) -> AnchorSet:
    """Evaluate the preference grid, then iteratively re-aim each direction.

    Each round calibrates every grid direction against the current anchors,
    re-evaluates the adjusted preferences, and rebuilds the anchor set, until
    the worst angular misalignment drops below tol_radians or the round
    budget runs out. iterations == 0 returns the raw grid evaluation.
    """
    grid = [as_preference(p) for p in grid]
    if len(grid) < 2:
        raise CalibrationError("need a grid of at least two preferences")
    if evaluator is None:
        def evaluator(pref):
            return evaluate_policy(policy, pref, inst, C, base_seed, scales)

    def evaluate_batch(prefs):
        points = [evaluator(p) for p in prefs]
        return np.array([pt.objectives for pt in points])

    all_values = evaluate_batch(grid)
    seen_values = [all_values]
    anchors, bounds = _anchors_from(grid, all_values, np.vstack(seen_values))
    history: list[dict] = []
    for round_no in range(1, iterations + 1):
        anchor_set = AnchorSet(anchors, bounds)
        adjusted = [calibrate(p, anchor_set).preference for p in grid]
        values = evaluate_batch(adjusted)
        seen_values.append(values)
        anchors, bounds = _anchors_from(adjusted, values, np.vstack(seen_values))
        mis = _misalignment(grid, values, bounds)
        history.append({"round": round_no, "mean": float(np.mean(mis)),
                        "max": float(np.max(mis))})
        if history[-1]["max"] <= tol_radians:
            break
    return AnchorSet(anchors, bounds, history)


def _anchors_from(prefs, values, pool_values):
    if np.allclose(values.min(axis=0), values.max(axis=0)):
        raise CalibrationError("degenerate front: all evaluated points identical")
    lo = pool_values.min(axis=0)
    hi = pool_values.max(axis=0)
    if np.any(hi - lo == 0.0):
        raise CalibrationError("degenerate front: an objective is constant")
    bounds = NormalizationBounds(tuple(lo.tolist()), tuple(hi.tolist()))
    normed = apply_bounds(values, bounds)
    keep = nondominated_indices(values)
    anchors = [
        Anchor(tuple(np.asarray(prefs[i], dtype=float).tolist()),
               tuple(normed[i].tolist()))
        for i in keep
    ]
    return anchors, bounds


def _misalignment(grid, values, bounds):
    normed = apply_bounds(values, bounds)
    out = []
    for pref, point in zip(grid, normed):
        theta = direction_angle(pref)
        phi = math.atan2(point[1], point[0])
        out.append(abs(phi - theta))
    return np.array(out)


# -- persistence -------------------------------------------------------------

def save_anchor_set(anchors: AnchorSet, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "format": ANCHOR_FORMAT,
        "bounds": {"lo": list(anchors.bounds.lo), "hi": list(anchors.bounds.hi)},
    }
    lines = [json.dumps(header, sort_keys=True)]
    lines.append("p1,p2,point_x,point_y")
    for a in anchors.anchors:
        lines.append(
            f"{a.preference[0]!r},{a.preference[1]!r},{a.point[0]!r},{a.point[1]!r}"
        )
    path.write_text("\n".join(lines) + "\n", "utf-8")
    return path


def load_anchor_set(path: str | Path) -> AnchorSet:
    lines = Path(path).read_text("utf-8").splitlines()
    try:
        header = json.loads(lines[0])
    except (IndexError, json.JSONDecodeError) as exc:
        raise CalibrationError(f"unreadable anchor file: {exc}") from None
    if header.get("format") != ANCHOR_FORMAT:
        raise CalibrationError(f"unsupported anchor format {header.get('format')!r}")
    bounds = NormalizationBounds(tuple(header["bounds"]["lo"]), tuple(header["bounds"]["hi"]))
    anchors = []
    for line in lines[2:]:
        if not line.strip():
            continue
        p1, p2, x, y = (float(v) for v in line.split(","))
        anchors.append(Anchor((p1, p2), (x, y)))
    return AnchorSet(anchors, bounds)
