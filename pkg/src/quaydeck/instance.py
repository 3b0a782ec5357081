"""Static terminal instances: layout, per-crane task lists, uncertainty distributions.

An instance is immutable once built and safe to share across concurrently
running episodes. Geometry convention: quay cranes sit on the berth line
y = 0, yard blocks form a rectangular grid behind the berth, and the truck
depot is a corner node behind the yards. All coordinates are meters; travel
distance between nodes is Manhattan (trucks follow the lane grid).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from scipy.special import ndtr, ndtri

INSTANCE_FORMAT = "quaydeck-instance/1"

# A 5-bit crane id code bounds the encodable crane count.
MAX_QC_COUNT = 32

NODE_QC = "qc"
NODE_YARD = "yard"
NODE_DEPOT = "depot"

TASK_LOADING = "loading"
TASK_UNLOADING = "unloading"


class InstanceError(ValueError):
    """Raised for invalid generator configs or malformed instance files."""


@dataclass(frozen=True)
class LayoutNode:
    id: int
    kind: str  # NODE_QC | NODE_YARD | NODE_DEPOT
    x: float
    y: float


@dataclass(frozen=True)
class TaskSpec:
    """One container move. Loading runs yard -> crane, unloading crane -> yard."""

    qc_index: int
    order_index: int
    task_type: str  # TASK_LOADING | TASK_UNLOADING
    yard_index: int

    @property
    def is_loading(self) -> bool:
        return self.task_type == TASK_LOADING


@dataclass(frozen=True)
class TruncNormal:
    """Truncated normal; sd == 0 degenerates to the clamped mean (deterministic)."""

    mean: float
    sd: float
    low: float
    high: float

    def __post_init__(self):
        if self.low <= 0:
            raise InstanceError(f"lower truncation bound must be positive, got {self.low}")
        if self.high < self.low:
            raise InstanceError("upper truncation bound below lower bound")

    def sample(self, rng: np.random.Generator) -> float:
        # Inverse-CDF draw: exactly one uniform per sample keeps parallel
        # random streams aligned regardless of the parameter values.
        u = rng.random()
        if self.sd == 0.0:
            return min(max(self.mean, self.low), self.high)
        f_lo = ndtr((self.low - self.mean) / self.sd)
        f_hi = ndtr((self.high - self.mean) / self.sd)
        x = self.mean + self.sd * float(ndtri(f_lo + u * (f_hi - f_lo)))
        return min(max(x, self.low), self.high)  # guard CDF-tail rounding


@dataclass(frozen=True)
class DistributionParams:
    truck_speed_empty: TruncNormal = TruncNormal(8.0, 1.0, 4.0, 12.0)   # m/s
    truck_speed_loaded: TruncNormal = TruncNormal(6.0, 0.8, 3.0, 9.0)   # m/s
    qc_service: TruncNormal = TruncNormal(90.0, 20.0, 30.0, 180.0)      # s
    yard_service: TruncNormal = TruncNormal(60.0, 15.0, 20.0, 120.0)    # s
    # Optional congestion model: travel time is scaled by
    # 1 + congestion_coeff * (trucks already inbound to the destination node).
    congestion_coeff: float = 0.0


@dataclass(frozen=True)
class GeneratorConfig:
    qc_count: int
    yard_count: int
    task_count: int
    truck_count: int
    cell_m: float = 50.0
    dist_params: DistributionParams = field(default_factory=DistributionParams)


@dataclass(frozen=True)
class TerminalInstance:
    nodes: tuple[LayoutNode, ...]
    qc_count: int
    yard_count: int
    task_lists: tuple[tuple[TaskSpec, ...], ...]  # one ordered list per crane
    truck_count: int
    dist_params: DistributionParams
    seed: int

    def __post_init__(self):
        self.validate()

    # -- node id layout: cranes 0..Q-1, yards Q..Q+Y-1, depot Q+Y --

    def qc_node(self, qc_index: int) -> int:
        return qc_index

    def yard_node(self, yard_index: int) -> int:
        return self.qc_count + yard_index

    @property
    def depot_node(self) -> int:
        return self.qc_count + self.yard_count

    @property
    def task_count(self) -> int:
        return sum(len(lst) for lst in self.task_lists)

    @property
    def distance_scale(self) -> float:
        """Manhattan diameter of the layout; the feature normalizer for distances."""
        xs = [n.x for n in self.nodes]
        ys = [n.y for n in self.nodes]
        return (max(xs) - min(xs)) + (max(ys) - min(ys))

    def task_nodes(self, task: TaskSpec) -> tuple[int, int]:
        """(first, second) operating nodes of a task."""
        qc = self.qc_node(task.qc_index)
        yard = self.yard_node(task.yard_index)
        return (yard, qc) if task.is_loading else (qc, yard)

    def validate(self) -> None:
        if not (0 < self.qc_count <= MAX_QC_COUNT):
            raise InstanceError(f"qc_count must be in [1, {MAX_QC_COUNT}], got {self.qc_count}")
        if self.yard_count <= 0 or self.truck_count <= 0:
            raise InstanceError("yard_count and truck_count must be positive")
        if len(self.task_lists) != self.qc_count:
            raise InstanceError("one task list per crane required")
        total = self.task_count
        if self.qc_count > self.truck_count:
            raise InstanceError("need qc_count <= truck_count")
        # Empty instances (no tasks at all) are allowed; otherwise the fleet
        # must not outnumber the work.
        if total and self.truck_count > total:
            raise InstanceError("truck_count exceeds total task count")
        expected = self.qc_count + self.yard_count + 1
        if len(self.nodes) != expected:
            raise InstanceError(f"expected {expected} nodes, got {len(self.nodes)}")
        for i, node in enumerate(self.nodes):
            if node.id != i:
                raise InstanceError("node ids must be contiguous and ordered")
        depot = self.nodes[self.depot_node]
        for node in self.nodes[: self.depot_node]:
            if (node.x, node.y) == (depot.x, depot.y):
                raise InstanceError("depot must be distinct from crane and yard nodes")
        for q, lst in enumerate(self.task_lists):
            types = {t.task_type for t in lst}
            if len(types) > 1:
                raise InstanceError(f"crane {q} mixes loading and unloading tasks")
            for i, t in enumerate(lst):
                if t.qc_index != q or t.order_index != i:
                    raise InstanceError(f"task list {q} mis-indexed at position {i}")
                if not (0 <= t.yard_index < self.yard_count):
                    raise InstanceError(
                        f"task {q}/{i}: yard_index {t.yard_index} out of range"
                    )
                if t.task_type not in (TASK_LOADING, TASK_UNLOADING):
                    raise InstanceError(f"task {q}/{i}: unknown task_type {t.task_type!r}")


def distance(inst: TerminalInstance, a: int, b: int) -> float:
    """Manhattan distance in meters between two nodes. Zero iff a == b."""
    try:
        na, nb = inst.nodes[a], inst.nodes[b]
    except IndexError:
        raise InstanceError(f"unknown node id in ({a}, {b})") from None
    if a < 0 or b < 0:
        raise InstanceError(f"unknown node id in ({a}, {b})")
    return abs(na.x - nb.x) + abs(na.y - nb.y)


def generate_instance(cfg: GeneratorConfig, seed: int) -> TerminalInstance:
    """Deterministically build an instance from (cfg, seed).

    Tasks are split across cranes with near-uniform list sizes (within one),
    each list is homogeneous in type (alternating loading/unloading by crane),
    and import/export yard blocks interleave evenly on the grid.
    """
    if cfg.qc_count <= 0 or cfg.yard_count <= 0 or cfg.task_count <= 0 or cfg.truck_count <= 0:
        raise InstanceError("all generator counts must be positive")
    if cfg.qc_count > MAX_QC_COUNT:
        raise InstanceError(
            f"qc_count {cfg.qc_count} exceeds the {MAX_QC_COUNT}-crane id-encoding limit"
        )
    if cfg.task_count < cfg.qc_count:
        raise InstanceError("task_count must be at least qc_count")
    if not (cfg.qc_count <= cfg.truck_count <= cfg.task_count):
        raise InstanceError("need qc_count <= truck_count <= task_count")

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    cell = cfg.cell_m

    # Yard grid: near-square, row-major placement behind the berth.
    cols = int(np.ceil(np.sqrt(cfg.yard_count)))
    rows = int(np.ceil(cfg.yard_count / cols))
    width = cols * cell

    nodes: list[LayoutNode] = []
    spacing = width / cfg.qc_count
    for q in range(cfg.qc_count):
        nodes.append(LayoutNode(q, NODE_QC, (q + 0.5) * spacing, 0.0))
    for y in range(cfg.yard_count):
        col, row = y % cols, y // cols
        nodes.append(
            LayoutNode(cfg.qc_count + y, NODE_YARD, (col + 0.5) * cell, (row + 1) * cell)
        )
    nodes.append(LayoutNode(cfg.qc_count + cfg.yard_count, NODE_DEPOT, 0.0, (rows + 1) * cell))

    # Export yards feed loading tasks, import yards receive unloading tasks;
    # alternating grid positions interleave the two blocks evenly.
    export_yards = [y for y in range(cfg.yard_count) if y % 2 == 0]
    import_yards = [y for y in range(cfg.yard_count) if y % 2 == 1]
    if not import_yards:  # single-yard degenerate case
        import_yards = export_yards

    base, extra = divmod(cfg.task_count, cfg.qc_count)
    task_lists: list[tuple[TaskSpec, ...]] = []
    for q in range(cfg.qc_count):
        size = base + (1 if q < extra else 0)
        task_type = TASK_LOADING if q % 2 == 0 else TASK_UNLOADING
        pool = export_yards if task_type == TASK_LOADING else import_yards
        yards = rng.integers(0, len(pool), size=size)
        task_lists.append(
            tuple(
                TaskSpec(q, i, task_type, pool[int(yards[i])])
                for i in range(size)
            )
        )

    return TerminalInstance(
        nodes=tuple(nodes),
        qc_count=cfg.qc_count,
        yard_count=cfg.yard_count,
        task_lists=tuple(task_lists),
        truck_count=cfg.truck_count,
        dist_params=cfg.dist_params,
        seed=seed,
    )


# --- serialization: quaydeck-instance/1 ---------------------------------

def instance_to_dict(inst: TerminalInstance) -> dict:
    return {
        "format": INSTANCE_FORMAT,
        "meta": {
            "qc_count": inst.qc_count,
            "yard_count": inst.yard_count,
            "task_count": inst.task_count,
            "truck_count": inst.truck_count,
        },
        "nodes": [asdict(n) for n in inst.nodes],
        "task_lists": [
            [
                {
                    "order_index": t.order_index,
                    "task_type": t.task_type,
                    "yard_index": t.yard_index,
                }
                for t in lst
            ]
            for lst in inst.task_lists
        ],
        "distributions": {
            "truck_speed_empty": asdict(inst.dist_params.truck_speed_empty),
            "truck_speed_loaded": asdict(inst.dist_params.truck_speed_loaded),
            "qc_service": asdict(inst.dist_params.qc_service),
            "yard_service": asdict(inst.dist_params.yard_service),
            "congestion_coeff": inst.dist_params.congestion_coeff,
        },
        "seed": inst.seed,
    }


def _require(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise InstanceError(f"missing field {key!r} in {context}")
    return mapping[key]


def instance_from_dict(data: dict) -> TerminalInstance:
    if not isinstance(data, dict):
        raise InstanceError("instance document must be a mapping")
    fmt = _require(data, "format", "instance")
    if fmt != INSTANCE_FORMAT:
        raise InstanceError(f"unsupported format {fmt!r}, expected {INSTANCE_FORMAT!r}")
    meta = _require(data, "meta", "instance")
    dists = _require(data, "distributions", "instance")

    def trunc(name: str) -> TruncNormal:
        d = _require(dists, name, "distributions")
        try:
            return TruncNormal(
                mean=float(_require(d, "mean", name)),
                sd=float(_require(d, "sd", name)),
                low=float(_require(d, "low", name)),
                high=float(_require(d, "high", name)),
            )
        except InstanceError:
            raise
        except (TypeError, ValueError) as exc:
            raise InstanceError(f"bad distribution {name!r}: {exc}") from None

    try:
        nodes = tuple(
            LayoutNode(
                id=int(_require(n, "id", "node")),
                kind=str(_require(n, "kind", "node")),
                x=float(_require(n, "x", "node")),
                y=float(_require(n, "y", "node")),
            )
            for n in _require(data, "nodes", "instance")
        )
        task_lists = tuple(
            tuple(
                TaskSpec(
                    qc_index=q,
                    order_index=int(_require(t, "order_index", "task")),
                    task_type=str(_require(t, "task_type", "task")),
                    yard_index=int(_require(t, "yard_index", "task")),
                )
                for t in lst
            )
            for q, lst in enumerate(_require(data, "task_lists", "instance"))
        )
        params = DistributionParams(
            truck_speed_empty=trunc("truck_speed_empty"),
            truck_speed_loaded=trunc("truck_speed_loaded"),
            qc_service=trunc("qc_service"),
            yard_service=trunc("yard_service"),
            congestion_coeff=float(dists.get("congestion_coeff", 0.0)),
        )
        return TerminalInstance(
            nodes=nodes,
            qc_count=int(_require(meta, "qc_count", "meta")),
            yard_count=int(_require(meta, "yard_count", "meta")),
            task_lists=task_lists,
            truck_count=int(_require(meta, "truck_count", "meta")),
            dist_params=params,
            seed=int(_require(data, "seed", "instance")),
        )
    except InstanceError:
        raise
    except (TypeError, ValueError, AttributeError) as exc:
        raise InstanceError(f"malformed instance document: {exc}") from None


def save_instance(inst: TerminalInstance, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(instance_to_dict(inst), indent=1, sort_keys=True) + "\n", "utf-8")
    return path


def load_instance(path: str | Path) -> TerminalInstance:
    try:
        data = json.loads(Path(path).read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise InstanceError(f"unparseable instance file: {exc}") from None
    return instance_from_dict(data)
