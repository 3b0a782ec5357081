"""Event-driven terminal simulator with exact objective accounting.

Cranes and yard cranes serve one truck at a time. Yards serve in
first-come-first-served order of physical arrival; each quay crane serves
its tasks strictly in list order (a truck that shows up early for a later
task waits until its predecessor completes). All queue waits and idle gaps
are recomputable bitwise from the logged timestamps because the simulator
itself derives every downstream time from the canonical expressions:

    arrival        A_i = D_i + T_i
    service start      = max(A_i, C_{i-1})
    completion     C_i = start_i + O_i
    queue wait     L_i = start_i - A_i  ==  max(C_{i-1} - A_i, 0)
    idle gap           = max(A_i - C_{i-1}, 0)   (A_1 - T_init for i = 1)

where T_i for a loading task is the empty leg plus yard time plus the
loaded leg, summed left to right, and just the empty leg for unloading.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .instance import TerminalInstance, TaskSpec, distance

LOG_FORMAT = "quaydeck-log/1"

# Truck statuses.
IDLE = "idle"
TRAVELING_EMPTY = "traveling_empty"
QUEUED_AT_YARD = "queued_at_yard"
SERVICED_AT_YARD = "serviced_at_yard"
TRAVELING_LOADED = "traveling_loaded"
QUEUED_AT_QC = "queued_at_qc"
SERVICED_AT_QC = "serviced_at_qc"
TRAVELING_TO_YARD_LOADED = "traveling_to_yard_loaded"

# Event kinds; the priority makes completions process before arrivals and
# arrivals before dispatch requests when times tie, then entity id.
_EV_QC_END = (0, "qc_end")
_EV_YARD_END = (0, "yard_end")
_EV_ARRIVE_YARD = (1, "arrive_yard")
_EV_ARRIVE_QC = (1, "arrive_qc")
_EV_REQUEST = (2, "request")


class SimulationError(RuntimeError):
    """Internal consistency violation (stalled queue, double dispatch...)."""


class InvalidActionError(ValueError):
    """Dispatch to a crane with no unassigned tasks."""


@dataclass
class TaskRecord:
    """Everything logged about one task's life, in canonical float form."""

    qc_index: int
    order_index: int
    task_type: str
    yard_index: int
    truck: int
    dispatch_seq: int
    dispatch_time: float          # D
    origin_node: int
    empty_dist: float             # empty-leg meters, the per-step distance cost
    empty_leg_time: float         # empty-leg seconds
    yard_arrival: float = float("nan")
    yard_wait: float = float("nan")
    yard_service_time: float = float("nan")
    yard_service_start: float = float("nan")
    yard_service_end: float = float("nan")
    loaded_leg_time: float = float("nan")
    travel_time: float = float("nan")      # T
    qc_arrival: float = float("nan")       # A = D + T
    prev_completion: float = float("nan")  # C_{i-1} (T_init for the first task)
    qc_wait: float = float("nan")          # L
    qc_service_start: float = float("nan")
    qc_service_time: float = float("nan")  # O
    qc_completion: float = float("nan")    # C
    chain_end: float = float("nan")        # truck idle again

    @property
    def lam(self) -> float:
        """Yard crane time including queue wait, on whichever leg touches the yard."""
        return self.yard_wait + self.yard_service_time

    def is_complete(self) -> bool:
        return not np.isnan(self.chain_end)


def qc_idle_gap(rec: TaskRecord) -> float:
    """The crane idle contribution of one task; shared by every objective path."""
    if rec.order_index == 0:
        return rec.qc_arrival - rec.prev_completion  # A_1 - T_init
    return max(rec.qc_arrival - rec.prev_completion, 0.0)


@dataclass
class EpisodeLog:
    seed: int
    records: list[TaskRecord] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)
    t_end: float | None = None

    def task_record(self, qc_index: int, order_index: int) -> TaskRecord:
        for rec in self.records:
            if rec.qc_index == qc_index and rec.order_index == order_index:
                return rec
        raise KeyError((qc_index, order_index))

    def records_by_qc(self) -> dict[int, list[TaskRecord]]:
        by_qc: dict[int, list[TaskRecord]] = {}
        for rec in self.records:
            by_qc.setdefault(rec.qc_index, []).append(rec)
        for lst in by_qc.values():
            lst.sort(key=lambda r: r.order_index)
        return by_qc


def episode_objectives(log: EpisodeLog) -> tuple[float, float]:
    """(total crane idle seconds, total empty meters) from a finished log.

    Accumulated over dispatch records in dispatch order, term by term, which
    is the same arithmetic path the per-step reward accounting uses.
    """
    if log.t_end is None:
        raise SimulationError("episode log is not finalized")
    for rec in log.records:
        if not rec.is_complete():
            raise SimulationError(
                f"task {rec.qc_index}/{rec.order_index} incomplete in log"
            )
    idle = 0.0
    dist = 0.0
    for rec in log.records:
        idle += qc_idle_gap(rec)
        dist += rec.empty_dist
    return idle, dist


def export_log(log: EpisodeLog, path: str | Path) -> Path:
    """Write the line-delimited audit trail (one JSON record per event)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({"format": LOG_FORMAT, "seed": log.seed}) + "\n")
        for ev in log.events:
            fh.write(json.dumps(ev, sort_keys=True) + "\n")
        if log.t_end is not None:
            fh.write(json.dumps({"ev": "episode_end", "t": log.t_end}) + "\n")
    return path


@dataclass
class TruckState:
    id: int
    node: int
    status: str = IDLE
    task: tuple[int, int] | None = None  # (qc_index, order_index)
    dest_node: int | None = None
    depart_time: float = 0.0
    arrive_time: float = 0.0
    reached_qc: bool = False
    parked: bool = False


@dataclass
class QcRuntime:
    index: int
    next_unassigned: int = 0
    next_to_serve: int = 0
    busy_truck: int | None = None
    last_completion: float = 0.0  # C_{i-1}, seeded with T_init = 0
    arrived: dict[int, int] = field(default_factory=dict)  # order_index -> truck


@dataclass
class YardRuntime:
    index: int
    busy_truck: int | None = None
    queue: list[int] = field(default_factory=list)  # trucks in arrival order


@dataclass
class DecisionPoint:
    truck_id: int
    clock: float
    active_qcs: tuple[int, ...]
    token: int


class SimState:
    """One episode's mutable world. Single-threaded; instances are shared."""

    def __init__(self, inst: TerminalInstance, seed: int):
        self.inst = inst
        self.seed = seed
        self.clock = 0.0
        self.done = False
        parent = np.random.SeedSequence(seed)
        travel_ss, qc_ss, yard_ss, action_ss = parent.spawn(4)
        self.rng_travel = np.random.default_rng(travel_ss)
        self.rng_qc = np.random.default_rng(qc_ss)
        self.rng_yard = np.random.default_rng(yard_ss)
        self.action_seed_seq = action_ss  # handed to policy rollouts
        self.trucks = [
            TruckState(v, inst.depot_node) for v in range(inst.truck_count)
        ]
        self.qcs = [QcRuntime(q) for q in range(inst.qc_count)]
        self.yards = [YardRuntime(y) for y in range(inst.yard_count)]
        self.log = EpisodeLog(seed=seed)
        self._heap: list[tuple[float, int, int, int, str]] = []
        self._seq = 0
        self._pending: DecisionPoint | None = None
        self._dispatched = 0
        self._completed = 0
        self._token = 0
        for truck in self.trucks:
            self._push(0.0, _EV_REQUEST, truck.id)

    # -- bookkeeping -------------------------------------------------------

    def _push(self, t: float, kind: tuple[int, str], entity: int) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (t, kind[0], entity, self._seq, kind[1]))

    def _event(self, name: str, t: float, **fields) -> None:
        self.log.events.append({"ev": name, "t": t, **fields})

    def _rec(self, truck: TruckState) -> TaskRecord:
        q, i = truck.task
        return self.log.task_record(q, i)

    def active_qcs(self) -> tuple[int, ...]:
        return tuple(
            q.index
            for q in self.qcs
            if q.next_unassigned < len(self.inst.task_lists[q.index])
        )

    def remaining_tasks(self, qc_index: int) -> int:
        return len(self.inst.task_lists[qc_index]) - self.qcs[qc_index].next_unassigned

    def working_trucks(self, qc_index: int) -> int:
        return sum(
            1 for t in self.trucks if t.task is not None and t.task[0] == qc_index
        )

    def heading_trucks(self, qc_index: int) -> int:
        """Trucks assigned to this crane that have not yet joined its queue."""
        return sum(
            1
            for t in self.trucks
            if t.task is not None and t.task[0] == qc_index and not t.reached_qc
        )

    def qc_queue_len(self, qc_index: int) -> int:
        return len(self.qcs[qc_index].arrived)

    def yard_queue_len(self, yard_index: int) -> int:
        return len(self.yards[yard_index].queue)

    def inbound_count(self, node: int) -> int:
        return sum(
            1
            for t in self.trucks
            if t.dest_node == node
            and t.status
            in (TRAVELING_EMPTY, TRAVELING_LOADED, TRAVELING_TO_YARD_LOADED)
        )

    def _travel_seconds(self, meters: float, loaded: bool, dest: int) -> float:
        dist_cfg = self.inst.dist_params
        tn = dist_cfg.truck_speed_loaded if loaded else dist_cfg.truck_speed_empty
        speed = tn.sample(self.rng_travel)  # one draw per leg, even for zero legs
        base = meters / speed
        if dist_cfg.congestion_coeff > 0.0:
            base = base * (1.0 + dist_cfg.congestion_coeff * self.inbound_count(dest))
        return base

    # -- decision loop -----------------------------------------------------

    def next_decision(self) -> DecisionPoint | None:
        """Advance events until a truck needs a task, or the episode is done."""
        if self.done:
            raise SimulationError("episode already finished")
        if self._pending is not None:
            return self._pending
        while self._heap:
            t, _prio, entity, _seq, kind = heapq.heappop(self._heap)
            if t < self.clock:
                raise SimulationError("event time regression")
            self.clock = t
            handler = getattr(self, f"_on_{kind}")
            dp = handler(t, entity)
            if dp is not None:
                self._pending = dp
                return dp
        # Queue drained: either everything is finished or the world stalled.
        total = self.inst.task_count
        if self._dispatched == total and self._completed == total:
            self.done = True
            self.log.t_end = self.clock
            return None
        raise SimulationError(
            f"event queue stalled: {self._dispatched}/{total} dispatched, "
            f"{self._completed}/{total} completed"
        )

    def _on_request(self, t: float, truck_id: int) -> DecisionPoint | None:
        truck = self.trucks[truck_id]
        active = self.active_qcs()
        if not active:
            truck.parked = True
            self._event("park", t, truck=truck_id)
            return None
        self._token += 1
        return DecisionPoint(truck_id, t, active, self._token)

    def apply_dispatch(self, dp: DecisionPoint, qc_index: int) -> TaskRecord:
        if self._pending is None or dp.token != self._pending.token:
            raise SimulationError("stale or unknown decision point")
        if not (0 <= qc_index < len(self.qcs)):
            raise InvalidActionError(f"unknown crane index {qc_index}")
        qc = self.qcs[qc_index]
        tasks = self.inst.task_lists[qc_index]
        if qc.next_unassigned >= len(tasks):
            raise InvalidActionError(f"crane {qc_index} has no unassigned tasks")
        self._pending = None
        task = tasks[qc.next_unassigned]
        qc.next_unassigned += 1
        self._dispatched += 1

        truck = self.trucks[dp.truck_id]
        assert truck.task is None, "truck already holds a task"
        f_node, s_node = self.inst.task_nodes(task)
        d_time = dp.clock
        empty = distance(self.inst, truck.node, f_node)
        leg = self._travel_seconds(empty, loaded=False, dest=f_node)
        rec = TaskRecord(
            qc_index=task.qc_index,
            order_index=task.order_index,
            task_type=task.task_type,
            yard_index=task.yard_index,
            truck=truck.id,
            dispatch_seq=len(self.log.records),
            dispatch_time=d_time,
            origin_node=truck.node,
            empty_dist=empty,
            empty_leg_time=leg,
        )
        self.log.records.append(rec)
        truck.task = (task.qc_index, task.order_index)
        truck.reached_qc = False
        truck.status = TRAVELING_EMPTY
        truck.dest_node = f_node
        truck.depart_time = d_time
        arrive = d_time + leg
        truck.arrive_time = arrive
        if task.is_loading:
            self._push(arrive, _EV_ARRIVE_YARD, truck.id)
        else:
            # Unloading: T is just the empty leg, so A = D + e.
            rec.travel_time = leg
            rec.qc_arrival = arrive
            self._push(arrive, _EV_ARRIVE_QC, truck.id)
        self._event(
            "dispatch", d_time,
            truck=truck.id, qc=task.qc_index, task=task.order_index,
            origin=truck.node, empty_dist=empty,
        )
        return rec

    # -- yard side ----------------------------------------------------------

    def _on_arrive_yard(self, t: float, truck_id: int) -> None:
        truck = self.trucks[truck_id]
        rec = self._rec(truck)
        yard = self.yards[rec.yard_index]
        rec.yard_arrival = t
        truck.node = truck.dest_node
        truck.dest_node = None
        truck.status = QUEUED_AT_YARD
        self._event("arrive_yard", t, truck=truck_id, yard=rec.yard_index)
        if yard.busy_truck is None:
            self._start_yard_service(yard, truck_id, t)
        else:
            yard.queue.append(truck_id)

    def _start_yard_service(self, yard: YardRuntime, truck_id: int, t: float) -> None:
        truck = self.trucks[truck_id]
        rec = self._rec(truck)
        yard.busy_truck = truck_id
        rec.yard_wait = t - rec.yard_arrival
        rec.yard_service_start = t
        service = self.inst.dist_params.yard_service.sample(self.rng_yard)
        rec.yard_service_time = service
        end = t + service
        rec.yard_service_end = end
        truck.status = SERVICED_AT_YARD
        self._push(end, _EV_YARD_END, yard.index)
        self._event("yard_start", t, truck=truck_id, yard=yard.index, wait=rec.yard_wait)

    def _on_yard_end(self, t: float, yard_index: int) -> None:
        yard = self.yards[yard_index]
        truck = self.trucks[yard.busy_truck]
        rec = self._rec(truck)
        yard.busy_truck = None
        self._event("yard_end", t, truck=truck.id, yard=yard_index)
        if rec.task_type == "loading":
            # Pre-crane leg done; ride loaded to the crane. A = D + T with
            # T = e + lam + l accumulated left to right.
            f_node, s_node = self.inst.task_nodes(self.inst.task_lists[rec.qc_index][rec.order_index])
            loaded_dist = distance(self.inst, f_node, s_node)
            leg = self._travel_seconds(loaded_dist, loaded=True, dest=s_node)
            rec.loaded_leg_time = leg
            rec.travel_time = (rec.empty_leg_time + rec.lam) + leg
            rec.qc_arrival = rec.dispatch_time + rec.travel_time
            truck.status = TRAVELING_LOADED
            truck.dest_node = s_node
            truck.depart_time = t
            truck.arrive_time = rec.qc_arrival
            self._push(rec.qc_arrival, _EV_ARRIVE_QC, truck.id)
        else:
            self._finish_chain(truck, rec, t)
        if yard.queue:
            self._start_yard_service(yard, yard.queue.pop(0), t)

    # -- crane side ----------------------------------------------------------

    def _on_arrive_qc(self, t: float, truck_id: int) -> None:
        truck = self.trucks[truck_id]
        rec = self._rec(truck)
        qc = self.qcs[rec.qc_index]
        truck.node = truck.dest_node
        truck.dest_node = None
        truck.status = QUEUED_AT_QC
        truck.reached_qc = True
        qc.arrived[rec.order_index] = truck_id
        self._event("arrive_qc", t, truck=truck_id, qc=rec.qc_index, task=rec.order_index)
        if qc.busy_truck is None and qc.next_to_serve == rec.order_index:
            self._start_qc_service(qc)

    def _start_qc_service(self, qc: QcRuntime) -> None:
        truck_id = qc.arrived.pop(qc.next_to_serve)
        truck = self.trucks[truck_id]
        rec = self._rec(truck)
        rec.prev_completion = qc.last_completion
        start = max(rec.qc_arrival, qc.last_completion)
        rec.qc_service_start = start
        rec.qc_wait = start - rec.qc_arrival
        service = self.inst.dist_params.qc_service.sample(self.rng_qc)
        rec.qc_service_time = service
        rec.qc_completion = start + service
        qc.busy_truck = truck_id
        truck.status = SERVICED_AT_QC
        self._push(rec.qc_completion, _EV_QC_END, qc.index)
        self._event(
            "qc_start", start,
            truck=truck_id, qc=qc.index, task=rec.order_index, wait=rec.qc_wait,
        )

    def _on_qc_end(self, t: float, qc_index: int) -> None:
        qc = self.qcs[qc_index]
        truck = self.trucks[qc.busy_truck]
        rec = self._rec(truck)
        qc.busy_truck = None
        qc.last_completion = rec.qc_completion
        qc.next_to_serve = rec.order_index + 1
        self._event("qc_end", t, truck=truck.id, qc=qc_index, task=rec.order_index)
        if rec.task_type == "loading":
            self._finish_chain(truck, rec, t)
        else:
            # Unloading continues to the yard; this leg is outside T but
            # delays the truck's next request.
            f_node, s_node = self.inst.task_nodes(self.inst.task_lists[rec.qc_index][rec.order_index])
            loaded_dist = distance(self.inst, f_node, s_node)
            leg = self._travel_seconds(loaded_dist, loaded=True, dest=s_node)
            rec.loaded_leg_time = leg
            truck.status = TRAVELING_TO_YARD_LOADED
            truck.dest_node = s_node
            truck.depart_time = t
            truck.arrive_time = t + leg
            self._push(truck.arrive_time, _EV_ARRIVE_YARD, truck.id)
        if qc.next_to_serve in qc.arrived:
            self._start_qc_service(qc)

    def _finish_chain(self, truck: TruckState, rec: TaskRecord, t: float) -> None:
        rec.chain_end = t
        truck.task = None
        truck.status = IDLE
        truck.dest_node = None
        self._completed += 1
        self._event("chain_end", t, truck=truck.id, qc=rec.qc_index, task=rec.order_index)
        self._push(t, _EV_REQUEST, truck.id)


def init_episode(inst: TerminalInstance, seed: int) -> SimState:
    """Fresh episode: clock 0, all trucks idle at the depot, requests queued."""
    return SimState(inst, seed)
