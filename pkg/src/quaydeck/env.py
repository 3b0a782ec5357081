"""MOMDP facade over the simulator.

Exposes per-decision observations (one 14-wide row per crane that still has
unassigned tasks), applies dispatch actions, and accounts the two-component
vector reward. The empty-distance component is known at decision time; the
crane-idle component is only determined once later arrivals happen, so it is
filled in retroactively from the episode log, along the identical arithmetic
path the objective computation uses.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .instance import TerminalInstance, distance
from .sim import (
    DecisionPoint,
    EpisodeLog,
    SimState,
    episode_objectives,
    export_log,
    init_episode,
    qc_idle_gap,
)

FEATURE_WIDTH = 14
_ID_BITS = 5


@dataclass(frozen=True)
class FeatureScales:
    """Normalization constants; persisted in checkpoints so that evaluation
    reproduces training-time inputs on any instance."""

    dist: float
    count: float

    @classmethod
    def for_instance(cls, inst: TerminalInstance) -> "FeatureScales":
        return cls(dist=inst.distance_scale, count=float(inst.truck_count))


@dataclass
class StateFeatures:
    rows: np.ndarray                # (n_active, 14)
    active_qcs: tuple[int, ...]     # crane index per row, ascending
    qc_count: int

    @property
    def mask(self) -> np.ndarray:
        m = np.zeros(self.qc_count, dtype=bool)
        m[list(self.active_qcs)] = True
        return m


@dataclass
class RewardVector:
    idle: float = 0.0   # <= 0, assigned retroactively
    dist: float = 0.0   # <= 0, known at decision time


@dataclass
class Transition:
    features: StateFeatures
    preference: np.ndarray
    action_qc: int
    action_row: int
    log_prob: float
    reward: RewardVector


@dataclass
class Trajectory:
    seed: int
    transitions: list[Transition] = field(default_factory=list)
    objectives: tuple[float, float] | None = None
    finalized: bool = False
    log: EpisodeLog | None = None

    def __len__(self) -> int:
        return len(self.transitions)


def qc_id_code(qc_index: int) -> np.ndarray:
    """5-bit binary crane id, most significant bit first (5 -> 0 0 1 0 1)."""
    return np.array([(qc_index >> k) & 1 for k in range(_ID_BITS - 1, -1, -1)], dtype=float)


def observe(sim: SimState, dp: DecisionPoint, scales: FeatureScales) -> StateFeatures:
    """One normalized row per crane with unassigned work, for the deciding truck."""
    inst = sim.inst
    truck = sim.trucks[dp.truck_id]
    rows = []
    for q in dp.active_qcs:
        task = inst.task_lists[q][sim.qcs[q].next_unassigned]
        f_node, s_node = inst.task_nodes(task)
        yard_node = inst.yard_node(task.yard_index)
        to_first = distance(inst, truck.node, f_node)
        task_path = to_first + distance(inst, f_node, s_node)
        row = np.empty(FEATURE_WIDTH)
        row[0] = sim.remaining_tasks(q) / scales.count
        row[1] = sim.working_trucks(q) / scales.count
        row[2] = task_path / scales.dist
        row[3] = to_first / scales.dist
        row[4] = sim.qc_queue_len(q) / scales.count
        row[5] = sim.yard_queue_len(task.yard_index) / scales.count
        row[6] = 1.0 if task.is_loading else 0.0
        row[7] = sim.heading_trucks(q) / scales.count
        row[8] = distance(inst, truck.node, yard_node) / scales.dist
        row[9:] = qc_id_code(q)
        rows.append(row)
    return StateFeatures(np.array(rows), dp.active_qcs, inst.qc_count)


class DispatchEnv:
    """One episode, driven decision by decision."""

    def __init__(self, inst: TerminalInstance, seed: int,
                 scales: FeatureScales | None = None):
        self.inst = inst
        self.scales = scales or FeatureScales.for_instance(inst)
        self.sim = init_episode(inst, seed)
        self._dp: DecisionPoint | None = None

    @property
    def log(self) -> EpisodeLog:
        return self.sim.log

    @property
    def decision(self) -> DecisionPoint | None:
        return self._dp

    def reset(self) -> StateFeatures | None:
        """Advance to the first decision. None means an empty episode."""
        self._dp = self.sim.next_decision()
        if self._dp is None:
            return None
        return observe(self.sim, self._dp, self.scales)

    def step(self, qc_index: int) -> tuple[RewardVector, StateFeatures | None]:
        """Dispatch the pending truck to a crane; idle reward stays 0 until
        finalize_rewards fills it from the finished log."""
        if self._dp is None:
            raise RuntimeError("no pending decision; call reset() first")
        rec = self.sim.apply_dispatch(self._dp, qc_index)
        reward = RewardVector(idle=0.0, dist=-rec.empty_dist)
        self._dp = self.sim.next_decision()
        if self._dp is None:
            return reward, None
        return reward, observe(self.sim, self._dp, self.scales)


def finalize_rewards(traj: Trajectory, log: EpisodeLog) -> Trajectory:
    """Assign retroactive idle rewards; afterwards the negated per-component
    reward sums equal the episode objectives bitwise."""
    if log.t_end is None:
        raise ValueError("episode log not finalized")
    if len(traj.transitions) != len(log.records):
        raise ValueError(
            f"trajectory has {len(traj.transitions)} steps but log has "
            f"{len(log.records)} dispatches"
        )
    for tr, rec in zip(traj.transitions, log.records):
        tr.reward.idle = -qc_idle_gap(rec)
    traj.objectives = episode_objectives(log)
    traj.finalized = True
    return traj


def export_trajectory(traj: Trajectory, path) -> Path:
    """Episode audit trail plus one reward record per dispatch step."""
    if traj.log is None or not traj.finalized:
        raise ValueError("trajectory has no finalized episode log")
    out = Path(path)
    export_log(traj.log, out)
    with out.open("a", encoding="utf-8") as fh:
        for t, tr in enumerate(traj.transitions):
            fh.write(json.dumps({
                "ev": "reward", "step": t, "qc": tr.action_qc,
                "r_idle": tr.reward.idle, "r_dist": tr.reward.dist,
                "preference": tr.preference.tolist(),
            }) + "\n")
    return out


class UniformRandomPolicy:
    """Preference-blind uniform baseline."""

    def action_probabilities(self, rows: np.ndarray, preference) -> np.ndarray:
        n = rows.shape[0]
        return np.full(n, 1.0 / n)


def rollout(policy, inst: TerminalInstance, preference, seed: int,
            mode: str = "sample", scales: FeatureScales | None = None) -> Trajectory:
    """Play one full episode under the policy and return the finalized trajectory.

    `sample` draws from the action distribution using a dedicated stream
    derived from the episode seed; `greedy` takes the argmax with the
    lowest-crane-index tie-break.
    """
    if mode not in ("sample", "greedy"):
        raise ValueError(f"unknown rollout mode {mode!r}")
    preference = np.asarray(preference, dtype=float)
    env = DispatchEnv(inst, seed, scales)
    action_rng = np.random.default_rng(env.sim.action_seed_seq)
    traj = Trajectory(seed=seed)
    feats = env.reset()
    while feats is not None:
        probs = np.asarray(policy.action_probabilities(feats.rows, preference))
        if mode == "sample":
            cum = np.cumsum(probs)
            row = int(np.searchsorted(cum, action_rng.random() * cum[-1], side="right"))
            row = min(row, len(probs) - 1)
        else:
            row = int(np.argmax(probs))  # first max == lowest crane index
        qc = feats.active_qcs[row]
        log_prob = float(np.log(probs[row]))
        reward, nxt = env.step(qc)
        traj.transitions.append(
            Transition(feats, preference.copy(), qc, row, log_prob, reward)
        )
        feats = nxt
    traj.log = env.log
    return finalize_rewards(traj, env.log)
