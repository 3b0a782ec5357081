"""Preference-conditioned PPO with weighted-Tchebycheff scalarized returns.

Each iteration draws one preference for the whole wave, collects N seeded
episodes under it, scores every episode with the scalarized return, uses the
wave mean as a shared baseline, and runs M epochs of clipped-surrogate
minibatch ascent with Adam. Per-step costs are scaled by constants estimated
once from random-policy warm-up rollouts and frozen into the checkpoint,
since seconds of crane idleness and meters of empty driving are not
comparable raw.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .env import FeatureScales, RewardVector, Trajectory, UniformRandomPolicy, rollout
from .instance import TerminalInstance
from .nn import DispatchPolicy, init_params, save_checkpoint
from .nn import tensor as T
from .nn.network import NetworkConfig
from .nn.tensor import GradientError
from .preferences import as_preference, even_grid

TRAIN_LOG_FORMAT = "quaydeck-trainlog/1"


@dataclass
class PpoConfig:
    iterations: int = 5000          # K
    episodes_per_iter: int = 10     # N
    epochs: int = 10                # M
    batch_size: int = 32            # B
    clip: float = 0.2               # epsilon
    discount: float = 1.0           # gamma
    preference_set: list = field(default_factory=lambda: even_grid(11))
    learning_rate: float = 3e-4
    grad_clip: float = 5.0
    objective_scales: tuple[float, float] | None = None  # warm-up estimate if None
    z_star: tuple[float, float] = (0.0, 0.0)
    seed: int = 0
    fusion_mode: str = "hadamard"
    warmup_rollouts: int = 32
    checkpoint_every: int = 100

    def __post_init__(self):
        if not (0.0 < self.clip < 1.0):
            raise ValueError("clip rate must be in (0, 1)")
        if not (0.0 <= self.discount <= 1.0):
            raise ValueError("discount must be in [0, 1]")
        if self.iterations < 1 or self.episodes_per_iter < 1 or self.epochs < 1:
            raise ValueError("iterations, episodes_per_iter, epochs must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        self.preference_set = [as_preference(p) for p in self.preference_set]


def scalarize_step(preference, reward: RewardVector, z_star, scales) -> float:
    """Negated weighted-Tchebycheff value of one step's cost vector.

    Costs are the negated rewards divided by the per-objective scales; with
    the ideal point at zero this is -max_i p_i * o_i.
    """
    o_idle = (-reward.idle) / scales[0]
    o_dist = (-reward.dist) / scales[1]
    p = preference
    return -max(p[0] * abs(o_idle - z_star[0]), p[1] * abs(o_dist - z_star[1]))


def episode_return(traj: Trajectory, preference, cfg: PpoConfig) -> float:
    """Sum of per-step scalarized rewards (discounted when gamma < 1)."""
    if not traj.finalized:
        raise ValueError("trajectory must be finalized before scoring")
    scales = cfg.objective_scales
    if scales is None:
        raise ValueError("objective_scales not set; run estimate_scales first")
    total = 0.0
    if cfg.discount == 1.0:
        for tr in traj.transitions:
            total += scalarize_step(preference, tr.reward, cfg.z_star, scales)
    else:
        g = 1.0
        for tr in traj.transitions:
            total += g * scalarize_step(preference, tr.reward, cfg.z_star, scales)
            g *= cfg.discount
    return total


def advantages(returns) -> np.ndarray:
    """Shared-baseline advantages: each episode's return minus the wave mean."""
    arr = np.asarray(returns, dtype=np.float64)
    if arr.size < 1:
        raise ValueError("need at least one return")
    return arr - arr.mean()


def estimate_scales(inst: TerminalInstance, seed: int, rollouts: int = 32,
                    scales: FeatureScales | None = None) -> tuple[float, float]:
    """Mean per-step cost of a uniform-random policy, per objective."""
    policy = UniformRandomPolicy()
    idle_total = dist_total = 0.0
    steps = 0
    for k in range(rollouts):
        ep_seed = _episode_seed(seed, 1_000_000, k)
        traj = rollout(policy, inst, [0.5, 0.5], ep_seed, mode="sample", scales=scales)
        for tr in traj.transitions:
            idle_total += -tr.reward.idle
            dist_total += -tr.reward.dist
        steps += len(traj)
    if steps == 0:
        raise ValueError("instance has no tasks; cannot estimate scales")
    return (max(idle_total / steps, 1e-9), max(dist_total / steps, 1e-9))


def _episode_seed(root: int, stream: int, k: int) -> int:
    ss = np.random.SeedSequence((root, stream, k))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


class Adam:
    """Adaptive-moment ascent on named gradient dicts."""

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def ascend(self, params, grads: dict[str, np.ndarray], lr: float) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for name, g in grads.items():
            m = self.m.setdefault(name, np.zeros_like(g))
            v = self.v.setdefault(name, np.zeros_like(g))
            m += (1.0 - self.beta1) * (g - m)
            v += (1.0 - self.beta2) * (g * g - v)
            step = lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)
            params[name].values = params[name].values + step


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    total = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if not math.isfinite(total):
        raise GradientError("non-finite gradient norm")
    if max_norm > 0.0 and total > max_norm:
        factor = max_norm / total
        for g in grads.values():
            g *= factor
    return total


@dataclass
class UpdateStats:
    surrogate: float = 0.0
    ratio_mean: float = 1.0
    ratio_max: float = 1.0
    clip_fraction: float = 0.0
    entropy: float = 0.0
    grad_norm: float = 0.0
    aborted: bool = False
    diagnostics: str = ""


def _batch_gradients(policy: DispatchPolicy, records, idx, preference, cfg: PpoConfig):
    """Accumulate PPO surrogate gradients over one minibatch.

    Records sharing an active-set size are batched through one forward; the
    backward seed carries ratio * advantage for records on the unclipped
    branch and zero where the clip saturates.
    """
    groups: dict[int, list[int]] = {}
    for i in idx:
        groups.setdefault(records[i][0].shape[0], []).append(i)
    total = len(idx)
    grads: dict[str, np.ndarray] = {}
    surrogate = 0.0
    ratios_all = []
    clipped_count = 0
    entropy = 0.0
    for _, members in sorted(groups.items()):
        rows = np.stack([records[i][0] for i in members])
        actions = np.array([records[i][1] for i in members])
        logp_old = np.array([records[i][2] for i in members])
        adv = np.array([records[i][3] for i in members])
        prefs = np.broadcast_to(preference, (len(members), 2))
        trace = policy.forward(rows, prefs)
        sel = np.arange(len(members))
        logp_new = trace.log_probs.values[sel, actions]
        ratio = np.exp(logp_new - logp_old)
        clipped = np.clip(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip)
        term_raw = ratio * adv
        term_clip = clipped * adv
        surrogate += float(np.minimum(term_raw, term_clip).sum())
        flows = term_raw <= term_clip
        clipped_count += int((~flows).sum())
        seed = np.zeros_like(trace.log_probs.values)
        seed[sel, actions] = np.where(flows, ratio * adv, 0.0) / total
        T.backward(trace.log_probs, seed=seed)
        for name, t in trace.params.items():
            if t.grad is None:
                continue
            if name in grads:
                grads[name] += t.grad
            else:
                grads[name] = t.grad.copy()
        ratios_all.append(ratio)
        p = trace.probs
        entropy += float(-(p * np.log(np.maximum(p, 1e-300))).sum())
    ratios = np.concatenate(ratios_all)
    return grads, surrogate / total, ratios, clipped_count / total, entropy / total


def ppo_update(policy: DispatchPolicy, trajectories, preference, cfg: PpoConfig,
               optimizer: Adam, rng: np.random.Generator) -> UpdateStats:
    """M epochs of shuffled minibatch clipped-surrogate ascent.

    A non-finite loss or gradient aborts the whole update and restores the
    pre-update parameters.
    """
    returns = [episode_return(t, preference, cfg) for t in trajectories]
    advs = advantages(returns)
    records = []
    for traj, adv in zip(trajectories, advs):
        for tr in traj.transitions:
            records.append((tr.features.rows, tr.action_row, tr.log_prob, float(adv)))
    if cfg.batch_size > len(records):
        raise ValueError(
            f"batch_size {cfg.batch_size} exceeds {len(records)} collected records"
        )
    snapshot = policy.clone_values()
    stats = UpdateStats()
    ratio_sum = 0.0
    ratio_n = 0
    first = True
    try:
        for _epoch in range(cfg.epochs):
            order = rng.permutation(len(records))
            for start in range(0, len(records), cfg.batch_size):
                idx = order[start: start + cfg.batch_size]
                grads, surrogate, ratios, clip_frac, entropy = _batch_gradients(
                    policy, records, idx, preference, cfg
                )
                if not math.isfinite(surrogate):
                    raise GradientError(f"non-finite surrogate {surrogate}")
                stats.grad_norm = clip_gradients(grads, cfg.grad_clip)
                optimizer.ascend(policy.params, grads, cfg.learning_rate)
                stats.surrogate = surrogate
                stats.clip_fraction = clip_frac
                ratio_sum += float(ratios.sum())
                ratio_n += ratios.size
                stats.ratio_max = max(stats.ratio_max, float(ratios.max()))
                if first:
                    stats.entropy = entropy
                    first = False
    except GradientError as exc:
        policy.load_values(snapshot)
        stats.aborted = True
        stats.diagnostics = str(exc)
        return stats
    stats.ratio_mean = ratio_sum / max(ratio_n, 1)
    return stats


@dataclass
class TrainResult:
    policy: DispatchPolicy
    history: list[dict]
    config: PpoConfig


def train(cfg: PpoConfig, inst: TerminalInstance, seed: int | None = None,
          checkpoint_path: str | Path | None = None,
          log_path: str | Path | None = None,
          progress=None) -> TrainResult:
    """Run the full training loop and return the trained policy.

    Deterministic for a fixed (cfg, instance, seed): preferences, episode
    seeds, and minibatch shuffles all derive from the root seed.
    """
    root_seed = cfg.seed if seed is None else seed
    scales = FeatureScales.for_instance(inst)
    if cfg.objective_scales is None:
        cfg.objective_scales = estimate_scales(
            inst, root_seed, cfg.warmup_rollouts, scales
        )
    net_cfg = NetworkConfig(fusion_mode=cfg.fusion_mode)
    meta = {
        "scales": {"dist": scales.dist, "count": scales.count},
        "objective_scales": list(cfg.objective_scales),
        "z_star": list(cfg.z_star),
        "train_seed": root_seed,
        "preference_set": [p.tolist() for p in cfg.preference_set],
    }
    policy = init_params(_episode_seed(root_seed, 2_000_000, 0), net_cfg, meta)
    optimizer = Adam()
    rng_pref = np.random.default_rng(np.random.SeedSequence((root_seed, 3_000_000)))
    rng_shuffle = np.random.default_rng(np.random.SeedSequence((root_seed, 4_000_000)))

    history: list[dict] = []
    log_fh = None
    if log_path is not None:
        log_path = Path(log_path)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        log_fh = log_path.open("w", encoding="utf-8")
        log_fh.write(json.dumps({"format": TRAIN_LOG_FORMAT}) + "\n")
    try:
        for it in range(cfg.iterations):
            t0 = time.perf_counter()
            pref = cfg.preference_set[int(rng_pref.integers(len(cfg.preference_set)))]
            trajectories = [
                rollout(policy, inst, pref, _episode_seed(root_seed, it, n),
                        mode="sample", scales=scales)
                for n in range(cfg.episodes_per_iter)
            ]
            stats = ppo_update(policy, trajectories, pref, cfg, optimizer, rng_shuffle)
            objectives = np.array([t.objectives for t in trajectories])
            record = {
                "iter": it,
                "preference": [float(pref[0]), float(pref[1])],
                "mean_objectives": objectives.mean(axis=0).tolist(),
                "loss": -stats.surrogate,
                "entropy": stats.entropy,
                "ratio_mean": stats.ratio_mean,
                "clip_fraction": stats.clip_fraction,
                "aborted": stats.aborted,
                "wall_time": time.perf_counter() - t0,
            }
            if stats.aborted:
                record["diagnostics"] = stats.diagnostics
            history.append(record)
            if log_fh is not None:
                log_fh.write(json.dumps(record) + "\n")
                log_fh.flush()
            if progress is not None:
                progress(record)
            if checkpoint_path is not None and (
                (it + 1) % cfg.checkpoint_every == 0 or it + 1 == cfg.iterations
            ):
                save_checkpoint(policy, checkpoint_path)
    finally:
        if log_fh is not None:
            log_fh.close()
    if checkpoint_path is not None and cfg.iterations > 0:
        save_checkpoint(policy, checkpoint_path)
    return TrainResult(policy, history, cfg)
