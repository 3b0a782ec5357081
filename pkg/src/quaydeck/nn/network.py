"""The preference-conditioned dispatch policy network.

Pipeline per decision: encode each candidate crane's 14 features to a
128-d vector, mix the variable-size crane set with one multi-head
self-attention block (residual + layer norm, no positional encoding, so the
set order is irrelevant), embed the 2-d preference through a two-layer FC
block, fuse it into every crane vector (elementwise product by default, or
the concat-then-affine ablation), then score each crane and softmax over
the active set only. Inactive cranes are excluded from the input rather
than masked.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from . import tensor as T
from .tensor import Tensor, no_grad

CHECKPOINT_FORMAT = "quaydeck-ckpt/1"
FUSION_HADAMARD = "hadamard"
FUSION_CONCAT = "concat"


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class NetworkConfig:
    feature_dim: int = 14
    model_dim: int = 128
    heads: int = 8
    pref_dim: int = 2
    fusion_mode: str = FUSION_HADAMARD

    def __post_init__(self):
        if self.model_dim % self.heads != 0:
            raise ValueError("model_dim must be divisible by heads")
        if self.fusion_mode not in (FUSION_HADAMARD, FUSION_CONCAT):
            raise ValueError(f"unknown fusion_mode {self.fusion_mode!r}")


def _tensor_shapes(cfg: NetworkConfig) -> list[tuple[str, tuple[int, ...]]]:
    d, f, p = cfg.model_dim, cfg.feature_dim, cfg.pref_dim
    shapes = [
        ("enc_w", (f, d)), ("enc_b", (d,)),
        ("attn_wq", (d, d)), ("attn_bq", (d,)),
        ("attn_wk", (d, d)), ("attn_bk", (d,)),
        ("attn_wv", (d, d)), ("attn_bv", (d,)),
        ("attn_wo", (d, d)), ("attn_bo", (d,)),
        ("ln_gamma", (d,)), ("ln_beta", (d,)),
    ]
    if cfg.fusion_mode == FUSION_HADAMARD:
        shapes += [
            ("pref_w1", (p, d)), ("pref_b1", (d,)),
            ("pref_w2", (d, d)), ("pref_b2", (d,)),
        ]
    else:
        shapes += [("fuse_w", (d + p, d)), ("fuse_b", (d,))]
    shapes += [("head_w", (d, 1)), ("head_b", (1,))]
    return shapes


@dataclass
class ForwardTrace:
    """Graph handle for one forward pass; enough to take exact gradients."""

    log_probs: Tensor          # (n,) or (batch, n)
    probs: np.ndarray
    params: dict[str, Tensor]
    single: bool


class DispatchPolicy:
    def __init__(self, config: NetworkConfig, params: dict[str, Tensor], meta: dict | None = None):
        self.config = config
        self.params = params
        self.meta = meta or {}

    # -- inference / training forward ------------------------------------

    def forward(self, rows, preference) -> ForwardTrace:
        """Action distribution over the active crane rows.

        `rows` is (n, feature_dim) for one decision or (batch, n, feature_dim)
        for a batch sharing the same active-set size; `preference` broadcasts
        accordingly.
        """
        rows = np.asarray(rows, dtype=np.float64)
        pref = np.asarray(preference, dtype=np.float64)
        single = rows.ndim == 2
        if single:
            rows = rows[None, :, :]
        if rows.ndim != 3 or rows.shape[-1] != self.config.feature_dim:
            raise ValueError(f"bad feature shape {rows.shape}")
        if rows.shape[1] == 0:
            raise ValueError("no active cranes to score")
        if pref.ndim == 1:
            pref = np.broadcast_to(pref, (rows.shape[0], self.config.pref_dim)).copy()

        pr = self.params
        x = Tensor(rows)
        p_in = Tensor(pref)

        h = T.relu(T.affine(x, pr["enc_w"], pr["enc_b"]))
        attended = self._attention(h)
        h2 = T.layer_norm(T.add(h, attended), pr["ln_gamma"], pr["ln_beta"])

        if self.config.fusion_mode == FUSION_HADAMARD:
            e = T.relu(T.affine(p_in, pr["pref_w1"], pr["pref_b1"]))
            e = T.affine(e, pr["pref_w2"], pr["pref_b2"])
            gate = T.reshape(e, (rows.shape[0], 1, self.config.model_dim))
            fused = T.mul(h2, gate)
        else:
            tiled = Tensor(np.broadcast_to(pref[:, None, :], rows.shape[:2] + (self.config.pref_dim,)).copy())
            fused = T.affine(T.concat([h2, tiled], axis=-1), pr["fuse_w"], pr["fuse_b"])

        logits = T.reshape(T.affine(fused, pr["head_w"], pr["head_b"]), rows.shape[:2])
        log_probs = T.log_softmax(logits, axis=-1)
        if single:
            log_probs = T.reshape(log_probs, (rows.shape[1],))
        probs = np.exp(log_probs.values)
        return ForwardTrace(log_probs, probs, pr, single)

    def _attention(self, h: Tensor) -> Tensor:
        cfg = self.config
        nh, dh = cfg.heads, cfg.model_dim // cfg.heads
        pr = self.params
        q = T.split_heads(T.affine(h, pr["attn_wq"], pr["attn_bq"]), nh)
        k = T.split_heads(T.affine(h, pr["attn_wk"], pr["attn_bk"]), nh)
        v = T.split_heads(T.affine(h, pr["attn_wv"], pr["attn_bv"]), nh)
        scores = T.scale(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(dh))
        mixed = T.matmul(T.softmax(scores, axis=-1), v)
        return T.affine(T.merge_heads(mixed), pr["attn_wo"], pr["attn_bo"])

    def action_probabilities(self, rows, preference) -> np.ndarray:
        with no_grad():
            return self.forward(rows, preference).probs

    def entropy(self, rows, preference) -> float:
        p = self.action_probabilities(rows, preference)
        nz = p[p > 0]
        return float(-(nz * np.log(nz)).sum())

    def clone_values(self) -> dict[str, np.ndarray]:
        return {k: v.values.copy() for k, v in self.params.items()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        for k, t in self.params.items():
            t.values = np.array(values[k], dtype=np.float64)


def init_params(seed: int, config: NetworkConfig | None = None,
                meta: dict | None = None) -> DispatchPolicy:
    """Fan-in-scaled uniform initialization, deterministic per seed."""
    cfg = config or NetworkConfig()
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    params: dict[str, Tensor] = {}
    for name, shape in _tensor_shapes(cfg):
        if name == "ln_gamma":
            values = np.ones(shape)
        elif len(shape) == 1:  # biases and the layer-norm shift start at zero
            values = np.zeros(shape)
        else:
            bound = 1.0 / np.sqrt(shape[0])
            values = rng.uniform(-bound, bound, size=shape)
        params[name] = Tensor(values, name=name)
    return DispatchPolicy(cfg, params, meta)


def forward(policy: DispatchPolicy, rows, preference) -> tuple[np.ndarray, ForwardTrace]:
    trace = policy.forward(rows, preference)
    return trace.probs, trace


def backward(trace: ForwardTrace, action: int) -> dict[str, np.ndarray]:
    """Gradients of log pi(action | state, preference) w.r.t. every parameter."""
    if not trace.single:
        raise ValueError("per-action backward expects a single-decision trace")
    n = trace.log_probs.values.shape[0]
    if not (0 <= action < n):
        raise ValueError(f"action {action} outside {n} active rows")
    seed = np.zeros(n)
    seed[action] = 1.0
    T.backward(trace.log_probs, seed=seed)
    return {
        name: (np.zeros_like(t.values) if t.grad is None else t.grad.copy())
        for name, t in trace.params.items()
    }


# -- checkpoint io ---------------------------------------------------------

def save_checkpoint(policy: DispatchPolicy, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = [name for name, _ in _tensor_shapes(policy.config)]
    header = {
        "format": CHECKPOINT_FORMAT,
        "config": asdict(policy.config),
        "meta": policy.meta,
        "tensors": [[name, list(policy.params[name].shape)] for name in names],
    }
    with path.open("wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for name in names:
            fh.write(policy.params[name].values.astype("<f8").tobytes())
    return path


def load_checkpoint(path: str | Path) -> DispatchPolicy:
    path = Path(path)
    with path.open("rb") as fh:
        header_line = fh.readline()
        blob = fh.read()
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable checkpoint header: {exc}") from None
    if header.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"unsupported checkpoint format {header.get('format')!r}")
    cfg = NetworkConfig(**header["config"])
    expected = dict(_tensor_shapes(cfg))
    params: dict[str, Tensor] = {}
    offset = 0
    for name, shape in header["tensors"]:
        shape = tuple(shape)
        if expected.get(name) != shape:
            raise CheckpointError(f"tensor {name!r} has shape {shape}, expected {expected.get(name)}")
        size = int(np.prod(shape)) * 8
        chunk = blob[offset: offset + size]
        if len(chunk) != size:
            raise CheckpointError(f"checkpoint truncated in tensor {name!r}")
        params[name] = Tensor(
            np.frombuffer(chunk, dtype="<f8").reshape(shape).copy(), name=name
        )
        offset += size
    if offset != len(blob):
        raise CheckpointError("trailing bytes after tensor blocks")
    missing = set(expected) - set(params)
    if missing:
        raise CheckpointError(f"checkpoint missing tensors: {sorted(missing)}")
    return DispatchPolicy(cfg, params, header.get("meta", {}))
