from .tensor import Tensor, no_grad
from .network import (
    CHECKPOINT_FORMAT,
    FUSION_CONCAT,
    FUSION_HADAMARD,
    ForwardTrace,
    NetworkConfig,
    DispatchPolicy,
    init_params,
    load_checkpoint,
    save_checkpoint,
)

__all__ = [
    "Tensor",
    "no_grad",
    "CHECKPOINT_FORMAT",
    "FUSION_CONCAT",
    "FUSION_HADAMARD",
    "ForwardTrace",
    "NetworkConfig",
    "DispatchPolicy",
    "init_params",
    "load_checkpoint",
    "save_checkpoint",
]
