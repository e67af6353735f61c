from .tensor import Tensor, value_of, PRIMITIVES
from .params import ParamVector, BlockSlot
from .grad import gradient, value_and_gradient, finite_difference_gradient
from .optim import AdamState, adam_step, cosine_lr
from .mlp import MLPSpec, mlp_eval, mlp_raw, init_mlp_params, encode_time, squash, unsquash

__all__ = [
    "Tensor",
    "value_of",
    "PRIMITIVES",
    "ParamVector",
    "BlockSlot",
    "gradient",
    "value_and_gradient",
    "finite_difference_gradient",
    "AdamState",
    "adam_step",
    "cosine_lr",
    "MLPSpec",
    "mlp_eval",
    "mlp_raw",
    "init_mlp_params",
    "encode_time",
    "squash",
    "unsquash",
]
