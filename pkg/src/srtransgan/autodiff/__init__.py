from . import ops
from .gradcheck import grad_check, max_relative_error, numerical_grad
from .rng import Rng
from .tensor import Tensor, default_dtype, get_default_dtype, no_grad, set_default_dtype

__all__ = [
    "Rng",
    "Tensor",
    "default_dtype",
    "get_default_dtype",
    "grad_check",
    "max_relative_error",
    "no_grad",
    "numerical_grad",
    "ops",
    "set_default_dtype",
]
