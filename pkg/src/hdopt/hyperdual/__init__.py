"""Second-order forward-mode differentiation with hyper-dual numbers."""
from .derivatives import (
    HESSIAN_CAP,
    PairEvaluation,
    batch_eval_tangent_pairs,
    directional_derivative,
    eval_fn_hd,
    eval_pairs,
    extract_hessian_element,
    hessian_full,
    hvp_forward,
    upper_pairs,
)
from .number import HyperDual, hd_add, hd_compare, hd_div, hd_mul, hd_pow, hd_sub, hd_unary, lift
from .primitives import PRIMITIVES, Primitive, get_primitive, power
from .tensor import HDTensor, hdt_map, hdt_matmul, hdt_mul, hdt_logsoftmax_nll, hdt_reduce_sum

__all__ = [
    "HESSIAN_CAP", "PairEvaluation", "batch_eval_tangent_pairs", "directional_derivative",
    "eval_fn_hd", "eval_pairs", "extract_hessian_element", "hessian_full", "hvp_forward",
    "upper_pairs", "HyperDual", "hd_add", "hd_compare", "hd_div", "hd_mul", "hd_pow",
    "hd_sub", "hd_unary", "lift", "PRIMITIVES", "Primitive", "get_primitive", "power",
    "HDTensor", "hdt_map", "hdt_matmul", "hdt_mul", "hdt_logsoftmax_nll", "hdt_reduce_sum",
]
