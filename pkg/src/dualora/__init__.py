"""Dual LoRA: magnitude and direction groups for low-rank weight updates."""

from dualora.adapters import (
    Activation,
    DualAdapter,
    LoraAdapter,
    Variant,
    dual_delta,
    dual_forward,
    init_dual,
    init_lora,
    lora_delta,
    merge,
    param_count,
    warmup_scale,
)
from dualora.binarize import SignScheme, sign_backward, sign_forward
from dualora.matrix import RngStream, gaussian
from dualora.rank import numeric_rank, rank_report, singular_values

__version__ = "0.1.0"

__all__ = [
    "Activation", "DualAdapter", "LoraAdapter", "RngStream", "SignScheme", "Variant",
    "dual_delta", "dual_forward", "gaussian", "init_dual", "init_lora", "lora_delta", "merge",
    "numeric_rank", "param_count", "rank_report", "sign_backward", "sign_forward",
    "singular_values", "warmup_scale",
]
