"""Residual feature distillation networks for lightweight super-resolution."""

from .arch import (RFDN, RFDN_L, BlockVariant, Model, ModelConfig, WeightStore, build_rfdn,
                   build_variant, count_mult_adds, count_params, rfdn_forward)
from .errors import ConfigError, ShapeError, UsageError, WeightFormatError

__all__ = [
    "RFDN", "RFDN_L", "BlockVariant", "Model", "ModelConfig", "WeightStore", "build_rfdn",
    "build_variant", "count_mult_adds", "count_params", "rfdn_forward",
    "ConfigError", "ShapeError", "UsageError", "WeightFormatError",
]
