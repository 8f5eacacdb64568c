from .config import ModelConfig, desk_config, full_scale_config
from .network import LapaNet, build_model, count_parameters, prepare_input, shape_ledger

__all__ = [
    "ModelConfig", "desk_config", "full_scale_config",
    "LapaNet", "build_model", "count_parameters", "prepare_input", "shape_ledger",
]
