"""Grouped exponential spiking vision transformer: inference engine, SOP profiler and oracles."""

from .config import ModelConfig, StageConfig, load_config, parse_config, preset
from .model import build, count_params, forward, init_weights, load_model, save_model
from .profiler import Profiler, emit_report, energy

__all__ = [
    "ModelConfig", "StageConfig", "load_config", "parse_config", "preset", "build", "count_params",
    "forward", "init_weights", "load_model", "save_model", "Profiler", "emit_report", "energy",
]
__version__ = "0.1.0"
