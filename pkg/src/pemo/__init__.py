"""Auditory perception model with an optimal-detector back end and an
adaptive 3-AFC harness for instrument-in-noise discrimination thresholds.
"""
from .config import PRESETS, ModelConfig, get_preset
from .modulation_analysis import InternalRepresentation, build_representation
from .peripheral_model import PeripheralConfig
from .signal_io import AudioSignal

__version__ = "0.1.0"

__all__ = [
    "AudioSignal",
    "InternalRepresentation",
    "ModelConfig",
    "PRESETS",
    "PeripheralConfig",
    "build_representation",
    "get_preset",
]
