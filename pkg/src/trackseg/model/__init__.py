from .checkpoint import CheckpointError, load_checkpoint, read_checkpoint_arrays, save_checkpoint
from .config import ConfigError, ModelConfig, presets
from .network import (
    MFA_TAG,
    Attention,
    DecoderBlock,
    Encoder,
    FramePrediction,
    Module,
    PixelDecoder,
    SegTrackNet,
    positional_encoding_2d,
)

__all__ = [
    "Attention",
    "CheckpointError",
    "ConfigError",
    "DecoderBlock",
    "Encoder",
    "FramePrediction",
    "MFA_TAG",
    "ModelConfig",
    "Module",
    "PixelDecoder",
    "SegTrackNet",
    "load_checkpoint",
    "positional_encoding_2d",
    "presets",
    "read_checkpoint_arrays",
    "save_checkpoint",
]
