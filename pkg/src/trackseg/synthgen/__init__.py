from .dataset_io import (
    DatasetError,
    read_dataset,
    read_sequence,
    rle_decode,
    rle_encode,
    sequence_dirname,
    write_dataset,
    write_sequence,
)
from .sequences import (
    GenConfig,
    GenerationError,
    SequenceRecord,
    appearance_groups,
    config_from_dict,
    generate_sequence,
    simulate_sequence,
)
from .shapes import FrameRecord, ObjectInstance, ShapeSpec, make_background, rasterize_frame

__all__ = [
    "DatasetError",
    "FrameRecord",
    "GenConfig",
    "GenerationError",
    "ObjectInstance",
    "SequenceRecord",
    "ShapeSpec",
    "appearance_groups",
    "config_from_dict",
    "generate_sequence",
    "make_background",
    "rasterize_frame",
    "read_dataset",
    "read_sequence",
    "rle_decode",
    "rle_encode",
    "sequence_dirname",
    "simulate_sequence",
    "write_dataset",
    "write_sequence",
]
