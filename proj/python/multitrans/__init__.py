"""Multi-sensor event detection with self-attention fusion over sensors."""

from ._multitrans import (
    Checkpoint,
    ContractError,
    Dataset,
    FeatureClip,
    GenerationError,
    IoError,
    NumericError,
    ShapeError,
    TrainingError,
    average_precision,
    class_weights,
    default_config,
    dump_attention,
    evaluate,
    generate_dataset,
    load_dataset,
    lr_schedule,
    save_dataset,
    train,
)

__all__ = [
    "Checkpoint",
    "ContractError",
    "Dataset",
    "FeatureClip",
    "GenerationError",
    "IoError",
    "NumericError",
    "ShapeError",
    "TrainingError",
    "average_precision",
    "class_weights",
    "default_config",
    "dump_attention",
    "evaluate",
    "generate_dataset",
    "load_dataset",
    "lr_schedule",
    "save_dataset",
    "train",
]
