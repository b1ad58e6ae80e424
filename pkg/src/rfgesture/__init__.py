"""Gesture recognition from body-worn passive RFID tags with missing reads.

Pipeline: `ingest` (logs to samples) -> `preprocess` (unwrap, normalise,
smooth, pad) -> `interp` (gap filling, resampling) -> `impute` (null tags)
-> `graph` (temporal K-NN) -> `gnn` (attention graph classifier).
`synth` generates labelled data and `evaluate` / `cli` run experiments.
"""

__version__ = "0.1.0"

from .evaluate import Metrics, SplitSpec, compute_metrics, split
from .gnn import ModelConfig, ModelParams, TrainConfig, predict, train
from .ingest import Dataframe, GestureSample, load_dataset, parse_log
from .pipeline import PipelineConfig, ProcessedSet, process_dataset
from .synth import ChannelConfig, DropoutConfig, TrajectoryModel, generate_dataset

__all__ = [
    "ChannelConfig",
    "Dataframe",
    "DropoutConfig",
    "GestureSample",
    "Metrics",
    "ModelConfig",
    "ModelParams",
    "PipelineConfig",
    "ProcessedSet",
    "SplitSpec",
    "TrainConfig",
    "TrajectoryModel",
    "compute_metrics",
    "generate_dataset",
    "load_dataset",
    "parse_log",
    "predict",
    "process_dataset",
    "split",
    "train",
]
