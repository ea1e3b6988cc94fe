"""Spike-train grasp decoding: binning, BiLSTM training, evaluation, streaming.

The package mirrors the processing chain: ``session`` (data model + disk
format), ``synthgen`` (synthetic sessions), ``pipeline`` (binning, class map,
trial-level split, windows), ``nn`` (from-scratch bidirectional LSTM with
exact BPTT), ``trainer``, ``tuner``, ``metrics``, ``realtime`` (streaming
simulation) and ``cli``.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DataError,
    DivergenceError,
    SessionFormatError,
    SpikeDecodeError,
)
from .session import Session, Trial, load_session, save_session, validate_session
from .synthgen import SynthConfig, default_benchmark_config, generate_session
from .pipeline import (
    BinnedTrial,
    ClassMap,
    PipelineConfig,
    assemble_datasets,
    bin_trial,
    build_class_map,
    make_sequences,
    stratified_split,
)
from .nn import BiLstmModel, ModelConfig, backward, forward, gradient_check, loss
from .trainer import TrainConfig, train
from .tuner import SearchSpace, random_search, sample_config
from .metrics import accuracy, confusion, macro_f1, phase_rates, relaxed_accuracy
from .realtime import StreamReport, replay_session, stream_decode

__all__ = [
    "__version__",
    "SpikeDecodeError", "ConfigError", "DataError", "DivergenceError", "SessionFormatError",
    "Session", "Trial", "load_session", "save_session", "validate_session",
    "SynthConfig", "default_benchmark_config", "generate_session",
    "BinnedTrial", "ClassMap", "PipelineConfig", "assemble_datasets", "bin_trial",
    "build_class_map", "make_sequences", "stratified_split",
    "BiLstmModel", "ModelConfig", "backward", "forward", "gradient_check", "loss",
    "TrainConfig", "train",
    "SearchSpace", "random_search", "sample_config",
    "accuracy", "confusion", "macro_f1", "phase_rates", "relaxed_accuracy",
    "StreamReport", "replay_session", "stream_decode",
]
