"""Two-party vertical logistic regression protocols."""
from .config import HybridParams, TrainConfig, defense_name
from .training import (
    TrainResult,
    centralized_train,
    draw_indicator,
    epoch_batches,
    epoch_subsets,
    run_baseline,
    run_hybrid,
    run_ldp,
    run_protocol,
    transcript_conforms,
)
from .wire import Kind, Party, ProtocolMessage, Transcript

__all__ = [
    "HybridParams", "TrainConfig", "defense_name", "TrainResult", "centralized_train", "draw_indicator",
    "epoch_batches", "epoch_subsets", "run_baseline", "run_hybrid", "run_ldp", "run_protocol",
    "transcript_conforms", "Kind", "Party", "ProtocolMessage", "Transcript",
]
