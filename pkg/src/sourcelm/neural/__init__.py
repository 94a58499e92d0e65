"""Neural next-token models: architectures, training loop, decoding."""

from .decoding import DecodeState, Suggestion, TraceRecord, suggest, trace
from .models import (
    ARCHITECTURES,
    NEG_LOGIT,
    EmptyMemory,
    Model,
    ModelConfig,
    State,
    StepOutput,
    attend,
    init_params,
)
from .training import (
    DivergedLoss,
    EpochStats,
    TrainConfig,
    evaluate_nll,
    perplexity,
    segment_loss,
    train,
)

__all__ = [
    "ARCHITECTURES",
    "NEG_LOGIT",
    "DecodeState",
    "DivergedLoss",
    "EmptyMemory",
    "EpochStats",
    "Model",
    "ModelConfig",
    "State",
    "StepOutput",
    "Suggestion",
    "TraceRecord",
    "TrainConfig",
    "attend",
    "evaluate_nll",
    "init_params",
    "perplexity",
    "segment_loss",
    "suggest",
    "trace",
    "train",
]
