"""SHPJF person-job fit model with search-history intentions."""

from ._core import (
    ConfigError,
    Dataset,
    Error,
    EvaluationError,
    GeneratorConfig,
    HistoryEntry,
    IntentionCache,
    JobView,
    Model,
    ModelConfig,
    ParseError,
    TrainConfig,
    TrainingError,
    UserView,
    ValidationError,
    cli,
    compute_report,
    fit,
    generate,
    micro_grad_check,
    score_online,
)

__all__ = [
    "ConfigError",
    "Dataset",
    "Error",
    "EvaluationError",
    "GeneratorConfig",
    "HistoryEntry",
    "IntentionCache",
    "JobView",
    "Model",
    "ModelConfig",
    "ParseError",
    "TrainConfig",
    "TrainingError",
    "UserView",
    "ValidationError",
    "cli",
    "compute_report",
    "fit",
    "generate",
    "micro_grad_check",
    "score_online",
]
