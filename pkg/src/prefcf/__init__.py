"""prefcf: latent-class collaborative filtering with decoupled preference and rating patterns."""

from .data import (
    FIRST_IN_FILE,
    SEEDED_RANDOM,
    RatingTable,
    RatingTriple,
    SplitProtocol,
    SplitResult,
    load_dataset,
    split,
    write_canonical,
)
from .em import AnnealSchedule, ConvergenceCriterion, TrainTrace, run_em
from .evaluate import EvalReport, EvalRow, PredictionRecord, mae, render_report, run_protocol
from .config import RunConfig, parse_config
from .persist import load_model, save_model

__all__ = [
    "AnnealSchedule",
    "ConvergenceCriterion",
    "EvalReport",
    "EvalRow",
    "FIRST_IN_FILE",
    "PredictionRecord",
    "RatingTable",
    "RatingTriple",
    "RunConfig",
    "SEEDED_RANDOM",
    "SplitProtocol",
    "SplitResult",
    "TrainTrace",
    "load_dataset",
    "load_model",
    "mae",
    "parse_config",
    "render_report",
    "run_em",
    "run_protocol",
    "save_model",
    "split",
    "write_canonical",
]
