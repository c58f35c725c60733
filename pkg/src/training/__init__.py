from .model import AdamState, ProjectionModel, adam_step, forward, init_model, load_model, save_model
from .trainer import FdResult, TrainConfig, Trainer, TrainRecord, finite_difference_check, history_frame, train, write_history

__all__ = [
    "AdamState",
    "FdResult",
    "ProjectionModel",
    "TrainConfig",
    "TrainRecord",
    "Trainer",
    "adam_step",
    "finite_difference_check",
    "forward",
    "history_frame",
    "init_model",
    "load_model",
    "save_model",
    "train",
    "write_history",
]
