from .losses import adversarial_loss_d, generator_adversarial_loss, generator_loss, reconstruction_loss
from .optim import Adam, OptimizerState, adam_step
from .trainer import LOG_COLUMNS, TrainConfig, Trainer, TrainLogRecord, load_generator, read_log, train_loop

__all__ = [
    "Adam",
    "LOG_COLUMNS",
    "OptimizerState",
    "TrainConfig",
    "TrainLogRecord",
    "Trainer",
    "adam_step",
    "adversarial_loss_d",
    "generator_adversarial_loss",
    "generator_loss",
    "load_generator",
    "read_log",
    "reconstruction_loss",
    "train_loop",
]
