from beatgrid.model.adafactor import Adafactor, adafactor_update
from beatgrid.model.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from beatgrid.model.training import (
    Batch,
    TrainConfig,
    collate,
    make_optimizer,
    sequence_loss,
    train,
    training_step,
)
from beatgrid.model.transformer import ModelConfig, Seq2SeqTransformer, init_parameters, parameter_count

__all__ = [
    "Adafactor",
    "Batch",
    "Checkpoint",
    "ModelConfig",
    "Seq2SeqTransformer",
    "TrainConfig",
    "adafactor_update",
    "collate",
    "init_parameters",
    "load_checkpoint",
    "make_optimizer",
    "parameter_count",
    "save_checkpoint",
    "sequence_loss",
    "train",
    "training_step",
]
