"""Loss, schedule and training loop."""
from .losses import (LossConfig, LossConfigError, bce_with_logits, composite_loss, one_hot, pos_weights, soft_dice,
                     softplus)
from .loop import (EpochRecord, NumericAbort, TrainConfig, TrainConfigError, TrainingSet, TrainLog, batch_arrays,
                   class_counts, fit, lr_at, model_inputs, model_targets)

__all__ = [
    "EpochRecord", "LossConfig", "LossConfigError", "NumericAbort", "TrainConfig", "TrainConfigError", "TrainLog",
    "TrainingSet", "batch_arrays", "bce_with_logits", "class_counts", "composite_loss", "fit", "lr_at",
    "model_inputs", "model_targets", "one_hot", "pos_weights", "soft_dice", "softplus",
]
