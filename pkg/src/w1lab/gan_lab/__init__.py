"""Critic/generator losses, Lipschitz estimates and training loops."""

from .losses import (
    LipschitzEstimate,
    Net,
    NormalizedEstimate,
    ctransform_grads,
    ctransform_loss,
    gradient_penalty,
    interpolate_tau,
    lipschitz_bounds,
    normalized_w1_estimate,
    nsgan_gen_grads,
    nsgan_losses,
    value_fn,
)
from .training import (
    TrainConfig,
    TrainingDiverged,
    TrainLog,
    TrainOutcome,
    TrainRecord,
    train_gan,
    train_minibatch_sinkhorn,
)

__all__ = [
    "LipschitzEstimate",
    "Net",
    "NormalizedEstimate",
    "TrainConfig",
    "TrainLog",
    "TrainOutcome",
    "TrainRecord",
    "TrainingDiverged",
    "ctransform_grads",
    "ctransform_loss",
    "gradient_penalty",
    "interpolate_tau",
    "lipschitz_bounds",
    "normalized_w1_estimate",
    "nsgan_gen_grads",
    "nsgan_losses",
    "train_gan",
    "train_minibatch_sinkhorn",
    "value_fn",
]
