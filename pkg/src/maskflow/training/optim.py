"""Gradient accumulation and the decoupled-weight-decay adaptive update.

Micro-gradients are averaged (each contributes ``grad / accumulation_steps``)
and a single optimizer update fires exactly when the micro-step counter hits
a multiple of ``accumulation_steps``, after which buffers reset. The update
is the standard decoupled-weight-decay Adam rule:

    m   <- b1*m + (1-b1)*g            mhat = m / (1 - b1^t)
    v   <- b2*v + (1-b2)*g^2          vhat = v / (1 - b2^t)
    p   <- p - lr * (mhat / (sqrt(vhat) + eps) + weight_decay * p)

with the learning rate taken from the step-decay schedule at the number of
optimizer steps completed so far.
"""

from dataclasses import dataclass, field

import numpy as np

from ..errors import ValidationError
from .config import TrainingConfig, lr_at
from .model import PointPromptNet, trainable_params

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainState:
    micro_step: int = 0
    optimizer_step: int = 0
    current_lr: float = 0.0
    accumulated: dict[str, np.ndarray] = field(default_factory=dict)
    adam_m: dict[str, np.ndarray] = field(default_factory=dict)
    adam_v: dict[str, np.ndarray] = field(default_factory=dict)
    loss_history: list[float] = field(default_factory=list)


def init_state(model: PointPromptNet, cfg: TrainingConfig) -> TrainState:
    state = TrainState(current_lr=lr_at(0, cfg))
    for name, value in trainable_params(model).items():
        state.accumulated[name] = np.zeros_like(value)
        state.adam_m[name] = np.zeros_like(value)
        state.adam_v[name] = np.zeros_like(value)
    return state


def accumulate_and_step(
    state: TrainState,
    model: PointPromptNet,
    micro_gradient: dict[str, np.ndarray],
    cfg: TrainingConfig,
) -> TrainState:
    """Fold one micro-gradient into the state, updating parameters when due.

    ``micro_gradient`` must cover exactly the trainable parameters with
    matching shapes. Frozen groups are never touched.
    """
    trainable = trainable_params(model)
    if set(micro_gradient) != set(trainable):
        raise ValidationError(
            f"gradient keys {sorted(micro_gradient)} do not match "
            f"trainable parameters {sorted(trainable)}"
        )
    for name, grad in micro_gradient.items():
        if grad.shape != trainable[name].shape:
            raise ValidationError(
                f"{name}: gradient shape {grad.shape} != parameter shape {trainable[name].shape}"
            )
        state.accumulated[name] += grad / cfg.accumulation_steps

    state.micro_step += 1
    if state.micro_step % cfg.accumulation_steps == 0:
        lr = lr_at(state.optimizer_step, cfg)
        t = state.optimizer_step + 1
        for name, param in trainable.items():
            g = state.accumulated[name]
            state.adam_m[name] = ADAM_BETA1 * state.adam_m[name] + (1 - ADAM_BETA1) * g
            state.adam_v[name] = ADAM_BETA2 * state.adam_v[name] + (1 - ADAM_BETA2) * g * g
            m_hat = state.adam_m[name] / (1 - ADAM_BETA1**t)
            v_hat = state.adam_v[name] / (1 - ADAM_BETA2**t)
            param -= lr * (m_hat / (np.sqrt(v_hat) + ADAM_EPS) + cfg.weight_decay * param)
            state.accumulated[name] = np.zeros_like(g)
        state.optimizer_step += 1
    state.current_lr = lr_at(state.optimizer_step, cfg)
    return state
