from .gradcheck import grad_check, numeric_grad
from .layers import (
    DecoderLayer,
    Encoder,
    EncoderConfig,
    EncoderLayer,
    MultiHeadAttention,
    causal_mask,
    encode,
    init_weights,
    key_mask,
    sinusoidal_positions,
)
from .losses import EXT_WEIGHTS, REL_WEIGHTS, LossWeights, cross_entropy, weighted_bce
from .optim import Adam, adam_step, plateau_fires, plateau_schedule
from .training import load_checkpoint, save_checkpoint

__all__ = [
    "Adam",
    "DecoderLayer",
    "EXT_WEIGHTS",
    "Encoder",
    "EncoderConfig",
    "EncoderLayer",
    "LossWeights",
    "MultiHeadAttention",
    "REL_WEIGHTS",
    "adam_step",
    "causal_mask",
    "cross_entropy",
    "encode",
    "grad_check",
    "init_weights",
    "key_mask",
    "load_checkpoint",
    "numeric_grad",
    "plateau_fires",
    "plateau_schedule",
    "save_checkpoint",
    "sinusoidal_positions",
    "weighted_bce",
]
