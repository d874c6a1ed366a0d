from .adam import Adam, AdamState, adam_step, clip_grad_norm
from .checkpoint import load_checkpoint, save_checkpoint
from .layers import AttentionHead, Dense, Mlp, NetProfile, attention_mix, forward
from .tensor import Tensor, gradient, log_softmax, no_grad, softmax, softmax_np

__all__ = [
    "Adam",
    "AdamState",
    "AttentionHead",
    "Dense",
    "Mlp",
    "NetProfile",
    "Tensor",
    "adam_step",
    "attention_mix",
    "clip_grad_norm",
    "forward",
    "gradient",
    "load_checkpoint",
    "log_softmax",
    "no_grad",
    "save_checkpoint",
    "softmax",
    "softmax_np",
]
