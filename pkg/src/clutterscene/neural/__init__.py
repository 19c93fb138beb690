from . import autodiff
from .autodiff import Tensor, backward
from .mpnn import (
    MPNN, GraphBatch, MPNNConfig, batch_graphs, init_params, load_checkpoint, masked_softmax, parameter_shapes,
    save_checkpoint,
)
from .optim import SGD, Adam, StepDecay, clip_by_global_norm, make_optimizer, optimizer_step

__all__ = [
    "Adam", "GraphBatch", "MPNN", "MPNNConfig", "SGD", "StepDecay", "Tensor", "autodiff", "backward",
    "batch_graphs", "clip_by_global_norm", "init_params", "load_checkpoint", "make_optimizer", "masked_softmax",
    "optimizer_step", "parameter_shapes", "save_checkpoint",
]
