"""Minimal reverse-mode training substrate for sequential dense/conv/BN networks."""
from .crossgrad import (CrossGradient, cross_gradient, cross_gradient_from_signals,
                        im2col_reshape, zero_aux)
from .functional import squared_loss
from .layers import BatchNorm, Conv2D, Dense
from .network import (AuxLink, ForwardCache, GradientSet, Network, backward, conv_net,
                      dense_mlp, forward)
from .optim import SGD, AdamState, adam_step, sgd_step

__all__ = [
    "AdamState", "AuxLink", "BatchNorm", "Conv2D", "CrossGradient", "Dense", "ForwardCache",
    "GradientSet", "Network", "SGD", "adam_step", "backward", "conv_net", "cross_gradient",
    "cross_gradient_from_signals", "dense_mlp", "forward", "im2col_reshape", "sgd_step",
    "squared_loss", "zero_aux",
]
