"""Convolutional language-history image captioner.

A desk-scale captioning stack: a float64 reverse-mode tensor engine, a
temporal-convolution history encoder fused with image features, pluggable
recurrent cells, an Adam trainer with cosine warm restarts and CIDEr early
stopping, greedy/beam/exhaustive decoders, and BLEU/CIDEr metrics.
"""

from .autograd import Tensor, backward, no_grad
from .data import FeatureStore, Vocabulary, build_vocabulary, synth_corpus
from .model import CaptionerModel, ModelConfig, parameter_count, sequence_loss, step

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "backward",
    "no_grad",
    "FeatureStore",
    "Vocabulary",
    "build_vocabulary",
    "synth_corpus",
    "CaptionerModel",
    "ModelConfig",
    "parameter_count",
    "sequence_loss",
    "step",
    "__version__",
]
