"""Sentence autoencoders (DAE, VAE, WAE-D, WAE-S) on a small numpy autograd engine."""

from .autograd import Tensor, backward, finite_difference_check, no_grad
from .config import TrainConfig
from .data import Vocab, build_vocab, load_corpus, load_paired_corpus, make_batches, synth_corpus
from .latent import GaussianPosterior, KernelConfig, mmd_estimate
from .seqmodel import ModelDims, SeqModel
from .training import Trainer

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "backward",
    "finite_difference_check",
    "no_grad",
    "TrainConfig",
    "Vocab",
    "build_vocab",
    "load_corpus",
    "load_paired_corpus",
    "make_batches",
    "synth_corpus",
    "GaussianPosterior",
    "KernelConfig",
    "mmd_estimate",
    "ModelDims",
    "SeqModel",
    "Trainer",
]
