"""lusoforge: a desk-scale lab for training and evaluating text encoders.

Everything runs on numpy through a small reverse-mode autodiff engine: a
disentangled-attention encoder, a BPE tokenizer, a web-corpus filter chain,
masked-language-model pre-training, and a grid-search fine-tuning harness,
all reproducible bit for bit from a single seed.
"""

__version__ = "0.1.0"

from lusoforge.autodiff import Tensor, backward
from lusoforge.encoder import DisentangledEncoder, EncoderConfig, preset

__all__ = [
    "Tensor",
    "backward",
    "DisentangledEncoder",
    "EncoderConfig",
    "preset",
    "__version__",
]
