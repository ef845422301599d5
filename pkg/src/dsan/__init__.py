"""Dilated strip attention image restoration, built from first principles.

Tensor core with tape autodiff, strip attention operators and their naive
oracles, a six-scale encoder-decoder, dual-domain L1 loss, Adam with cosine
annealing, synthetic degradation data, PSNR/SSIM, and an operator CLI.
"""

from .tensor import Tensor, no_grad
from .strip import DsamConfig, StripWeights, dsa, dsam, dsa_oracle, receptive_field_footprint, sa
from .model import DsanModel, build_dsan, forward, param_count
from .config import RunConfig

__all__ = [
    "Tensor",
    "no_grad",
    "DsamConfig",
    "StripWeights",
    "dsa",
    "dsam",
    "dsa_oracle",
    "receptive_field_footprint",
    "sa",
    "DsanModel",
    "build_dsan",
    "forward",
    "param_count",
    "RunConfig",
]

__version__ = "0.1.0"
