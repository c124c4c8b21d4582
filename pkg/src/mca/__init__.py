"""Motion coherent augmentation for video classifiers, in numpy.

Channel Swap and SwapMix change only the hue of a video, and a variation
alignment loss pulls the prediction on the augmented view towards that on the
clean view.  The package also ships a small differentiable video classifier,
a synthetic motion dataset with a tunable colour confound, augmentation
metrics and a speed benchmark.
"""

from .augment import channel_swap, swap_mix
from .colorspace import hsv_to_rgb, hue_jitter, rgb_to_hsv
from .metrics import affinity, diversity, ece
from .smallnet import av_loss, ce_loss, total_loss
from .trainer import TrainConfig, run_training

__all__ = [
    "TrainConfig",
    "affinity",
    "av_loss",
    "ce_loss",
    "channel_swap",
    "diversity",
    "ece",
    "hsv_to_rgb",
    "hue_jitter",
    "rgb_to_hsv",
    "run_training",
    "swap_mix",
    "total_loss",
]
