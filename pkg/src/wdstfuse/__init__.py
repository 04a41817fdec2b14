"""Perception-distortion fusion of super-resolved images in the wavelet domain.

Low-frequency content comes from a distortion-oriented image (optionally
sharpened by a small residual CNN); every high-frequency stationary-wavelet
sub-band is re-synthesised by style transfer against a perception-oriented
image.
"""

from .errors import ConfigError, ContractError, FormatError, ImageIOError, TrainingDiverged, WdstError
from .imgcore import ColorImage, ColorSpace, load_image, rgb_to_ycbcr, save_image, ycbcr_to_rgb
from .pipeline import FusionConfig, ablation_fuse, fuse, pd_curve, pd_interpolate, substitution_experiment
from .wavelet import SubbandPyramid, iswt2, make_filter_pair, replace_ll, swt2
from .wdst import StyleTransferConfig, transfer_subband

__version__ = "0.1.0"
