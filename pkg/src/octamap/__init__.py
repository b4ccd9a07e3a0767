"""octamap: MAP reconstruction and evaluation toolkit for repeated-scan
OCT angiography volumes."""

__version__ = "0.1.0"

from .metrics import (
    SlabSpec,
    background_threshold,
    enface_percentile,
    export_png,
    load_png_image,
    median_filter_3d,
    psnr,
    reference_data_range,
    ssim,
)
from .models import (
    AngioModel,
    EPS_FLOOR,
    ad_closed_form,
    ad_decorrelation_term,
    ad_loglik_grad,
    closed_form,
    closed_form_volume,
    ifv_closed_form,
    ifv_loglik_grad,
    initial_octa,
    loglik,
    loglik_grad,
    loglik_grad_volume,
    sv_closed_form,
    sv_loglik_grad,
)
from .phantom import (
    PhantomScene,
    brute_force_mle,
    default_mle_grid,
    make_vessel_scene,
    simulate_repeats,
)
from .recon import (
    DivergenceError,
    IterationTrace,
    ReconConfig,
    config_from_settings,
    default_config,
    landweber_step,
    read_config_file,
    reconstruct,
    stable_floor,
)
from .regularizers import (
    TV_DUAL_STEP,
    HaarPyramid,
    RegularizerSpec,
    TotalVariation,
    WaveletShrinkage,
    apply_regularizer,
    haar_dwt_3d,
    haar_idwt_3d,
    total_variation,
    tv_denoise,
    wavelet_shrinkage,
)
from .volume import (
    AngioVolume,
    Dims,
    EnFaceImage,
    FormatError,
    RepeatScanVolume,
    Volume,
    load_volume,
    normalize_amplitudes,
    save_volume,
    subsample_repeats,
)

__all__ = [
    "__version__",
    "AngioModel",
    "AngioVolume",
    "Dims",
    "DivergenceError",
    "EnFaceImage",
    "EPS_FLOOR",
    "FormatError",
    "HaarPyramid",
    "TV_DUAL_STEP",
    "IterationTrace",
    "PhantomScene",
    "ReconConfig",
    "RegularizerSpec",
    "RepeatScanVolume",
    "SlabSpec",
    "TotalVariation",
    "Volume",
    "WaveletShrinkage",
    "ad_closed_form",
    "ad_decorrelation_term",
    "ad_loglik_grad",
    "apply_regularizer",
    "background_threshold",
    "brute_force_mle",
    "closed_form",
    "closed_form_volume",
    "config_from_settings",
    "default_config",
    "default_mle_grid",
    "enface_percentile",
    "export_png",
    "haar_dwt_3d",
    "haar_idwt_3d",
    "ifv_closed_form",
    "ifv_loglik_grad",
    "initial_octa",
    "landweber_step",
    "load_png_image",
    "load_volume",
    "loglik",
    "loglik_grad",
    "loglik_grad_volume",
    "make_vessel_scene",
    "median_filter_3d",
    "normalize_amplitudes",
    "psnr",
    "read_config_file",
    "reconstruct",
    "reference_data_range",
    "save_volume",
    "simulate_repeats",
    "ssim",
    "stable_floor",
    "subsample_repeats",
    "sv_closed_form",
    "sv_loglik_grad",
    "total_variation",
    "tv_denoise",
    "wavelet_shrinkage",
]
