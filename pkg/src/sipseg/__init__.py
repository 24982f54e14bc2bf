"""Ocular image preprocessing, a forward-only segmentation network, and a
segmentation-evaluation metric suite, with a CLI for batch runs."""

from .augment import AugmentationParams, apply_augmentation, sample_augmentation
from .degrade import (
    DistortionSpec,
    PatchPair,
    degrade_image,
    extract_patch_pairs,
    half_mse,
    reconstruct,
    residual,
)
from .enhance import ClaheConfig, StretchLimits, clahe, contrast_stretch, hist_equalize, linear_map, stretch_limits
from .imgcore import (
    CLASS_NAMES,
    NUM_CLASSES,
    SyntheticEyeSpec,
    read_gray,
    read_labels,
    render_synthetic_eye,
    write_gray,
    write_labels,
)
from .kernels import ACTIVE_BACKEND
from .metrics import (
    aggregate_metrics,
    class_metrics,
    confusion_matrix,
    curves_and_auc,
    evaluation_report,
    psnr,
    ssim,
)
from .netshape import (
    ClassWeights,
    NetworkSpec,
    build_sipsegnet,
    class_weights,
    forward,
    load_weights,
    max_unpool2,
    maxpool2_with_indices,
    save_weights,
    sgdm_step,
    weighted_bce_loss,
)
from .periocular import (
    AtmedConfig,
    DioConfig,
    PipelineConfig,
    PipelineResult,
    PupilCircle,
    atmed_filter,
    extract_periocular_mask,
    locate_pupil,
    preprocess_pipeline,
    suppress_periocular,
)
from .restore import (
    AdaptiveThresholdConfig,
    NlmConfig,
    adaptive_threshold,
    dilate_disk,
    fill_holes,
    nlm_filter,
    remove_ocular_reflections,
)

__version__ = "0.1.0"
