"""HD-sEMG hand-gesture recognition.

Signal envelopes, window/patch segmentation, a from-scratch vision
transformer with tape-based reverse-mode autodiff, Adam training under
repetition-wise 5-fold cross-validation, and a shrinkage-LDA baseline over
classical per-channel features.
"""
from .baseline import (
    FeatureVector,
    LdaModel,
    burg_ar,
    extract_features,
    lda_fit,
    lda_predict,
    run_cv_lda,
)
from .data import (
    Dataset,
    DatasetManifest,
    SyntheticSpec,
    generate_synthetic,
    import_csv,
    read_dataset,
    write_dataset,
)
from .segment import (
    PatchSequence,
    WindowingSpec,
    WindowTensor,
    patchify,
    slide_windows,
    unpatchify,
)
from .signals import (
    EmgRecording,
    FilterSpec,
    butterworth_lowpass,
    mu_law_normalize,
    preprocess,
    rectify,
    scale_to_unit,
)
from .tensor import ComputationTape, Tensor, backward, no_grad
from .train import FoldReport, TrainConfig, adam_step, cross_entropy, make_folds, run_cv
from .vit import (
    VitConfig,
    VitParams,
    classify,
    init_params,
    load_checkpoint,
    parameter_count,
    preset_config,
    save_checkpoint,
)

__version__ = "0.1.0"

__all__ = [
    "ComputationTape",
    "Dataset",
    "DatasetManifest",
    "EmgRecording",
    "FeatureVector",
    "FilterSpec",
    "FoldReport",
    "LdaModel",
    "PatchSequence",
    "SyntheticSpec",
    "Tensor",
    "TrainConfig",
    "VitConfig",
    "VitParams",
    "WindowTensor",
    "WindowingSpec",
    "adam_step",
    "backward",
    "burg_ar",
    "butterworth_lowpass",
    "classify",
    "cross_entropy",
    "extract_features",
    "generate_synthetic",
    "import_csv",
    "init_params",
    "lda_fit",
    "lda_predict",
    "load_checkpoint",
    "make_folds",
    "mu_law_normalize",
    "no_grad",
    "parameter_count",
    "patchify",
    "preprocess",
    "preset_config",
    "read_dataset",
    "rectify",
    "run_cv",
    "run_cv_lda",
    "save_checkpoint",
    "scale_to_unit",
    "slide_windows",
    "unpatchify",
    "write_dataset",
]
