"""Reproducible transfer-learning benchmark for graded diabetic-retinopathy
classification: manifest handling, seeded preprocessing, frozen-backbone
feature extraction, a trainable dense head with exact gradients, Adam with
plateau scheduling, the full per-class evaluation suite, and run reporting.
"""

__version__ = "0.1.0"

from .dataset import (  # noqa: F401
    CLASS_NAMES,
    DatasetManifest,
    GradeLabel,
    ImageRecord,
    Split,
    class_distribution,
    load_manifest,
    stratified_split,
)
from .model import (  # noqa: F401
    ClassifierModel,
    HeadSpec,
    build_model,
    categorical_cross_entropy,
    extract_features,
    head_backward,
    head_forward,
    predict,
)
from .optim import AdamState, PlateauScheduler, adam_step, scheduler_update  # noqa: F401
from .preprocess import (  # noqa: F401
    AugmentationPolicy,
    ImageTensor,
    ValueDomain,
    augment,
    flip_horizontal,
    load_image,
    normalize,
    resize,
)
from .train import TrainConfig, TrainingHistory, evaluate_epoch, train  # noqa: F401
