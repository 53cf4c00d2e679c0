"""Joint optic cup / optic disc segmentation toolkit.

A densely connected encoder-decoder with channel-wise grouped convolutions
segments fundus photographs into background, disc rim and cup; the
package-level surface re-exports the declarative architecture tools, the
training objective, the evaluation metrics and the data plumbing.
"""

from .netspec import (
    NetworkSpec,
    SpecError,
    TensorShape,
    audit_against_tables,
    count_parameters,
    default_network_spec,
    infer_shapes,
    total_parameter_count,
)
from .model import DenseEncoderDecoder, build_network
from .loss import (
    class_weights,
    finite_difference_check,
    generalized_dice_loss,
    generalized_dice_loss_from_logits,
    one_hot_target,
)
from .metrics import (
    CDR_SCREEN_THRESHOLD,
    CdrResult,
    compute_cdr,
    compute_metrics,
    evaluate_pair,
    structure_mask,
    vertical_diameter,
)
from .data import (
    DataError,
    DatasetManifest,
    FundusSample,
    augment,
    encode_mask,
    load_drishti,
    load_rimone,
    load_sample,
    load_split,
    resize_sample,
    split,
)
from .engine import (
    CompatibilityError,
    EvalReport,
    TrainConfig,
    evaluate,
    load_checkpoint,
    overfit_single,
    predict,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "NetworkSpec",
    "SpecError",
    "TensorShape",
    "audit_against_tables",
    "count_parameters",
    "default_network_spec",
    "infer_shapes",
    "total_parameter_count",
    "DenseEncoderDecoder",
    "build_network",
    "class_weights",
    "finite_difference_check",
    "generalized_dice_loss",
    "generalized_dice_loss_from_logits",
    "one_hot_target",
    "CDR_SCREEN_THRESHOLD",
    "CdrResult",
    "compute_cdr",
    "compute_metrics",
    "evaluate_pair",
    "structure_mask",
    "vertical_diameter",
    "DataError",
    "DatasetManifest",
    "FundusSample",
    "augment",
    "encode_mask",
    "load_drishti",
    "load_rimone",
    "load_sample",
    "load_split",
    "resize_sample",
    "split",
    "CompatibilityError",
    "EvalReport",
    "TrainConfig",
    "evaluate",
    "load_checkpoint",
    "overfit_single",
    "predict",
    "save_checkpoint",
    "train",
]
