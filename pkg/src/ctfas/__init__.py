"""Multi-modal face anti-spoofing via cross-modal transition consistency.

Train per-modality encoders against EMA live prototypes with transition
consistency losses, score samples by prototype distance plus transition
inconsistency, and handle missing IR/depth modalities with auxiliary
encoders that synthesize those features from RGB.
"""

from .data import (
    Batch,
    Dataset,
    GeneratorConfig,
    MultiModalSample,
    datasets_equal,
    generate_synthetic_dataset,
    read_dataset,
    sample_batch,
    write_dataset,
)
from .encoders import EncoderConfig, FeatureVector, ModalityNet, init_params
from .errors import (
    ConfigError,
    FormatError,
    IntegrityError,
    MetricError,
    NumericsError,
    StateError,
)
from .estimator import SpoofDetector
from .losses import (
    LossBreakdown,
    LossWeights,
    Scenario,
    loss_ce,
    loss_cf,
    loss_ct,
    loss_it,
    loss_md,
    loss_ms,
    total_loss,
)
from .metrics import Confusion, EvalReport, apcer_bpcer_acer, auc, confusion, evaluate_scores
from .modalities import (
    ATTACK_TYPES,
    MODALITIES,
    TRANSITION_PAIRS,
    AttackType,
    Label,
    Modality,
    TransitionPair,
)
from .prototypes import PrototypeStore, batch_live_mean, prototype_transitions
from .scoring import (
    ScoreSet,
    TestProtocol,
    assemble_test_features,
    classify_ood,
    diagnostic_votes,
    score_dataset,
    score_distance,
    score_ood,
    score_transition,
    youden_threshold,
)
from .trainer import Checkpoint, TrainConfig, ablate, evaluate, lambda3_sweep, train
from .transitions import (
    CorrelationReport,
    average_transition_correlation,
    correlation_report,
    cosine_similarity,
    pearson,
    transition,
)

__version__ = "0.1.0"

__all__ = [
    "ATTACK_TYPES",
    "AttackType",
    "Batch",
    "Checkpoint",
    "ConfigError",
    "Confusion",
    "CorrelationReport",
    "Dataset",
    "EncoderConfig",
    "EvalReport",
    "FeatureVector",
    "FormatError",
    "GeneratorConfig",
    "IntegrityError",
    "Label",
    "LossBreakdown",
    "LossWeights",
    "MODALITIES",
    "MetricError",
    "Modality",
    "ModalityNet",
    "MultiModalSample",
    "NumericsError",
    "PrototypeStore",
    "Scenario",
    "ScoreSet",
    "SpoofDetector",
    "StateError",
    "TRANSITION_PAIRS",
    "TestProtocol",
    "TrainConfig",
    "TransitionPair",
    "ablate",
    "apcer_bpcer_acer",
    "assemble_test_features",
    "auc",
    "average_transition_correlation",
    "batch_live_mean",
    "classify_ood",
    "confusion",
    "correlation_report",
    "cosine_similarity",
    "datasets_equal",
    "diagnostic_votes",
    "evaluate",
    "evaluate_scores",
    "generate_synthetic_dataset",
    "init_params",
    "lambda3_sweep",
    "loss_ce",
    "loss_cf",
    "loss_ct",
    "loss_it",
    "loss_md",
    "loss_ms",
    "pearson",
    "prototype_transitions",
    "read_dataset",
    "sample_batch",
    "score_dataset",
    "score_distance",
    "score_ood",
    "score_transition",
    "total_loss",
    "train",
    "transition",
    "write_dataset",
    "youden_threshold",
]
