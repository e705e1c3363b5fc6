"""Robust cross-modal matching under noisy correspondence.

A small numpy library for studying instance-level correspondence noise:
synthetic bimodal pair generation with controlled mismatch rates, a robust
complementary/active loss family with analytic gradients, momentum-based
soft-label correction over restarted training pieces, exhaustive numerical
verification of the underlying noise-tolerance theory, and a deterministic
trainer with retrieval metrics.
"""

__version__ = "0.1.0"

from .correction import (
    CorrespondenceState,
    advance_epoch,
    begin_piece,
    corrected_labels,
    init_state,
    record_prediction,
    record_predictions,
)
from .data import (
    DatasetFormatError,
    GenConfig,
    PairedDataset,
    generate_bimodal,
    inject_noise,
    load_dataset,
    save_dataset,
)
from .losses import (
    GradcheckReport,
    LossConfig,
    LossEvaluation,
    active_complementary_loss,
    active_loss,
    batch_active,
    batch_complementary,
    batch_loss,
    batch_triplet,
    complementary_loss,
    complementary_term,
    finite_difference_grad,
    gradcheck,
    gradcheck_encoder,
    soft_margin_triplet,
    soft_margins,
    triplet_hard_negative,
)
from .matching import (
    EncoderParams,
    SimilarityContext,
    build_context,
    context_from_embeddings,
    encode,
    encode_backward,
    init_encoder_params,
    matching_probs,
    similarity_matrix,
)
from .theory import (
    ExtremesReport,
    RiskReport,
    bound_constants,
    bound_gap_curve,
    brute_force_minimizers,
    per_query_risks,
    simplex_extremes_check,
    simplex_grid,
    tan_sum_extremes,
)
from .training import (
    EvalResult,
    EpochRecord,
    Snapshot,
    TrainConfig,
    TrainResult,
    TrainingDivergedError,
    correction_quality,
    evaluate,
    export_history,
    load_history,
    load_snapshot,
    save_snapshot,
    train,
)
