"""Linear-time softmax attention by spectral shifting over segment-means landmarks,
with exact and Nyström baselines and tools to check the approximation."""
from .analysis import ApproxReport, SpectrumReport, approx_error, error_bound, scaling_study, spectrum_report
from .exact import AttentionProblem, exact_attention, exact_scores, scores_from_logits
from .landmarks import LandmarkPair, make_landmarks, pad_to_multiple, segment_means
from .matcore import (
    DivergenceError,
    NumericalError,
    PinvResult,
    SvdFactors,
    norm,
    numerical_rank,
    pinv_iterative,
    pinv_svd,
    row_softmax,
    spectrum,
    svd_factors,
)
from .nystrom import AllocationAudit, nystrom_attention, nystrom_attention_materialized, nystrom_raw
from .spectral_shift import (
    ColumnSelection,
    FlatTailSpec,
    SSFactors,
    flat_tail_spsd,
    ss_factors_full,
    ss_factors_modified,
    ss_objective,
    ss_reconstruct,
    flat_tail_check,
)
from .ss_attention import SSAttentionConfig, ss_attention, ss_attention_materialized, ss_entry_svd_form

__version__ = "0.1.0"
