"""Per-class epistemic uncertainty: decomposition, diagnostics, evaluation.

The library ingests Monte-Carlo sample tensors (N inputs x S stochastic
passes x K class probabilities) produced by any probabilistic classifier
and decomposes each input's epistemic uncertainty into per-class
contributions, diagnoses where that decomposition is reliable, and
evaluates it on selective prediction, OoD detection, and aleatoric /
epistemic disentanglement.
"""

from .core import (
    ClassPartition,
    DimensionError,
    EpucError,
    LabelSet,
    MetricError,
    MomentSummary,
    POLICY_NAMES,
    SampleTensor,
    SimplexViolationError,
    UncertaintyReport,
    ValidationError,
    make_label_set,
    validate_tensor,
)
from .disentangle import (
    NoiseSweepPoint,
    UndefinedRatioError,
    absolute_ratio,
    baseline_inflation,
    relative_ratio,
    sweep_point,
)
from .metrics import (
    PolicyScore,
    c_sum_top_k,
    c_sum_weighted,
    c_third_order,
    c_vector,
    cbec,
    entropy,
    mutual_information_exact,
    ova_binary_mi,
    policy_scores,
    report,
    report_all,
    skewness_rho,
)
from .moments import compute_all_moments, compute_moments
from .ood import auroc, mean_ratio, per_class_ood
from .selective import (
    BootstrapSummary,
    EpistemicConfusionMatrix,
    ProfileMatrix,
    ReliabilityStats,
    RiskCurve,
    SignatureCell,
    ausc,
    bootstrap,
    deferral_order,
    epistemic_confusion,
    epistemic_profiles,
    error_signatures,
    reliability_summary,
    risk_curve,
)
from .synth import (
    DiracAt,
    Dirichlet,
    FiniteMixture,
    VertexMixture,
    analytic_eu,
    location_shift,
    mps_transform,
    replicate_mixture,
    sample,
    two_point_mixture_for_mi,
)

__version__ = "0.1.0"
