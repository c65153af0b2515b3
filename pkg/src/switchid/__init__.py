"""Identifiability certificates and multi-model estimation for uncertain LTI plants
under switching feedback."""

from .discern import (
    DiscernCertificate,
    ObservabilityError,
    PairReport,
    StabilityReport,
    SynthesisError,
    certify_bank,
    check_lemma2_conditions,
    pair_coprime,
    separability_conditions,
    stability_check,
    sylvester_resultant,
    synthesize_bank,
)
from .estimator import (
    EstimateResult,
    ModelGrid,
    MultiModelEstimator,
    envelope_pair_set,
    error_bound,
    grid_sample,
    mm_estimate,
)
from .gramian import (
    EnvelopeTable,
    GramianPair,
    NonDiscerningError,
    data_distance,
    envelope_tables,
    gamma_bound,
    joint_gramian,
    natural_distance,
    observability_gramian,
)
from .linalg import char_poly, check_observability, markov_parameters, uncontrollable_charpoly
from .plant import (
    ClosedLoopMatrices,
    ControllerBank,
    ControllerMode,
    Plant,
    UncertaintyBox,
    assemble_closed_loop,
)
from .poly import ParamMatrixFamily, PolyScalar, eval_family
from .sim import (
    DisturbanceTrack,
    SwitchingSignal,
    Trajectory,
    make_round_robin_signal,
    simulate_autonomous,
    simulate_forced,
    transition_matrix,
)

__all__ = [
    "ClosedLoopMatrices",
    "ControllerBank",
    "ControllerMode",
    "DiscernCertificate",
    "DisturbanceTrack",
    "EnvelopeTable",
    "EstimateResult",
    "GramianPair",
    "ModelGrid",
    "MultiModelEstimator",
    "NonDiscerningError",
    "ObservabilityError",
    "PairReport",
    "ParamMatrixFamily",
    "Plant",
    "PolyScalar",
    "StabilityReport",
    "SwitchingSignal",
    "SynthesisError",
    "Trajectory",
    "UncertaintyBox",
    "assemble_closed_loop",
    "certify_bank",
    "char_poly",
    "check_lemma2_conditions",
    "check_observability",
    "data_distance",
    "envelope_pair_set",
    "envelope_tables",
    "error_bound",
    "eval_family",
    "gamma_bound",
    "grid_sample",
    "joint_gramian",
    "make_round_robin_signal",
    "markov_parameters",
    "mm_estimate",
    "natural_distance",
    "observability_gramian",
    "pair_coprime",
    "separability_conditions",
    "simulate_autonomous",
    "simulate_forced",
    "stability_check",
    "sylvester_resultant",
    "synthesize_bank",
    "transition_matrix",
    "uncontrollable_charpoly",
]

__version__ = "0.1.0"
