"""Steganographic embedding costs from the curvature of a steganalyzer's output."""

__version__ = "0.1.0"

from .costs import (
    EPS,
    WET,
    CostMap,
    HillCost,
    SensitivityCost,
    additive_distortion,
    average_filter,
    build_cost_map,
    clamp_negative,
    hill_cost,
    scale_linear,
    second_derivative_map,
)
from .embedding import (
    ChangeProbabilities,
    EmbeddingSimulator,
    InfeasiblePayloadError,
    PayloadSpec,
    apply_pattern,
    capped_probs,
    expected_distortion,
    gibbs_probs,
    pattern_entropy,
    sample_pattern,
    simulate_embedding,
    solve_lambda,
)
from .evaluation import (
    ExperimentReport,
    SweepConfig,
    detection_error,
    extract_features,
    run_sweep,
    train_detector,
)
from .image_io import read_pgm, synth_cover, write_pgm
from .oracles import (
    FilterLogitOracle,
    LinearResidualOracle,
    ModelOracle,
    QuadraticTestOracle,
    train_linear_oracle,
)
