"""Threshold-based auto-labeling with learned post-hoc confidence."""

from .data import (
    DataFormatError,
    Dataset,
    LabeledSet,
    LabelOutOfRangeError,
    MagicNumberError,
    Pool,
    RowCountMismatchError,
    TruncatedPayloadError,
    carve,
    load_dataset,
    random_query,
    random_split,
    synth_gaussian_mixture,
    write_rawf32,
)
from .mlp import (
    MlpClassifier,
    RepPair,
    TrainConfig,
    forward,
    init_mlp,
    load_model,
    loss_squentropy,
    loss_vanilla,
    margin_score,
    margin_scores,
    save_model,
    softmax,
    train_model,
)
from .confidence import (
    ConfidenceModel,
    ConfidenceNet,
    ConfidenceNetConfig,
    ConfidenceNetParams,
    SoftmaxConfidence,
    TemperatureConfidence,
    TemperatureScalingConfig,
    TopLabelBinningConfig,
    TopLabelHistogramConfidence,
    fit_confidence_net,
    fit_temperature,
    fit_top_label_hb,
    sigmoid,
    surrogate_coverage,
    surrogate_error,
    write_score_dump,
)
from .thresholds import (
    ThresholdConfig,
    ThresholdVector,
    default_grid,
    empirical_coverage,
    empirical_error,
    estimate_thresholds,
    std_estimate,
)
from .loop import (
    RoundRecord,
    TbalConfig,
    TbalReport,
    active_query,
    auto_label_select,
    filter_validation,
    run_tbal,
)
from .verify import (
    McMetrics,
    Toy1DWorld,
    ToyMetrics,
    default_toy_sweep,
    final_metrics,
    mc_population_metrics,
    toy_1d_metrics,
)
from .config import ConfigError, ExperimentConfig, parse_config
from .runner import HpoResult, hyperparameter_search, run_experiment

__version__ = "0.1.0"
