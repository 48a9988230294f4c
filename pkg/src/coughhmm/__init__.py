"""Cough detection with a five-state hidden Markov model over binned band energies."""

__version__ = "0.1.0"

from .annotations import (
    LabeledSeries,
    LabelFormatError,
    LabelInterval,
    align_labels,
    labels_to_intervals,
    load_labels,
    save_labels,
    validate_labels,
)
from .audio import AudioClip, AudioError, duration_seconds, load_wav, write_wav
from .evaluation import (
    auc,
    binary_metrics,
    class_metrics,
    confusion,
    roc_binary,
    roc_multiclass_ovo,
    two_fold_cv,
    youden_best,
)
from .features import (
    FeatureSeries,
    FeatureVector,
    export_features_csv,
    export_spectrogram_csv,
    extract_features,
    import_features_csv,
)
from .hmm import (
    DecodeResult,
    EmissionModel,
    Grouping,
    HmmModel,
    Mode,
    decode,
    demo_model,
    emission_loglik,
    estimate_transitions,
    fit_emissions,
    forward_filter,
    group_scores,
    load_model,
    sample,
    save_model,
    train,
    viterbi,
)
from .states import COUGH_TOPOLOGY, STATE_NAMES, StateLabel, Topology
