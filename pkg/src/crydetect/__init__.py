"""Infant cry detection toolkit.

Spectral features (MFCC, chroma, spectral contrast) plus optional
precomputed deep embeddings, classified with from-scratch gradient boosted
trees (SVM baselines included), with ROC/AUC and Bayesian signed-rank
evaluation utilities and a batch CLI.
"""

__version__ = "0.1.0"

from .audio_io import AudioSegment, DatasetManifest, ManifestEntry, load_manifest, read_wav, resample, write_manifest, write_wav
from .dsp import bandpass, chroma, is_silent, mel_filterbank, mfcc, mfcc_from_mel, spectral_contrast, stft
from .errors import (
    AudioFormatError,
    AudioParseError,
    ConfigError,
    ConvergenceError,
    CrydetectError,
    EmbeddingFormatError,
    EvaluationError,
    ManifestError,
    ModelFormatError,
    ParameterError,
    SchemaError,
    TrainingError,
)
from .eval import ClassReport, PosteriorSummary, RocCurve, bayes_signed_rank, classification_report, per_group_auc, roc_auc
from .features import (
    EmbeddingTable,
    FeatureSchema,
    FeatureVector,
    ScalerParams,
    aggregate,
    assemble,
    fit_scaler,
    load_embeddings,
    transform,
    write_embeddings,
)
from .models import (
    GbmModel,
    LinearSvmModel,
    RbfSvmModel,
    TrainConfig,
    TreeNode,
    gbm_predict,
    gbm_train,
    svm_linear_train,
    svm_rbf_train,
    vote_aggregate,
)
from .pipeline import (
    DEFAULT_CONFIG,
    PipelineModel,
    Prediction,
    TrainResult,
    ablate,
    load_model,
    predict_pipeline,
    resolve_config,
    save_model,
    train_pipeline,
)
