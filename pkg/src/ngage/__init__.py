"""Classroom engagement prediction from wrist-worn physiological sensing
and indoor-environment recordings.

The pipeline: load raw recordings, estimate actual class boundaries from
collective movement, screen electrodermal quality, decompose skin
conductance into tonic/phasic components, extract per-session features
(arousal, pulse variability, synchrony with teacher and peers, context),
and evaluate boosted-tree predictions of four engagement dimensions
under grouped nested cross-validation.
"""

from .config import default_config, load_config
from .core import (ClassInfo, EnvTrace, ParticipantDay, RecordingSegment,
                   SensorTrace, SurveyResponse, load_e4_day, load_env_csv,
                   load_schedule_and_surveys, slice_resample, write_e4_day)
from .eda import (ArousalProfile, EdaDecomposition, arousal_profile,
                  cvxeda_decompose, detect_scr_peaks, normalize_eda)
from .errors import (DataIOError, DecompositionError, EmptySliceError,
                     NgageError, ParseError, ValidationError)
from .evaluation import (EvalReport, build_fold_plan, loso_eval,
                         make_group_folds, nested_cv, regime_sweep,
                         score_predictions)
from .features import (Dataset, EngagementScores, SessionRecord, TARGETS,
                       assemble_dataset, context_features, dtw_distance,
                       eda_session_features, engagement_scores, peer_average,
                       pearson_sync)
from .hrv import (HrvFeatures, IbiSeries, detect_beats, hrv_freq_features,
                  hrv_time_features, ibi_from_beats)
from .model import (GbmModel, GbmParams, fit_gbm, fit_linear, load_model,
                    predict_gbm, predict_linear, save_model, top_features)
from .preprocess import acc_magnitude, eda_quality_gate, median_filter
from .segment import class_boundary, igts_topdown, segment_entropy
from .synth import SynthConfig, generate_cohort

__version__ = "0.1.0"

__all__ = [
    "ArousalProfile", "ClassInfo", "DataIOError", "Dataset",
    "DecompositionError", "EdaDecomposition", "EmptySliceError",
    "EngagementScores", "EnvTrace", "EvalReport", "GbmModel", "GbmParams",
    "HrvFeatures", "IbiSeries", "NgageError", "ParseError", "ParticipantDay",
    "RecordingSegment", "SensorTrace", "SessionRecord", "SurveyResponse",
    "SynthConfig", "TARGETS", "ValidationError", "acc_magnitude",
    "arousal_profile", "assemble_dataset", "build_fold_plan",
    "class_boundary", "context_features", "cvxeda_decompose",
    "default_config", "detect_beats", "detect_scr_peaks", "dtw_distance",
    "eda_quality_gate", "eda_session_features", "engagement_scores",
    "fit_gbm", "fit_linear", "generate_cohort", "hrv_freq_features",
    "hrv_time_features", "ibi_from_beats", "igts_topdown", "load_config",
    "load_e4_day", "load_env_csv", "load_model",
    "load_schedule_and_surveys", "loso_eval", "make_group_folds",
    "median_filter", "nested_cv", "normalize_eda", "pearson_sync",
    "peer_average", "predict_gbm", "predict_linear", "regime_sweep",
    "save_model", "score_predictions", "segment_entropy", "slice_resample",
    "top_features", "write_e4_day",
]
