"""Driving-style recognition for car-following prediction.

Offline: features, PCA and K-means over car-following pairs, then one IDM
parameter set per style cluster. Online: pick a prototype from a short
observation window and predict the follower trajectory with it.
"""
from .calibration import CalibrationResult, IDMCalibrator, calibrate, label_styles, mean_rmse, sensitivity
from .data import (CarFollowingPair, DatasetSplit, LoaderConfig, TrajectorySample, extract_pairs,
                   load_pairs, load_trajectories, save_pairs, split_dataset)
from .exceptions import ConfigError, DataError, DriveStyleError, NumericalError, StyleTieError
from .features import FeatureExtractor, FeatureVector, Standardizer, extract_features
from .idm import (LITERATURE_PARAMS, IdmParams, PredictionResult, acceleration, idm_acceleration, log_likelihood,
                  rmse_5s, simulate)
from .model import DrivingStyleModel
from .recognition import (ObservationWindow, RecognitionOutcome, StyleLibrary, accumulate, predict_trajectory,
                          recognize_m1, recognize_m2)
from .style_learning import PCA, KMeans, elbow_k, elbow_scan

__version__ = "0.1.0"

__all__ = [
    "CalibrationResult", "IDMCalibrator", "calibrate", "label_styles", "mean_rmse", "sensitivity",
    "CarFollowingPair", "DatasetSplit", "LoaderConfig", "TrajectorySample", "extract_pairs", "load_pairs",
    "load_trajectories", "save_pairs", "split_dataset",
    "ConfigError", "DataError", "DriveStyleError", "NumericalError", "StyleTieError",
    "FeatureExtractor", "FeatureVector", "Standardizer", "extract_features",
    "LITERATURE_PARAMS", "IdmParams", "PredictionResult", "acceleration", "idm_acceleration", "log_likelihood",
    "rmse_5s", "simulate",
    "DrivingStyleModel",
    "ObservationWindow", "RecognitionOutcome", "StyleLibrary", "accumulate", "predict_trajectory",
    "recognize_m1", "recognize_m2",
    "PCA", "KMeans", "elbow_k", "elbow_scan",
]
