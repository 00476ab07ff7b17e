"""Ensemble score classification over posterior samplers.

The heavy lifting lives in the compiled extension; this package re-exports
its public surface.
"""

from esckit._core import (
    NumericalError,
    ParseError,
    TrainingError,
    ValidationError,
    World,
    __version__,
    auroc,
    aurc,
    bandpass_zerophase,
    calibrate,
    class_posterior_x,
    class_posterior_y,
    confidence,
    confusion,
    ddim_ensemble,
    decide,
    detrend,
    esc_score,
    exact_ensemble,
    frechet_distance,
    hoeffding_radius,
    mmse_estimate,
    mutual_information,
    resample,
    sample_joint,
    select_representatives,
    ssc_mean_score,
    ssc_random_score,
    synth_quasiperiodic,
    znormalize,
)

__all__ = [
    "NumericalError",
    "ParseError",
    "TrainingError",
    "ValidationError",
    "World",
    "__version__",
    "auroc",
    "aurc",
    "bandpass_zerophase",
    "calibrate",
    "class_posterior_x",
    "class_posterior_y",
    "confidence",
    "confusion",
    "ddim_ensemble",
    "decide",
    "detrend",
    "esc_score",
    "exact_ensemble",
    "frechet_distance",
    "hoeffding_radius",
    "mmse_estimate",
    "mutual_information",
    "resample",
    "sample_joint",
    "select_representatives",
    "ssc_mean_score",
    "ssc_random_score",
    "synth_quasiperiodic",
    "znormalize",
]
