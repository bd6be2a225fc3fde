"""Multi-frequency time-of-flight depth decoding with KDE-based phase unwrapping."""

__version__ = "0.1.0"

from tofunwrap.core import (  # noqa: E402
    KINECT_V2_FREQUENCIES_HZ,
    FrequencyConfig,
    PhaseFrame,
    RangeError,
    VoltageFrame,
    extract_phase,
    meters_to_pseudo,
    phase_frame_from_voltages,
    pseudo_to_meters,
    true_unwrapping,
    wrap_phase,
)
from tofunwrap.evaluation import EvalReport, score_frame, sweep_thresholds  # noqa: E402
from tofunwrap.kde import DepthDecoder, DepthFrame, HypothesisField, KdeParams, decode_frame  # noqa: E402
from tofunwrap.noise import (  # noqa: E402
    BilateralZFilter,
    NoiseModelKind,
    NoiseModelParams,
    PhaseNoiseModel,
    fit_noise_model,
    predict_sigma,
)
from tofunwrap.simulator import Scene, SceneKind, SimParams, make_scene, simulate_phase_frame, simulate_voltages  # noqa: E402
from tofunwrap.unwrap import Hypothesis, enumerate_hypotheses, unwrap_crt  # noqa: E402

__all__ = [
    "KINECT_V2_FREQUENCIES_HZ", "FrequencyConfig", "PhaseFrame", "RangeError", "VoltageFrame", "extract_phase",
    "meters_to_pseudo", "phase_frame_from_voltages", "pseudo_to_meters", "true_unwrapping", "wrap_phase",
    "EvalReport", "score_frame", "sweep_thresholds", "DepthDecoder", "DepthFrame", "HypothesisField", "KdeParams",
    "decode_frame", "BilateralZFilter", "NoiseModelKind", "NoiseModelParams", "PhaseNoiseModel",
    "fit_noise_model", "predict_sigma", "Scene", "SceneKind", "SimParams", "make_scene", "simulate_phase_frame",
    "simulate_voltages", "Hypothesis", "enumerate_hypotheses", "unwrap_crt",
]
