"""voicecount: estimating concurrent male/female speaker counts in noisy audio.

Pipeline: synthetic (or manifest-supplied) corpus -> SNR-controlled mixtures
-> overlapped windows -> MFCC features -> CNN/BLSTM/FC regression with two
outputs (male count, female count), plus an ablation harness.
"""

__version__ = "0.1.0"

from .audio import (
    AudioClip,
    WindowPlan,
    add_noise_at_snr,
    mix,
    peak_normalize,
    trim_silence,
    window,
)
from .errors import PipelineError
from .mfcc import FeatureMatrix, MfccConfig, extract_mfcc, feature_normalize
from .models import (
    ModelConfig,
    aggregate_clip_prediction,
    build_cnn_fc,
    build_cnn_lstm_fc,
    build_fc_baseline,
    build_lstm_fc,
    build_network,
)

__all__ = [
    "__version__",
    "AudioClip",
    "WindowPlan",
    "add_noise_at_snr",
    "mix",
    "peak_normalize",
    "trim_silence",
    "window",
    "PipelineError",
    "FeatureMatrix",
    "MfccConfig",
    "extract_mfcc",
    "feature_normalize",
    "ModelConfig",
    "aggregate_clip_prediction",
    "build_cnn_fc",
    "build_cnn_lstm_fc",
    "build_fc_baseline",
    "build_lstm_fc",
    "build_network",
]
