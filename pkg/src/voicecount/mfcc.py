"""Mel-frequency cepstral coefficient front-end.

A q-sample window becomes a (frames x coefficients) matrix through framing,
Hann tapering, power spectrum, triangular mel filterbank, log compression
and an orthonormal DCT-II. Also holds the min-max feature normalizer and
the binary container format used to persist feature matrices.
"""

from __future__ import annotations

import struct
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from .audio import AudioClip
from .dsp import hann_window, power_spectrum
from .errors import PipelineError

LOG_FLOOR = 1e-10

MATRIX_MAGIC = b"MFCC"
MATRIX_VERSION = 1
_MATRIX_HEADER = struct.Struct("<4sIII")


@dataclass(frozen=True)
class MfccConfig:
    """Front-end parameters. Defaults are a standard 16 kHz speech setup."""

    frame_len: int = 400
    frame_hop: int = 160
    fft_size: int = 512
    n_mel_filters: int = 26
    n_coeffs: int = 13
    fmin_hz: float = 0.0
    fmax_hz: float = 8000.0

    def __post_init__(self):
        if self.frame_len <= 0 or self.frame_hop <= 0:
            raise PipelineError("frame_len and frame_hop must be positive")
        if self.frame_len > self.fft_size:
            raise PipelineError(
                f"frame_len {self.frame_len} exceeds fft_size {self.fft_size}"
            )
        if self.fft_size & (self.fft_size - 1):
            raise PipelineError(f"fft_size must be a power of two, got {self.fft_size}")
        if not 0 < self.n_coeffs <= self.n_mel_filters:
            raise PipelineError(
                f"need 0 < n_coeffs <= n_mel_filters, got "
                f"{self.n_coeffs} vs {self.n_mel_filters}"
            )
        if not 0 <= self.fmin_hz < self.fmax_hz:
            raise PipelineError(
                f"need 0 <= fmin < fmax, got [{self.fmin_hz}, {self.fmax_hz}]"
            )

    def frame_count(self, n_samples: int) -> int:
        if n_samples < self.frame_len:
            return 0
        return (n_samples - self.frame_len) // self.frame_hop + 1

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MfccConfig":
        return cls(**d)


@dataclass(frozen=True)
class FeatureMatrix:
    """2-D feature array: rows are analysis frames, columns coefficients."""

    values: np.ndarray

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise PipelineError(f"feature matrix must be 2-D, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise PipelineError("feature matrix contains non-finite values")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def frame_count(self) -> int:
        return self.values.shape[0]

    @property
    def coeff_count(self) -> int:
        return self.values.shape[1]


def hz_to_mel(f: float | np.ndarray) -> float | np.ndarray:
    """Perceptual frequency warp: 2595 * log10(1 + f/700)."""
    f = np.asarray(f, dtype=np.float64)
    if np.any(f < 0):
        raise PipelineError("frequency must be non-negative")
    out = 2595.0 * np.log10(1.0 + f / 700.0)
    return float(out) if out.ndim == 0 else out


def mel_to_hz(m: float | np.ndarray) -> float | np.ndarray:
    f = 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)
    return float(f) if f.ndim == 0 else f


def mel_filterbank(config: MfccConfig, sample_rate: int) -> np.ndarray:
    """Triangular filters, centers equally spaced in mel between fmin and fmax.

    Returns an (n_mel_filters, fft_size/2 + 1) weight matrix. Rejects setups
    where a filter is too narrow to cover a single FFT bin.
    """
    if config.fmax_hz > sample_rate / 2:
        raise PipelineError(
            f"fmax {config.fmax_hz} Hz exceeds Nyquist {sample_rate / 2} Hz"
        )
    n_bins = config.fft_size // 2 + 1
    bin_hz = np.arange(n_bins) * sample_rate / config.fft_size
    edges_mel = np.linspace(
        hz_to_mel(config.fmin_hz), hz_to_mel(config.fmax_hz), config.n_mel_filters + 2
    )
    edges_hz = mel_to_hz(edges_mel)

    weights = np.zeros((config.n_mel_filters, n_bins))
    for i in range(config.n_mel_filters):
        left, center, right = edges_hz[i], edges_hz[i + 1], edges_hz[i + 2]
        rising = (bin_hz - left) / (center - left)
        falling = (right - bin_hz) / (right - center)
        weights[i] = np.clip(np.minimum(rising, falling), 0.0, None)
        if weights[i].max() <= 0.0:
            raise PipelineError(
                f"mel filter {i} covers no FFT bin: {config.n_mel_filters} filters "
                f"is too many for fft_size {config.fft_size} at {sample_rate} Hz"
            )
    return weights


@lru_cache(maxsize=16)
def _dct2_matrix(n_coeffs: int, n_inputs: int) -> np.ndarray:
    """Orthonormal DCT-II basis, rows k = 0..n_coeffs-1."""
    n = np.arange(n_inputs)
    k = np.arange(n_coeffs)[:, None]
    basis = np.cos(np.pi * k * (2 * n + 1) / (2 * n_inputs))
    basis *= np.sqrt(2.0 / n_inputs)
    basis[0] *= np.sqrt(0.5)
    basis.flags.writeable = False
    return basis


def frame_signal(samples: np.ndarray, frame_len: int, frame_hop: int) -> np.ndarray:
    """Stack overlapping frames as rows; only full frames are kept."""
    n_frames = (samples.size - frame_len) // frame_hop + 1
    idx = np.arange(frame_len)[None, :] + frame_hop * np.arange(n_frames)[:, None]
    return samples[idx]


def extract_mfcc(window: AudioClip, config: MfccConfig) -> FeatureMatrix:
    """MFCC matrix of one analysis window.

    Per frame: Hann taper -> power spectrum -> mel filterbank energies ->
    log(energy + floor) -> DCT-II, keeping the first n_coeffs coefficients.
    """
    if window.n_samples < config.frame_len:
        raise PipelineError(
            f"window of {window.n_samples} samples is shorter than "
            f"frame_len {config.frame_len}"
        )
    fbank = mel_filterbank(config, window.sample_rate)
    frames = frame_signal(window.samples, config.frame_len, config.frame_hop)
    spectra = power_spectrum(frames, config.fft_size, taper=hann_window(config.frame_len))
    energies = spectra @ fbank.T
    log_energies = np.log(energies + LOG_FLOOR)
    coeffs = log_energies @ _dct2_matrix(config.n_coeffs, config.n_mel_filters).T
    return FeatureMatrix(coeffs)


@dataclass(frozen=True)
class NormStats:
    """Per-coefficient min/max from a fitting set, for exact replay."""

    mins: np.ndarray
    maxs: np.ndarray

    def apply(self, features: FeatureMatrix) -> FeatureMatrix:
        span = self.maxs - self.mins
        scaled = np.where(
            span > 0.0,
            (features.values - self.mins) / np.where(span > 0.0, span, 1.0),
            0.5,
        )
        return FeatureMatrix(scaled)

    def to_dict(self) -> dict:
        return {"mins": self.mins.tolist(), "maxs": self.maxs.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(np.asarray(d["mins"], dtype=np.float64), np.asarray(d["maxs"], dtype=np.float64))


def fit_norm_stats(features: list[FeatureMatrix]) -> NormStats:
    """Per-coefficient min/max over every frame of every matrix in the list."""
    if not features:
        raise PipelineError("cannot fit normalization stats on an empty feature list")
    mins = np.min([fm.values.min(axis=0) for fm in features], axis=0)
    maxs = np.max([fm.values.max(axis=0) for fm in features], axis=0)
    return NormStats(mins, maxs)


def feature_normalize(
    features: list[FeatureMatrix],
) -> tuple[list[FeatureMatrix], NormStats]:
    """Min-max scale each coefficient into [0, 1] over the given (training) set.

    Coefficients that are constant across the whole set map to 0.5. The
    returned stats replay the identical transform on held-out data.
    """
    stats = fit_norm_stats(features)
    return [stats.apply(fm) for fm in features], stats


def write_feature_matrix(fobj, matrix: FeatureMatrix) -> None:
    """Append one matrix in the binary container layout (float32 payload)."""
    fobj.write(
        _MATRIX_HEADER.pack(
            MATRIX_MAGIC, MATRIX_VERSION, matrix.frame_count, matrix.coeff_count
        )
    )
    fobj.write(np.ascontiguousarray(matrix.values, dtype="<f4").tobytes())


def read_feature_matrix(fobj) -> FeatureMatrix:
    header = fobj.read(_MATRIX_HEADER.size)
    if len(header) != _MATRIX_HEADER.size:
        raise PipelineError("truncated feature container header")
    magic, version, frame_count, coeff_count = _MATRIX_HEADER.unpack(header)
    if magic != MATRIX_MAGIC:
        raise PipelineError(f"bad feature container magic {magic!r}")
    if version != MATRIX_VERSION:
        raise PipelineError(f"unsupported feature container version {version}")
    payload = fobj.read(4 * frame_count * coeff_count)
    if len(payload) != 4 * frame_count * coeff_count:
        raise PipelineError("truncated feature container payload")
    values = np.frombuffer(payload, dtype="<f4").reshape(frame_count, coeff_count)
    return FeatureMatrix(values.astype(np.float64))
