"""Mono 16-bit PCM WAV reading and writing.

Integer samples map to [-1, 1) by division by 32768. Only single-channel
16-bit files are accepted; there is no resampling, so callers that require
a specific rate pass expected_rate and get a rejection on mismatch.
"""

from __future__ import annotations

import wave
from pathlib import Path

import numpy as np

from .audio import AudioClip
from .errors import PipelineError

_SCALE = 32768.0


def read_wav(path: str | Path, expected_rate: int | None = None) -> AudioClip:
    """Read a mono 16-bit PCM WAV file into an AudioClip."""
    path = Path(path)
    if not path.is_file():
        raise PipelineError(f"no such audio file: {path}")
    try:
        with wave.open(str(path), "rb") as w:
            if w.getnchannels() != 1:
                raise PipelineError(f"{path}: expected mono, got {w.getnchannels()} channels")
            if w.getsampwidth() != 2:
                raise PipelineError(f"{path}: expected 16-bit samples, got {8 * w.getsampwidth()}-bit")
            if w.getcomptype() != "NONE":
                raise PipelineError(f"{path}: compressed WAV is not supported")
            rate = w.getframerate()
            raw = w.readframes(w.getnframes())
    except wave.Error as exc:
        raise PipelineError(f"{path}: not a valid WAV file ({exc})") from exc
    if expected_rate is not None and rate != expected_rate:
        raise PipelineError(
            f"{path}: sample rate {rate} Hz, pipeline requires {expected_rate} Hz"
        )
    if not raw:
        raise PipelineError(f"{path}: WAV file contains no samples")
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / _SCALE
    return AudioClip(samples, rate)


def write_wav(path: str | Path, clip: AudioClip) -> None:
    """Write an AudioClip as mono 16-bit PCM, clipping to the int16 range."""
    quantized = np.clip(np.rint(clip.samples * _SCALE), -32768, 32767).astype("<i2")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(clip.sample_rate)
        w.writeframes(quantized.tobytes())
