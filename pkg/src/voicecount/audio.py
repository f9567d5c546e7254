"""Waveform containers and time-domain operations.

Everything here is a pure function over immutable clips: mixing,
peak normalization, SNR-controlled noise injection, edge-silence
trimming, and overlapped windowing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PipelineError

DEFAULT_SAMPLE_RATE = 16000

# Edge-silence trimming defaults: 25 ms blocks, threshold relative to a
# peak-normalized clip.
TRIM_THRESHOLD = 1e-3
TRIM_BLOCK = 400


@dataclass(frozen=True)
class AudioClip:
    """Mono sample sequence plus its sample rate.

    Samples are stored as a read-only float64 array, nominal range [-1, 1].
    """

    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        samples = np.ascontiguousarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise PipelineError(f"clip samples must be 1-D, got shape {samples.shape}")
        if samples.size == 0:
            raise PipelineError("clip has no samples")
        if self.sample_rate <= 0:
            raise PipelineError(f"sample rate must be positive, got {self.sample_rate}")
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)

    @property
    def n_samples(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class WindowPlan:
    """Overlapped windowing parameters: window length and shift, in samples."""

    window_len: int
    shift: int

    def __post_init__(self):
        if not 0 < self.shift <= self.window_len:
            raise PipelineError(
                f"window plan needs 0 < shift <= window_len, got "
                f"shift={self.shift}, window_len={self.window_len}"
            )

    def count_for(self, n_samples: int) -> int:
        """Number of full windows an n_samples clip yields."""
        if n_samples < self.window_len:
            return 0
        return (n_samples - self.window_len) // self.shift + 1


def mix(clips: list[AudioClip]) -> AudioClip:
    """Sample-wise sum of clips; shorter clips are zero-padded at the end."""
    if not clips:
        raise PipelineError("cannot mix an empty clip list")
    rate = clips[0].sample_rate
    for c in clips[1:]:
        if c.sample_rate != rate:
            raise PipelineError(
                f"sample rate mismatch in mix: {rate} Hz vs {c.sample_rate} Hz"
            )
    out_len = max(c.n_samples for c in clips)
    acc = np.zeros(out_len, dtype=np.float64)
    for c in clips:
        acc[: c.n_samples] += c.samples
    return AudioClip(acc, rate)


def peak_normalize(clip: AudioClip) -> AudioClip:
    """Scale so max |sample| is exactly 1.0. Idempotent."""
    peak = np.max(np.abs(clip.samples))
    if peak == 0.0:
        raise PipelineError("cannot peak-normalize an all-zero clip")
    return AudioClip(clip.samples / peak, clip.sample_rate)


def signal_power(samples: np.ndarray) -> float:
    """Mean squared amplitude over the whole array."""
    return float(np.mean(np.square(samples)))


def match_length(noise: AudioClip, n_samples: int) -> AudioClip:
    """Loop (wrap) or truncate noise to exactly n_samples.

    Looping rather than zero-padding keeps the noise power constant over
    the full span, so an SNR computed on the whole clip stays honest.
    """
    reps = -(-n_samples // noise.n_samples)
    samples = np.tile(noise.samples, reps)[:n_samples]
    return AudioClip(samples, noise.sample_rate)


def noise_gain(speech: AudioClip, noise: AudioClip, snr_db: float) -> float:
    """Gain g such that 10*log10(P_speech / (g^2 * P_noise)) == snr_db."""
    p_speech = signal_power(speech.samples)
    p_noise = signal_power(noise.samples)
    if p_speech == 0.0:
        raise PipelineError("speech clip has zero power")
    if p_noise == 0.0:
        raise PipelineError("noise clip has zero power")
    return float(np.sqrt(p_speech / p_noise) * 10.0 ** (-snr_db / 20.0))


def add_noise_at_snr(speech: AudioClip, noise: AudioClip, snr_db: float) -> AudioClip:
    """Return speech + g*noise with g chosen to realize snr_db exactly.

    The noise is looped/truncated to the speech length first. snr_db may be
    +inf, which degenerates to returning the speech unchanged (g == 0).
    """
    if speech.sample_rate != noise.sample_rate:
        raise PipelineError(
            f"sample rate mismatch: speech {speech.sample_rate} Hz, "
            f"noise {noise.sample_rate} Hz"
        )
    matched = match_length(noise, speech.n_samples)
    g = noise_gain(speech, matched, snr_db)
    return AudioClip(speech.samples + g * matched.samples, speech.sample_rate)


def _block_rms(samples: np.ndarray, block: int, from_end: bool) -> np.ndarray:
    """RMS of consecutive non-overlapping full blocks, front- or end-aligned."""
    n_blocks = samples.size // block
    if n_blocks == 0:
        return np.array([])
    if from_end:
        tail = samples[samples.size - n_blocks * block :]
        blocks = tail.reshape(n_blocks, block)[::-1]
    else:
        blocks = samples[: n_blocks * block].reshape(n_blocks, block)
    return np.sqrt(np.mean(np.square(blocks), axis=1))


def trim_silence(
    clip: AudioClip, threshold: float = TRIM_THRESHOLD, min_run: int = TRIM_BLOCK
) -> AudioClip:
    """Drop leading/trailing blocks whose RMS falls below threshold.

    Works on whole min_run-sample blocks so re-applying the trim is a no-op.
    Interior samples are never touched.
    """
    if threshold < 0:
        raise PipelineError(f"threshold must be >= 0, got {threshold}")
    if min_run <= 0:
        raise PipelineError(f"min_run must be positive, got {min_run}")
    x = clip.samples
    if x.size < min_run:
        if np.sqrt(np.mean(np.square(x))) < threshold:
            raise PipelineError("clip is all-silent at this threshold")
        return clip

    front = _block_rms(x, min_run, from_end=False)
    back = _block_rms(x, min_run, from_end=True)
    lead = int(np.argmax(front >= threshold)) if np.any(front >= threshold) else len(front)
    trail = int(np.argmax(back >= threshold)) if np.any(back >= threshold) else len(back)
    cut_front = lead * min_run
    cut_back = trail * min_run
    if cut_front + cut_back >= x.size:
        raise PipelineError("clip is all-silent at this threshold")
    if cut_front == 0 and cut_back == 0:
        return clip
    return AudioClip(x[cut_front : x.size - cut_back], clip.sample_rate)


def window(clip: AudioClip, plan: WindowPlan) -> list[AudioClip]:
    """Slice the clip into overlapping windows of plan.window_len samples.

    Windows start at 0, shift, 2*shift, ... while they fit entirely, so the
    count is (len - window_len) // shift + 1.
    """
    q = plan.window_len
    if clip.n_samples < q:
        raise PipelineError(
            f"clip of {clip.n_samples} samples is shorter than window length {q}"
        )
    starts = range(0, clip.n_samples - q + 1, plan.shift)
    return [AudioClip(clip.samples[s : s + q], clip.sample_rate) for s in starts]


def pad_or_crop(clip: AudioClip, n_samples: int) -> AudioClip:
    """Force an exact length: center-crop if too long, zero-pad the end if short."""
    x = clip.samples
    if x.size > n_samples:
        start = (x.size - n_samples) // 2
        x = x[start : start + n_samples]
    elif x.size < n_samples:
        x = np.concatenate([x, np.zeros(n_samples - x.size)])
    return AudioClip(x, clip.sample_rate)
