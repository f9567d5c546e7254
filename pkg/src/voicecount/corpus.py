"""Synthetic pitched-voice corpus and the manifest format for real corpora.

The generator produces gender-conditioned pseudo-speech (harmonic stack with
a gender-specific fundamental, formant-like resonances, syllabic amplitude
modulation and random pauses) plus spectrally tilted noise scenes. It exists
so the whole pipeline runs at desk scale with zero external downloads; real
recordings attach through the same JSON manifest.
"""

from __future__ import annotations

import json
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import DEFAULT_SAMPLE_RATE, AudioClip
from .errors import PipelineError
from .seeding import derive_seed
from .wavio import write_wav

F0_RANGES_HZ = {"male": (85.0, 155.0), "female": (165.0, 255.0)}
SYLLABLE_RATE_HZ = (2.0, 8.0)
MANIFEST_NAME = "manifest.json"


def _smooth_gate(rng: np.random.Generator, n: int, sample_rate: int) -> np.ndarray:
    """Random speak/pause gate with 10 ms raised-cosine edges."""
    gate = np.zeros(n)
    pos = 0
    speaking = True
    while pos < n:
        if speaking:
            seg = int(rng.uniform(0.12, 0.45) * sample_rate)
            gate[pos : pos + seg] = 1.0
        else:
            seg = int(rng.uniform(0.06, 0.30) * sample_rate)
        pos += seg
        speaking = not speaking if rng.random() < 0.75 else speaking
    ramp = int(0.010 * sample_rate)
    if ramp > 1:
        kernel = np.hanning(2 * ramp + 1)
        kernel /= kernel.sum()
        gate = np.convolve(gate, kernel, mode="same")
    return gate


def synth_voice(
    gender: str,
    duration_s: float,
    seed: int,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
) -> AudioClip:
    """Deterministic pseudo-speech clip for one synthetic speaker.

    The fundamental is drawn from the gender band, carries light vibrato, and
    excites a 1/k harmonic stack shaped by two random formant resonances. A
    syllabic-rate envelope with random pauses modulates the result.
    """
    if gender not in F0_RANGES_HZ:
        raise PipelineError(f"unknown gender label {gender!r}")
    if duration_s <= 0:
        raise PipelineError(f"duration must be positive, got {duration_s}")
    rng = np.random.default_rng(seed)
    n = round(duration_s * sample_rate)
    t = np.arange(n) / sample_rate

    lo, hi = F0_RANGES_HZ[gender]
    f0 = rng.uniform(lo, hi)
    vibrato = 1.0 + 0.01 * np.sin(2 * np.pi * rng.uniform(4.0, 7.0) * t + rng.uniform(0, 2 * np.pi))
    phase = 2 * np.pi * np.cumsum(f0 * vibrato) / sample_rate

    # Spectral envelope: 1/k^decay roll-off plus two formant-like bumps.
    decay = 1.0 if gender == "male" else 1.25
    f1 = rng.uniform(350.0, 900.0)
    f2 = rng.uniform(1000.0, 2600.0)
    n_harmonics = max(1, min(24, int(4000.0 / f0)))
    voice = np.zeros(n)
    for k in range(1, n_harmonics + 1):
        fk = k * f0
        boost = 1.0 + 1.5 * np.exp(-0.5 * ((fk - f1) / 180.0) ** 2)
        boost += 1.0 * np.exp(-0.5 * ((fk - f2) / 350.0) ** 2)
        amp = boost / k**decay
        voice += amp * np.sin(k * phase + rng.uniform(0, 2 * np.pi))

    rate = rng.uniform(*SYLLABLE_RATE_HZ)
    syllabic = 0.55 + 0.45 * np.sin(2 * np.pi * rate * t + rng.uniform(0, 2 * np.pi))
    voice *= syllabic * _smooth_gate(rng, n, sample_rate)

    peak = np.max(np.abs(voice))
    if peak > 0:
        voice *= 0.9 / peak
    return AudioClip(voice, sample_rate)


def synth_noise_scene(
    duration_s: float, seed: int, sample_rate: int = DEFAULT_SAMPLE_RATE
) -> AudioClip:
    """Filtered noise with a scene-specific spectral tilt and band emphasis."""
    if duration_s <= 0:
        raise PipelineError(f"duration must be positive, got {duration_s}")
    rng = np.random.default_rng(seed)
    n = round(duration_s * sample_rate)
    white = rng.standard_normal(n)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, 1.0 / sample_rate)

    tilt = rng.uniform(0.0, 1.5)
    shape = (1.0 + freqs / 100.0) ** (-tilt)
    center = rng.uniform(150.0, 5000.0)
    width = rng.uniform(200.0, 2000.0)
    shape *= 1.0 + rng.uniform(0.0, 2.0) * np.exp(-0.5 * ((freqs - center) / width) ** 2)
    colored = np.fft.irfft(spectrum * shape, n)

    peak = np.max(np.abs(colored))
    colored *= 0.9 / peak
    return AudioClip(colored, sample_rate)


@dataclass(frozen=True)
class SpeechEntry:
    path: Path
    gender: str
    speaker_id: str


@dataclass(frozen=True)
class NoiseEntry:
    path: Path
    scene: str


@dataclass
class CorpusManifest:
    """Speech and noise file inventory backing mixture generation."""

    speech: list[SpeechEntry] = field(default_factory=list)
    noise: list[NoiseEntry] = field(default_factory=list)

    def speakers(self, gender: str) -> list[str]:
        seen: dict[str, None] = {}
        for e in self.speech:
            if e.gender == gender:
                seen.setdefault(e.speaker_id)
        return list(seen)

    def entries_for_speaker(self, speaker_id: str) -> list[SpeechEntry]:
        return [e for e in self.speech if e.speaker_id == speaker_id]

    def require_mixable(self) -> None:
        if not self.speakers("male") or not self.speakers("female") or not self.noise:
            raise PipelineError(
                "manifest needs at least one male, one female and one noise entry"
            )

    def validate_files(self, expected_rate: int = DEFAULT_SAMPLE_RATE) -> None:
        """Check every referenced file exists and is mono 16-bit PCM at the rate."""
        for path in [e.path for e in self.speech] + [e.path for e in self.noise]:
            if not path.is_file():
                raise PipelineError(f"manifest references missing file: {path}")
            try:
                with wave.open(str(path), "rb") as w:
                    ok = (
                        w.getnchannels() == 1
                        and w.getsampwidth() == 2
                        and w.getframerate() == expected_rate
                    )
            except wave.Error as exc:
                raise PipelineError(f"{path}: not a valid WAV file ({exc})") from exc
            if not ok:
                raise PipelineError(
                    f"{path}: manifest files must be mono 16-bit PCM at {expected_rate} Hz"
                )

    @classmethod
    def load(cls, path: str | Path) -> "CorpusManifest":
        path = Path(path)
        if path.is_dir():
            path = path / MANIFEST_NAME
        if not path.is_file():
            raise PipelineError(f"no corpus manifest at {path}")
        try:
            entries = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise PipelineError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(entries, list):
            raise PipelineError(f"{path}: manifest must be a JSON array")
        base = path.parent
        manifest = cls()
        for i, entry in enumerate(entries):
            kind = entry.get("kind")
            file_path = base / entry.get("path", "")
            if kind == "speech":
                if entry.get("gender") not in F0_RANGES_HZ:
                    raise PipelineError(f"{path}: entry {i} has bad gender {entry.get('gender')!r}")
                manifest.speech.append(
                    SpeechEntry(file_path, entry["gender"], str(entry.get("speaker_id", i)))
                )
            elif kind == "noise":
                manifest.noise.append(NoiseEntry(file_path, str(entry.get("scene", f"scene{i}"))))
            else:
                raise PipelineError(f"{path}: entry {i} has unknown kind {kind!r}")
        return manifest


def build_synth_corpus(
    out_dir: str | Path,
    voices_per_gender: int = 200,
    n_scenes: int = 10,
    duration_s: float = 5.0,
    seed: int = 0,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
) -> Path:
    """Write a synthetic corpus (WAVs + manifest.json); returns the manifest path.

    Output bytes are a pure function of the arguments, so two runs with the
    same seed produce identical directories.
    """
    if voices_per_gender < 1 or n_scenes < 1:
        raise PipelineError("corpus needs at least one voice per gender and one scene")
    out_dir = Path(out_dir)
    (out_dir / "speech").mkdir(parents=True, exist_ok=True)
    (out_dir / "noise").mkdir(parents=True, exist_ok=True)

    entries = []
    for gender in ("male", "female"):
        tag = gender[0]
        for i in range(voices_per_gender):
            clip = synth_voice(gender, duration_s, derive_seed(seed, "voice", gender, i), sample_rate)
            rel = f"speech/{gender}_{i:04d}.wav"
            write_wav(out_dir / rel, clip)
            entries.append(
                {"path": rel, "kind": "speech", "gender": gender, "speaker_id": f"{tag}{i:04d}"}
            )
    for i in range(n_scenes):
        clip = synth_noise_scene(duration_s, derive_seed(seed, "scene", i), sample_rate)
        rel = f"noise/scene_{i:03d}.wav"
        write_wav(out_dir / rel, clip)
        entries.append({"path": rel, "kind": "noise", "scene": f"scene{i:03d}"})

    manifest_path = out_dir / MANIFEST_NAME
    manifest_path.write_text(json.dumps(entries, indent=2, sort_keys=True) + "\n")
    return manifest_path
