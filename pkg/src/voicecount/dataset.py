"""Labeled mixture datasets: sampling speaker combinations, composing noisy
mixtures, train/validation/test splitting, and feature shard files.

All randomness flows from one master seed; every mixture owns a derived seed
so generation order (and worker parallelism) cannot change the output.
"""

from __future__ import annotations

import hashlib
import json
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import (
    AudioClip,
    WindowPlan,
    add_noise_at_snr,
    mix,
    pad_or_crop,
    peak_normalize,
    trim_silence,
    window,
)
from .corpus import CorpusManifest
from .errors import PipelineError
from .seeding import derive_seed
from .mfcc import (
    FeatureMatrix,
    MfccConfig,
    NormStats,
    extract_mfcc,
    fit_norm_stats,
    read_feature_matrix,
    write_feature_matrix,
)
from .wavio import read_wav

DEFAULT_N_MAX = 10
DEFAULT_DURATION_S = 5.0
DEFAULT_SNR_DB = 10.0

SHARD_MAGIC = b"VCSH"
SHARD_VERSION = 1
_SHARD_HEADER = struct.Struct("<4sIQ")
_RECORD_HEADER = struct.Struct("<IHHH")


@dataclass(frozen=True)
class MixtureLabel:
    """Ground truth for one mixture: male and female speaker counts."""

    n_males: int
    n_females: int
    n_max: int = DEFAULT_N_MAX

    def __post_init__(self):
        if self.n_males < 0 or self.n_females < 0:
            raise PipelineError("speaker counts must be non-negative")
        total = self.n_males + self.n_females
        if not 1 <= total <= self.n_max:
            raise PipelineError(
                f"total speaker count {total} outside [1, {self.n_max}]"
            )

    @property
    def normalized(self) -> tuple[float, float]:
        return (self.n_males / self.n_max, self.n_females / self.n_max)


@dataclass(frozen=True)
class MixtureSample:
    clip: AudioClip
    label: MixtureLabel
    noise_tag: str
    seed: int


@dataclass(frozen=True)
class SplitSpec:
    """Train/held-out fractions and the shuffle seed."""

    train_frac: float = 0.7
    test_frac: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if abs(self.train_frac + self.test_frac - 1.0) > 1e-9:
            raise PipelineError("train_frac + test_frac must equal 1")
        if not (0.0 < self.train_frac < 1.0 and 0.0 < self.test_frac < 1.0):
            raise PipelineError("split fractions must lie in (0, 1)")


@dataclass(frozen=True)
class Split:
    train: list
    validation: list
    test: list


def admissible_pairs(n_max: int) -> list[tuple[int, int]]:
    """All (n_males, n_females) with 1 <= total <= n_max, in a fixed order."""
    return [(n, s - n) for s in range(1, n_max + 1) for n in range(s + 1)]


def generate_mixture(
    manifest: CorpusManifest,
    n_males: int,
    n_females: int,
    snr_db: float,
    seed: int,
    n_max: int = DEFAULT_N_MAX,
    duration_s: float = DEFAULT_DURATION_S,
    sample_rate: int = 16000,
) -> MixtureSample:
    """Compose one labeled mixture deterministically from its seed.

    Picks distinct speakers per gender, trims edge silence from each source,
    sums them, injects one noise scene at snr_db (snr_db=inf skips noise),
    peak-normalizes, and pads/crops to the target duration.
    """
    label = MixtureLabel(n_males, n_females, n_max)
    rng = np.random.default_rng(seed)

    chosen: list[AudioClip] = []
    for gender, count in (("male", n_males), ("female", n_females)):
        if count == 0:
            continue
        speakers = manifest.speakers(gender)
        if len(speakers) < count:
            raise PipelineError(
                f"manifest has {len(speakers)} {gender} speakers, need {count} distinct"
            )
        for idx in rng.choice(len(speakers), size=count, replace=False):
            entries = manifest.entries_for_speaker(speakers[idx])
            entry = entries[rng.integers(len(entries))]
            clip = read_wav(entry.path, expected_rate=sample_rate)
            # Trim threshold scales with the source's own peak so quiet
            # recordings are not swallowed whole.
            peak = float(np.max(np.abs(clip.samples)))
            chosen.append(trim_silence(clip, threshold=1e-3 * peak))

    mixed = mix(chosen)

    noise_tag = "none"
    if np.isfinite(snr_db):
        if not manifest.noise:
            raise PipelineError("manifest has no noise entries")
        noise_entry = manifest.noise[rng.integers(len(manifest.noise))]
        noise = read_wav(noise_entry.path, expected_rate=mixed.sample_rate)
        mixed = add_noise_at_snr(mixed, noise, snr_db)
        noise_tag = noise_entry.scene

    normalized = peak_normalize(mixed)
    final = pad_or_crop(normalized, round(duration_s * normalized.sample_rate))
    return MixtureSample(final, label, noise_tag, seed)


def _generate_one(args) -> MixtureSample:
    manifest, n, m, snr_db, seed, n_max, duration_s = args
    return generate_mixture(manifest, n, m, snr_db, seed, n_max, duration_s)


def generate_dataset(
    manifest: CorpusManifest,
    count: int,
    snr_db: float = DEFAULT_SNR_DB,
    seed: int = 0,
    n_max: int = DEFAULT_N_MAX,
    duration_s: float = DEFAULT_DURATION_S,
    jobs: int = 1,
) -> list[MixtureSample]:
    """Generate count mixtures with (n, m) uniform over admissible pairs."""
    if count < 1:
        raise PipelineError(f"dataset size must be >= 1, got {count}")
    manifest.require_mixable()
    pairs = admissible_pairs(n_max)
    rng = np.random.default_rng(derive_seed(seed, "labels"))
    pair_idx = rng.integers(len(pairs), size=count)
    tasks = [
        (manifest, *pairs[pair_idx[i]], snr_db, derive_seed(seed, "mixture", i), n_max, duration_s)
        for i in range(count)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_generate_one, tasks, chunksize=16))
    return [_generate_one(t) for t in tasks]


def split(samples: list, spec: SplitSpec) -> Split:
    """Seeded shuffle, then partition into train / validation / test.

    The held-out (1 - train_frac) portion is halved into validation and test,
    validation taking the floor half.
    """
    if not samples:
        raise PipelineError("cannot split an empty sample list")
    order = np.random.default_rng(spec.seed).permutation(len(samples))
    n_train = int(round(spec.train_frac * len(samples)))
    n_held = len(samples) - n_train
    n_val = n_held // 2
    if n_train == 0 or n_val == 0 or n_held - n_val == 0:
        raise PipelineError(
            f"split of {len(samples)} samples at {spec.train_frac:.2f} leaves an empty partition"
        )
    shuffled = [samples[i] for i in order]
    return Split(
        train=shuffled[:n_train],
        validation=shuffled[n_train : n_train + n_val],
        test=shuffled[n_train + n_val :],
    )


@dataclass(frozen=True)
class FeatureRecord:
    """One analysis window's features, tagged with its parent clip's label."""

    clip_index: int
    label: MixtureLabel
    features: FeatureMatrix


def featurize_samples(
    samples: list[MixtureSample], plan: WindowPlan, config: MfccConfig
) -> list[FeatureRecord]:
    """Window every clip and extract MFCCs; each window inherits its clip label."""
    records = []
    for clip_index, sample in enumerate(samples):
        for win in window(sample.clip, plan):
            records.append(
                FeatureRecord(clip_index, sample.label, extract_mfcc(win, config))
            )
    return records


def feature_config_hash(config: MfccConfig, plan: WindowPlan) -> str:
    """Digest tying shards to the exact front-end configuration."""
    blob = json.dumps(
        {"mfcc": config.to_dict(), "window": {"window_len": plan.window_len, "shift": plan.shift}},
        sort_keys=True,
    )
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class Shard:
    """In-memory view of a shard: stacked features plus aligned label arrays."""

    features: np.ndarray  # [n_records, frames, coeffs] float32
    labels: np.ndarray  # [n_records, 2] float32, normalized targets
    counts: np.ndarray  # [n_records, 2] int, raw (n_males, n_females)
    clip_index: np.ndarray  # [n_records] int
    n_max: int
    meta: dict

    @property
    def n_records(self) -> int:
        return self.features.shape[0]

    @property
    def geometry(self) -> tuple[int, int]:
        return self.features.shape[1], self.features.shape[2]


def write_shard(
    path: str | Path,
    records: list[FeatureRecord],
    config: MfccConfig,
    plan: WindowPlan,
    norm_stats: NormStats,
    extra_meta: dict | None = None,
) -> Path:
    """Persist normalized records plus a JSON sidecar for exact replay."""
    if not records:
        raise PipelineError("refusing to write an empty shard")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n_max = records[0].label.n_max
    with open(path, "wb") as f:
        f.write(_SHARD_HEADER.pack(SHARD_MAGIC, SHARD_VERSION, len(records)))
        for rec in records:
            if rec.label.n_max != n_max:
                raise PipelineError("records in one shard must share n_max")
            f.write(
                _RECORD_HEADER.pack(
                    rec.clip_index, rec.label.n_males, rec.label.n_females, n_max
                )
            )
            write_feature_matrix(f, norm_stats.apply(rec.features))
    sidecar = {
        "mfcc_config": config.to_dict(),
        "window_plan": {"window_len": plan.window_len, "shift": plan.shift},
        "norm_stats": norm_stats.to_dict(),
        "config_hash": feature_config_hash(config, plan),
        "n_max": n_max,
        "record_count": len(records),
        "feature_geometry": [records[0].features.frame_count, records[0].features.coeff_count],
    }
    sidecar.update(extra_meta or {})
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return path


def read_shard(path: str | Path) -> Shard:
    path = Path(path)
    sidecar_path = Path(str(path) + ".json")
    if not path.is_file() or not sidecar_path.is_file():
        raise PipelineError(f"missing shard or sidecar at {path}")
    meta = json.loads(sidecar_path.read_text())
    features, labels, counts, clip_idx = [], [], [], []
    with open(path, "rb") as f:
        header = f.read(_SHARD_HEADER.size)
        magic, version, n_records = _SHARD_HEADER.unpack(header)
        if magic != SHARD_MAGIC or version != SHARD_VERSION:
            raise PipelineError(f"{path}: bad shard magic/version")
        for _ in range(n_records):
            rec_header = f.read(_RECORD_HEADER.size)
            clip_index, n_males, n_females, n_max = _RECORD_HEADER.unpack(rec_header)
            matrix = read_feature_matrix(f)
            features.append(matrix.values.astype(np.float32))
            labels.append((n_males / n_max, n_females / n_max))
            counts.append((n_males, n_females))
            clip_idx.append(clip_index)
    geometries = {f.shape for f in features}
    if len(geometries) != 1:
        raise PipelineError(f"{path}: inconsistent feature geometry {geometries}")
    return Shard(
        features=np.stack(features).astype(np.float32),
        labels=np.asarray(labels, dtype=np.float32),
        counts=np.asarray(counts, dtype=np.int64),
        clip_index=np.asarray(clip_idx, dtype=np.int64),
        n_max=int(meta["n_max"]),
        meta=meta,
    )


def save_dataset_dir(samples: list[MixtureSample], out_dir: str | Path, meta: dict) -> Path:
    """Persist mixtures as WAV clips plus a dataset.json label index."""
    from .wavio import write_wav

    out_dir = Path(out_dir)
    clips = []
    for i, sample in enumerate(samples):
        rel = f"clips/mix_{i:05d}.wav"
        write_wav(out_dir / rel, sample.clip)
        clips.append(
            {
                "path": rel,
                "n_males": sample.label.n_males,
                "n_females": sample.label.n_females,
                "noise_tag": sample.noise_tag,
                "seed": sample.seed,
            }
        )
    index = dict(meta)
    index["n_max"] = samples[0].label.n_max
    index["clips"] = clips
    path = out_dir / "dataset.json"
    path.write_text(json.dumps(index, indent=2, sort_keys=True) + "\n")
    return path


def load_dataset_dir(path: str | Path) -> list[MixtureSample]:
    """Load a dataset directory written by save_dataset_dir."""
    path = Path(path)
    index_path = path / "dataset.json" if path.is_dir() else path
    if not index_path.is_file():
        raise PipelineError(f"no dataset index at {index_path}")
    index = json.loads(index_path.read_text())
    n_max = int(index["n_max"])
    samples = []
    for entry in index["clips"]:
        clip = read_wav(index_path.parent / entry["path"])
        samples.append(
            MixtureSample(
                clip,
                MixtureLabel(entry["n_males"], entry["n_females"], n_max),
                entry["noise_tag"],
                entry["seed"],
            )
        )
    return samples


def partition_records(
    records: list[FeatureRecord], n_samples: int, split_spec: SplitSpec
) -> dict[str, list[FeatureRecord]]:
    """Assign whole clips to train/val/test; records keep dataset order."""
    assignment = split(list(range(n_samples)), split_spec)
    membership = {"train": set(assignment.train), "val": set(assignment.validation), "test": set(assignment.test)}
    return {
        name: [r for r in records if r.clip_index in ids]
        for name, ids in membership.items()
    }


def build_feature_shards(
    samples: list[MixtureSample],
    plan: WindowPlan,
    config: MfccConfig,
    split_spec: SplitSpec,
    out_dir: str | Path,
    extra_meta: dict | None = None,
) -> dict[str, Path]:
    """Featurize once, split by clip, fit normalization on train only, write shards."""
    out_dir = Path(out_dir)
    records = featurize_samples(samples, plan, config)
    parts = partition_records(records, len(samples), split_spec)
    stats = fit_norm_stats([r.features for r in parts["train"]])
    paths = {}
    for name in ("train", "val", "test"):
        if not parts[name]:
            raise PipelineError(f"{name} partition produced no feature records")
        meta = {
            "partition": name,
            "split": {
                "train_frac": split_spec.train_frac,
                "test_frac": split_spec.test_frac,
                "seed": split_spec.seed,
            },
        }
        meta.update(extra_meta or {})
        paths[name] = write_shard(out_dir / f"{name}.shard", parts[name], config, plan, stats, meta)
    return paths
