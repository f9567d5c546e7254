"""Training, evaluation, the ablation grids and the split-robustness study.

Everything is seeded: identical specs produce identical metrics and
checkpoints on one platform. Metrics go to CSV (one row per epoch, plus
grid summaries); figure rendering lives in the report module, not here.
"""

from __future__ import annotations

import csv
import inspect
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .audio import WindowPlan
from .checkpoint import save_checkpoint
from .dataset import (
    MixtureSample,
    Shard,
    SplitSpec,
    admissible_pairs,
    build_feature_shards,
    feature_config_hash,
    read_shard,
)
from .errors import PipelineError
from .mfcc import MfccConfig
from .models import ARCHITECTURES, ModelConfig, aggregate_clip_prediction, build_model, build_network
from .nn import Adam, mse_with_grad
from .seeding import derive_seed

CSV_HEADER = ("experiment", "point", "epoch", "train_mse", "val_mse", "seconds")

# Feature geometry able to host the deepest conv stack in the channel-count
# grid: seven 2x2 pools need both axes >= 128, which a 32000-sample window
# (198 frames) and a 128-coefficient front-end provide.
DEEP_STACK_MFCC = MfccConfig(fft_size=2048, n_mel_filters=130, n_coeffs=128)
DEEP_STACK_WINDOW = WindowPlan(32000, 16000)


@dataclass(frozen=True)
class ExperimentSpec:
    """Complete recipe for one training run."""

    name: str = "desk"
    model: str = "cnn-lstm-fc"
    model_overrides: dict = field(default_factory=dict)
    window: WindowPlan = WindowPlan(16000, 8000)
    mfcc: MfccConfig = MfccConfig()
    split: SplitSpec = SplitSpec(0.7, 0.3, seed=0)
    n_max: int = 4
    mixtures: int = 2000
    snr_db: float = 10.0
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 1e-3
    patience: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.model not in ARCHITECTURES:
            raise PipelineError(f"unknown model {self.model!r}")
        if self.epochs < 0 or self.batch_size < 1:
            raise PipelineError("epochs must be >= 0 and batch_size >= 1")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "model": self.model,
            "model_overrides": dict(self.model_overrides),
            "window": {"window_len": self.window.window_len, "shift": self.window.shift},
            "mfcc": self.mfcc.to_dict(),
            "split": {
                "train_frac": self.split.train_frac,
                "test_frac": self.split.test_frac,
                "seed": self.split.seed,
            },
            "n_max": self.n_max,
            "mixtures": self.mixtures,
            "snr_db": self.snr_db,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "patience": self.patience,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        d = dict(d)
        if "window" in d:
            d["window"] = WindowPlan(**d["window"])
        if "mfcc" in d:
            d["mfcc"] = MfccConfig(**d["mfcc"])
        if "split" in d:
            d["split"] = SplitSpec(**d["split"])
        return cls(**d)


# Reduced hybrid that trains in minutes on a laptop-class CPU.
DESK_OVERRIDES = {
    "conv_blocks": 2,
    "kernel": 5,
    "filters": 64,
    "lstm_layers": 1,
    "lstm_units": 32,
}

# The full-size architecture; pair with DEEP_STACK_MFCC/WINDOW geometry.
PAPER_OVERRIDES = {
    "conv_blocks": 7,
    "kernel": 5,
    "filters": 256,
    "lstm_layers": 3,
    "lstm_units": 128,
}


def desk_spec(**kwargs) -> ExperimentSpec:
    base = dict(
        name="desk",
        model="cnn-lstm-fc",
        model_overrides=dict(DESK_OVERRIDES),
        window=WindowPlan(16000, 8000),
        mfcc=MfccConfig(),
        split=SplitSpec(0.7, 0.3, seed=0),
        n_max=4,
        mixtures=2000,
        epochs=10,
    )
    base.update(kwargs)
    return ExperimentSpec(**base)


def paper_spec(**kwargs) -> ExperimentSpec:
    base = dict(
        name="paper",
        model="cnn-lstm-fc",
        model_overrides=dict(PAPER_OVERRIDES),
        window=DEEP_STACK_WINDOW,
        mfcc=DEEP_STACK_MFCC,
        split=SplitSpec(0.7, 0.3, seed=0),
        n_max=10,
        mixtures=19000,
        epochs=50,
    )
    base.update(kwargs)
    return ExperimentSpec(**base)


@dataclass(frozen=True)
class MetricsRecord:
    experiment: str
    point: str
    epoch: int
    train_mse: float
    val_mse: float
    seconds: float

    def __post_init__(self):
        for v in (self.train_mse, self.val_mse):
            if not np.isfinite(v) or v < 0:
                raise PipelineError(f"MSE values must be finite and >= 0, got {v}")


@dataclass
class TrainResult:
    config: ModelConfig
    params: dict[str, np.ndarray]
    metrics: list[MetricsRecord]
    best_epoch: int
    best_val_mse: float


@dataclass
class EvalResult:
    mse: float
    clip_accuracy: float
    n_windows: int
    n_clips: int


def _builder_overrides(arch: str, overrides: dict) -> dict:
    accepted = set(inspect.signature(ARCHITECTURES[arch]).parameters)
    return {k: v for k, v in overrides.items() if k in accepted}


def model_config_for(spec: ExperimentSpec, geometry: tuple[int, int]) -> ModelConfig:
    overrides = _builder_overrides(spec.model, spec.model_overrides)
    return build_model(spec.model, geometry, **overrides)


def _forward_dataset(net, shard: Shard, batch_size: int) -> np.ndarray:
    preds = np.empty((shard.n_records, 2), dtype=np.float32)
    for start in range(0, shard.n_records, batch_size):
        stop = min(start + batch_size, shard.n_records)
        preds[start:stop] = net.forward(shard.features[start:stop], training=False)
    return preds


def dataset_mse(net, shard: Shard, batch_size: int) -> float:
    preds = _forward_dataset(net, shard, batch_size)
    diff = preds.astype(np.float64) - shard.labels.astype(np.float64)
    return float(np.mean(np.square(diff)))


def _check_shard_matches(spec: ExperimentSpec, shard: Shard, name: str) -> None:
    expected = feature_config_hash(spec.mfcc, spec.window)
    found = shard.meta.get("config_hash")
    if found != expected:
        raise PipelineError(
            f"{name} shard was built with a different front-end config "
            f"(hash {found} vs spec {expected})"
        )


def train(spec: ExperimentSpec, train_shard: Shard, val_shard: Shard) -> TrainResult:
    """Seeded mini-batch training; keeps the best-validation parameters.

    Epoch metrics are full-dataset passes with dropout disabled, so
    re-evaluating the final checkpoint on the training shard reproduces the
    last recorded train MSE.
    """
    _check_shard_matches(spec, train_shard, "train")
    _check_shard_matches(spec, val_shard, "validation")
    geometry = train_shard.geometry
    config = model_config_for(spec, geometry)
    net = build_network(config, seed=derive_seed(spec.seed, "init"))
    best_params = net.snapshot()
    if spec.epochs == 0:
        return TrainResult(config, best_params, [], 0, float("inf"))

    adam = Adam(net.parameters(), lr=spec.learning_rate)
    shuffle_rng = np.random.default_rng(derive_seed(spec.seed, "batches"))
    metrics: list[MetricsRecord] = []
    best_val = float("inf")
    best_epoch = 0
    stale = 0
    for epoch in range(1, spec.epochs + 1):
        t0 = time.perf_counter()
        order = shuffle_rng.permutation(train_shard.n_records)
        for batch_index, start in enumerate(range(0, len(order), spec.batch_size)):
            idx = order[start : start + spec.batch_size]
            pred = net.forward(train_shard.features[idx], training=True)
            loss, grad = mse_with_grad(pred, train_shard.labels[idx])
            if not np.isfinite(loss):
                raise PipelineError(
                    f"non-finite loss at epoch {epoch}, batch {batch_index}"
                )
            net.zero_grad()
            net.backward(grad)
            adam.step()
        train_mse = dataset_mse(net, train_shard, spec.batch_size)
        val_mse = dataset_mse(net, val_shard, spec.batch_size)
        metrics.append(
            MetricsRecord(
                spec.name, spec.model, epoch, train_mse, val_mse, time.perf_counter() - t0
            )
        )
        if val_mse < best_val:
            best_val = val_mse
            best_epoch = epoch
            best_params = net.snapshot()
            stale = 0
        else:
            stale += 1
            if stale >= spec.patience:
                break
    return TrainResult(config, best_params, metrics, best_epoch, best_val)


def evaluate(config: ModelConfig, params: dict[str, np.ndarray], shard: Shard,
             batch_size: int = 32) -> EvalResult:
    """Window-level MSE plus clip-level exact-count accuracy."""
    if tuple(config.input_shape) != shard.geometry:
        raise PipelineError(
            f"model input shape {config.input_shape} does not match shard "
            f"feature geometry {shard.geometry}"
        )
    net = build_network(config, seed=0)
    net.load_param_dict(params)
    preds = _forward_dataset(net, shard, batch_size)
    diff = preds.astype(np.float64) - shard.labels.astype(np.float64)
    mse = float(np.mean(np.square(diff)))

    correct = 0
    clip_ids = np.unique(shard.clip_index)
    for cid in clip_ids:
        rows = shard.clip_index == cid
        n_hat, m_hat = aggregate_clip_prediction(preds[rows], n_max=shard.n_max)
        truth = shard.counts[rows][0]
        correct += int(n_hat == truth[0] and m_hat == truth[1])
    return EvalResult(mse, correct / len(clip_ids), shard.n_records, len(clip_ids))


def evaluate_checkpoint(path: str | Path, shard: Shard, batch_size: int = 32) -> EvalResult:
    from .checkpoint import load_checkpoint

    config, params = load_checkpoint(path)
    return evaluate(config, params, shard, batch_size)


def _samples_digest(samples: list[MixtureSample]) -> str:
    import hashlib

    h = hashlib.sha256()
    h.update(str(len(samples)).encode())
    for s in samples:
        h.update(f"{s.seed}/{s.label.n_males}/{s.label.n_females}".encode())
    return h.hexdigest()[:12]


def stage_features(
    samples: list[MixtureSample],
    spec: ExperimentSpec,
    features_root: str | Path,
) -> dict[str, Shard]:
    """Build (or reuse) the train/val/test shards for a spec's front-end."""
    features_root = Path(features_root)
    key = (
        f"{feature_config_hash(spec.mfcc, spec.window)[:16]}"
        f"_s{spec.split.seed}_{_samples_digest(samples)}"
    )
    shard_dir = features_root / key
    paths = {name: shard_dir / f"{name}.shard" for name in ("train", "val", "test")}
    if not all(p.is_file() and Path(str(p) + ".json").is_file() for p in paths.values()):
        build_feature_shards(samples, spec.window, spec.mfcc, spec.split, shard_dir)
    return {name: read_shard(p) for name, p in paths.items()}


def mean_predictor_mse(train_shard: Shard, eval_shard: Shard) -> float:
    """MSE of the constant predictor fixed at the training-set mean target."""
    mean = train_shard.labels.astype(np.float64).mean(axis=0)
    diff = eval_shard.labels.astype(np.float64) - mean
    return float(np.mean(np.square(diff)))


def analytic_baseline_mse(n_max: int) -> float:
    """Mean-predictor MSE under uniform sampling of admissible (n, m) pairs."""
    pairs = np.asarray(admissible_pairs(n_max), dtype=np.float64) / n_max
    return float(np.mean(np.var(pairs, axis=0)))


ABLATION_GRIDS = ("architecture", "kernel", "channels", "filters", "window")


def grid_points(grid: str, base: ExperimentSpec) -> list[tuple[str, ExperimentSpec]]:
    """Named spec variants for one ablation grid, in report row order."""
    if grid == "architecture":
        return [
            (arch, replace(base, model=arch, name=f"{base.name}-architecture"))
            for arch in ("fc", "cnn-fc", "lstm-fc", "cnn-lstm-fc")
        ]
    if grid == "kernel":
        return [
            (
                f"{k}x{k}",
                replace(
                    base,
                    name=f"{base.name}-kernel",
                    model_overrides={**base.model_overrides, "kernel": k},
                ),
            )
            for k in (3, 5, 7)
        ]
    if grid == "channels":
        # The 7-block point needs >= 128 samples on both feature axes, so the
        # whole grid runs on the deep-stack geometry for a fair comparison.
        return [
            (
                str(blocks),
                replace(
                    base,
                    name=f"{base.name}-channels",
                    window=DEEP_STACK_WINDOW,
                    mfcc=DEEP_STACK_MFCC,
                    model_overrides={**base.model_overrides, "conv_blocks": blocks},
                ),
            )
            for blocks in (3, 5, 7)
        ]
    if grid == "filters":
        return [
            (
                str(f),
                replace(
                    base,
                    name=f"{base.name}-filters",
                    model_overrides={**base.model_overrides, "filters": f},
                ),
            )
            for f in (64, 128, 256)
        ]
    if grid == "window":
        return [
            (
                f"q{q}",
                replace(base, name=f"{base.name}-window", window=WindowPlan(q, q // 2)),
            )
            for q in (32000, 16000, 8000)
        ]
    raise PipelineError(f"unknown ablation grid {grid!r}; choose from {ABLATION_GRIDS}")


def run_point(
    label: str,
    spec: ExperimentSpec,
    samples: list[MixtureSample],
    out_dir: str | Path,
    features_root: str | Path,
) -> tuple[MetricsRecord, TrainResult]:
    """Train one grid point end to end and persist its artifacts."""
    out_dir = Path(out_dir)
    t0 = time.perf_counter()
    shards = stage_features(samples, spec, features_root)
    result = train(spec, shards["train"], shards["val"])
    if not result.metrics:
        raise PipelineError("grid points need epochs >= 1 to produce a summary row")
    seconds = time.perf_counter() - t0
    point_dir = out_dir / "points" / label
    point_dir.mkdir(parents=True, exist_ok=True)
    emit_metrics_csv(point_dir / "metrics.csv", result.metrics)
    save_checkpoint(point_dir / "checkpoint.vcnp", result.config, result.params)
    best = result.metrics[result.best_epoch - 1]
    summary = MetricsRecord(
        spec.name, label, result.best_epoch, best.train_mse, result.best_val_mse, seconds
    )
    return summary, result


def run_ablation(
    grid: str,
    base: ExperimentSpec,
    samples: list[MixtureSample],
    out_dir: str | Path,
) -> list[MetricsRecord]:
    """Train every grid point with the same master seed and data.

    A failing point is reported on stderr and skipped; the rest of the grid
    still runs. Returns the summary rows (one per successful point) and
    writes them to ablation_<grid>.csv under out_dir.
    """
    import sys

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows: list[MetricsRecord] = []
    for label, spec in grid_points(grid, base):
        try:
            summary, _ = run_point(label, spec, samples, out_dir, out_dir / "features")
        except PipelineError as exc:
            print(f"ablation point {label!r} failed: {exc}", file=sys.stderr)
            continue
        rows.append(summary)
    emit_metrics_csv(out_dir / f"ablation_{grid}.csv", rows)
    return rows


def run_split_robustness(
    base: ExperimentSpec,
    split_seeds: list[int],
    samples: list[MixtureSample],
    out_dir: str | Path,
) -> list[MetricsRecord]:
    """Retrain with different split seeds, everything else identical."""
    if len(split_seeds) < 2:
        raise PipelineError(f"robustness study needs >= 2 split seeds, got {len(split_seeds)}")
    out_dir = Path(out_dir)
    rows = []
    for seed in split_seeds:
        spec = replace(
            base,
            name=f"{base.name}-robustness",
            split=replace(base.split, seed=seed),
        )
        summary, _ = run_point(f"split{seed}", spec, samples, out_dir, out_dir / "features")
        rows.append(summary)
    emit_metrics_csv(out_dir / "robustness.csv", rows)
    return rows


def robustness_spread(rows: list[MetricsRecord]) -> tuple[float, float]:
    """(max - min, mean) of the final validation MSE across seeds."""
    vals = np.asarray([r.val_mse for r in rows], dtype=np.float64)
    return float(vals.max() - vals.min()), float(vals.mean())


def emit_metrics_csv(path: str | Path, records: list[MetricsRecord]) -> Path:
    """UTF-8, LF-terminated CSV; floats use repr so parsing round-trips."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in records:
            writer.writerow(
                [r.experiment, r.point, r.epoch, repr(r.train_mse), repr(r.val_mse), repr(r.seconds)]
            )
    return path


def parse_metrics_csv(path: str | Path) -> list[MetricsRecord]:
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise PipelineError(f"unexpected metrics header {header}")
        return [
            MetricsRecord(row[0], row[1], int(row[2]), float(row[3]), float(row[4]), float(row[5]))
            for row in reader
        ]
