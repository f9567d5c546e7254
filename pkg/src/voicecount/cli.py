"""Command-line entry point for the whole pipeline.

Subcommands: synth-corpus, generate, featurize, train, evaluate, ablate,
robustness. JSON config files supply defaults; explicit flags win. Progress
goes to stderr, machine-readable results (CSV/JSON/figures) to --out.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from dataclasses import replace
from pathlib import Path

from . import __version__
from .audio import WindowPlan
from .corpus import CorpusManifest, build_synth_corpus
from .dataset import (
    SplitSpec,
    build_feature_shards,
    generate_dataset,
    load_dataset_dir,
    read_shard,
    save_dataset_dir,
)
from .errors import PipelineError
from .experiments import (
    ABLATION_GRIDS,
    ExperimentSpec,
    desk_spec,
    emit_metrics_csv,
    evaluate,
    paper_spec,
    run_ablation,
    run_split_robustness,
    stage_features,
    train,
)
from .mfcc import MfccConfig
from .checkpoint import load_checkpoint, save_checkpoint


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports bad usage on stderr with exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise PipelineError(f"config file not found: {p}")
    try:
        config = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise PipelineError(f"config file {p} is not valid JSON: {exc}") from exc
    if not isinstance(config, dict):
        raise PipelineError(f"config file {p} must hold a JSON object")
    return config


def _resolve(args: argparse.Namespace, config: dict, key: str, default):
    """Flag if given, else config value, else default."""
    flag = getattr(args, key.replace("-", "_"), None)
    if flag is not None:
        return flag
    return config.get(key, default)


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, command: str, resolved: dict) -> None:
    manifest = {"command": command, "version": __version__, "resolved": resolved}
    (out / "run_manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _spec_from_args(args: argparse.Namespace, config: dict) -> ExperimentSpec:
    base = paper_spec() if getattr(args, "paper_scale", False) else desk_spec()
    if "experiment" in config:
        base = ExperimentSpec.from_dict({**base.to_dict(), **config["experiment"]})
    updates = {}
    for key in ("model", "epochs", "batch_size", "mixtures", "n_max", "seed", "patience"):
        value = getattr(args, key, None)
        if value is not None:
            updates[key] = value
    if getattr(args, "lr", None) is not None:
        updates["learning_rate"] = args.lr
    if getattr(args, "snr", None) is not None:
        updates["snr_db"] = args.snr
    if getattr(args, "window_len", None) is not None or getattr(args, "shift", None) is not None:
        q = args.window_len if args.window_len is not None else base.window.window_len
        shift = args.shift if args.shift is not None else q // 2
        updates["window"] = WindowPlan(q, shift)
    if getattr(args, "split_seed", None) is not None:
        updates["split"] = replace(base.split, seed=args.split_seed)
    return replace(base, **updates) if updates else base


def _load_samples(args: argparse.Namespace, spec: ExperimentSpec):
    if getattr(args, "dataset", None):
        _log(f"loading dataset from {args.dataset}")
        return load_dataset_dir(args.dataset)
    if getattr(args, "corpus", None):
        _log(f"generating {spec.mixtures} mixtures from {args.corpus}")
        manifest = CorpusManifest.load(args.corpus)
        return generate_dataset(
            manifest,
            spec.mixtures,
            snr_db=spec.snr_db,
            seed=spec.seed,
            n_max=spec.n_max,
            jobs=args.jobs or 1,
        )
    raise PipelineError("provide --dataset DIR or --corpus MANIFEST")


def _cmd_synth_corpus(args, config) -> int:
    out = _out_dir(args)
    voices = _resolve(args, config, "voices", 200)
    scenes = _resolve(args, config, "scenes", 10)
    duration = _resolve(args, config, "duration", 5.0)
    seed = _resolve(args, config, "seed", 0)
    _log(f"synthesizing corpus: {voices} voices per gender, {scenes} scenes")
    manifest_path = build_synth_corpus(
        out, voices_per_gender=voices, n_scenes=scenes, duration_s=duration, seed=seed
    )
    _write_manifest(
        out,
        "synth-corpus",
        {"voices": voices, "scenes": scenes, "duration": duration, "seed": seed},
    )
    _log(f"corpus manifest at {manifest_path}")
    return 0


def _cmd_generate(args, config) -> int:
    spec = _spec_from_args(args, config)
    manifest = CorpusManifest.load(args.corpus)
    out = _out_dir(args)
    _log(f"generating {spec.mixtures} mixtures (n_max={spec.n_max}, snr={spec.snr_db} dB)")
    samples = generate_dataset(
        manifest,
        spec.mixtures,
        snr_db=spec.snr_db,
        seed=spec.seed,
        n_max=spec.n_max,
        jobs=args.jobs or 1,
    )
    save_dataset_dir(
        samples,
        out,
        {"seed": spec.seed, "snr_db": spec.snr_db, "count": spec.mixtures, "corpus": str(args.corpus)},
    )
    _write_manifest(out, "generate", {"corpus": str(args.corpus), **spec.to_dict()})
    _log(f"dataset written to {out}")
    return 0


def _cmd_featurize(args, config) -> int:
    spec = _spec_from_args(args, config)
    samples = load_dataset_dir(args.dataset)
    out = _out_dir(args)
    _log(f"featurizing {len(samples)} clips: q={spec.window.window_len}, shift={spec.window.shift}")
    paths = build_feature_shards(samples, spec.window, spec.mfcc, spec.split, out)
    _write_manifest(out, "featurize", {"dataset": str(args.dataset), **spec.to_dict()})
    for name, path in paths.items():
        _log(f"{name} shard: {path}")
    return 0


def _cmd_train(args, config) -> int:
    from .report import plot_training_curves

    spec = _spec_from_args(args, config)
    features = Path(args.features)
    shards = {name: read_shard(features / f"{name}.shard") for name in ("train", "val")}
    out = _out_dir(args)
    _log(f"training {spec.model} for up to {spec.epochs} epochs")
    result = train(spec, shards["train"], shards["val"])
    save_checkpoint(out / "checkpoint.vcnp", result.config, result.params)
    emit_metrics_csv(out / "metrics.csv", result.metrics)
    if result.metrics:
        plot_training_curves(result.metrics, out / "training_curve.png")
    _write_manifest(out, "train", {"features": str(features), **spec.to_dict()})
    _log(f"best validation MSE {result.best_val_mse:.6f} at epoch {result.best_epoch}")
    return 0


def _cmd_evaluate(args, config) -> int:
    shard = read_shard(Path(args.features) / f"{args.partition}.shard")
    model_config, params = load_checkpoint(args.checkpoint)
    out = _out_dir(args)
    result = evaluate(model_config, params, shard)
    payload = {
        "checkpoint": str(args.checkpoint),
        "partition": args.partition,
        "window_mse": result.mse,
        "clip_count_accuracy": result.clip_accuracy,
        "n_windows": result.n_windows,
        "n_clips": result.n_clips,
    }
    (out / "evaluation.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    _write_manifest(out, "evaluate", payload)
    _log(f"window MSE {result.mse:.6f}, clip count accuracy {result.clip_accuracy:.3f}")
    return 0


def _cmd_ablate(args, config) -> int:
    from .report import plot_summary_bars

    spec = _spec_from_args(args, config)
    samples = _load_samples(args, spec)
    out = _out_dir(args)
    _log(f"running {args.grid} ablation grid")
    rows = run_ablation(args.grid, spec, samples, out)
    plot_summary_bars(rows, out / f"ablation_{args.grid}.png", f"{args.grid} ablation")
    _write_manifest(out, "ablate", {"grid": args.grid, **spec.to_dict()})
    for row in rows:
        _log(f"  {row.point}: train {row.train_mse:.6f}, val {row.val_mse:.6f}")
    return 0


def _cmd_robustness(args, config) -> int:
    from .report import plot_summary_bars

    spec = _spec_from_args(args, config)
    samples = _load_samples(args, spec)
    out = _out_dir(args)
    seeds = [spec.split.seed + i for i in range(args.splits)]
    _log(f"split robustness over seeds {seeds}")
    rows = run_split_robustness(spec, seeds, samples, out)
    plot_summary_bars(rows, out / "robustness.png", "split robustness")
    _write_manifest(out, "robustness", {"split_seeds": seeds, **spec.to_dict()})
    for row in rows:
        _log(f"  {row.point}: val {row.val_mse:.6f}")
    return 0


def _add_common(sub: argparse.ArgumentParser, out_required: bool = True) -> None:
    sub.add_argument("--config", help="JSON config file; flags override it")
    sub.add_argument("--seed", type=int, help="master seed (64-bit)")
    sub.add_argument("--out", required=out_required, help="output directory")
    sub.add_argument("--jobs", type=int, default=None, help="max parallel workers")
    scale = sub.add_mutually_exclusive_group()
    scale.add_argument("--desk-scale", action="store_true", help="reduced defaults (default)")
    scale.add_argument("--paper-scale", action="store_true", help="full-size architecture defaults")


def _add_spec_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--model", choices=("fc", "cnn-fc", "lstm-fc", "cnn-lstm-fc"))
    sub.add_argument("--epochs", type=int)
    sub.add_argument("--batch-size", type=int, dest="batch_size")
    sub.add_argument("--lr", type=float)
    sub.add_argument("--mixtures", type=int)
    sub.add_argument("--nmax", type=int, dest="n_max")
    sub.add_argument("--snr", type=float)
    sub.add_argument("--window-len", type=int, dest="window_len", help="window length q, samples")
    sub.add_argument("--shift", type=int, help="window shift, samples")
    sub.add_argument("--split-seed", type=int, dest="split_seed")
    sub.add_argument("--patience", type=int)


def build_parser() -> _Parser:
    parser = _Parser(prog="voicecount", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("synth-corpus", help="write a synthetic speech/noise corpus")
    p.add_argument("--voices", type=int, help="voices per gender (default 200)")
    p.add_argument("--scenes", type=int, help="noise scenes (default 10)")
    p.add_argument("--duration", type=float, help="clip duration seconds (default 5)")
    _add_common(p)
    p.set_defaults(func=_cmd_synth_corpus)

    p = subs.add_parser("generate", help="generate a labeled mixture dataset")
    p.add_argument("--corpus", required=True, help="corpus manifest (or its directory)")
    _add_spec_flags(p)
    _add_common(p)
    p.set_defaults(func=_cmd_generate)

    p = subs.add_parser("featurize", help="window, extract MFCCs and write shards")
    p.add_argument("--dataset", required=True, help="dataset directory from `generate`")
    _add_spec_flags(p)
    _add_common(p)
    p.set_defaults(func=_cmd_featurize)

    p = subs.add_parser("train", help="train a model on feature shards")
    p.add_argument("--features", required=True, help="shard directory from `featurize`")
    _add_spec_flags(p)
    _add_common(p)
    p.set_defaults(func=_cmd_train)

    p = subs.add_parser("evaluate", help="evaluate a checkpoint on a shard")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--features", required=True, help="shard directory")
    p.add_argument("--partition", choices=("train", "val", "test"), default="test")
    _add_common(p)
    p.set_defaults(func=_cmd_evaluate)

    p = subs.add_parser("ablate", help="run one ablation grid")
    p.add_argument("--grid", required=True, choices=ABLATION_GRIDS)
    p.add_argument("--dataset", help="dataset directory from `generate`")
    p.add_argument("--corpus", help="corpus manifest (generates mixtures on the fly)")
    _add_spec_flags(p)
    _add_common(p)
    p.set_defaults(func=_cmd_ablate)

    p = subs.add_parser("robustness", help="retrain across split seeds")
    p.add_argument("--splits", type=int, default=3, help="number of split seeds")
    p.add_argument("--dataset", help="dataset directory from `generate`")
    p.add_argument("--corpus", help="corpus manifest (generates mixtures on the fly)")
    _add_spec_flags(p)
    _add_common(p)
    p.set_defaults(func=_cmd_robustness)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        config = _load_config(args.config)
        return args.func(args, config)
    except _UsageError as exc:
        print(f"voicecount: error: {exc}", file=sys.stderr)
        return 1
    except PipelineError as exc:
        print(f"voicecount: error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # argparse --help/--version
        return int(exc.code or 0)
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
