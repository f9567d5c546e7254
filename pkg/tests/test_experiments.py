import dataclasses

import numpy as np
import pytest

from voicecount.audio import WindowPlan
from voicecount.corpus import CorpusManifest, build_synth_corpus
from voicecount.dataset import Shard, SplitSpec, feature_config_hash, generate_dataset
from voicecount.errors import PipelineError
from voicecount.experiments import (
    DEEP_STACK_MFCC,
    DEEP_STACK_WINDOW,
    ExperimentSpec,
    MetricsRecord,
    analytic_baseline_mse,
    dataset_mse,
    desk_spec,
    emit_metrics_csv,
    evaluate,
    grid_points,
    mean_predictor_mse,
    model_config_for,
    parse_metrics_csv,
    run_ablation,
    run_split_robustness,
    stage_features,
    train,
)
from voicecount.mfcc import MfccConfig
from voicecount.models import build_fc_baseline, build_network

TINY_OVERRIDES = {"conv_blocks": 2, "filters": 8, "lstm_layers": 1, "lstm_units": 8}


def tiny_spec(**kwargs):
    base = dict(
        name="tiny",
        model="cnn-lstm-fc",
        model_overrides=dict(TINY_OVERRIDES),
        window=WindowPlan(16000, 8000),
        mfcc=MfccConfig(),
        split=SplitSpec(0.7, 0.3, seed=1),
        n_max=3,
        mixtures=20,
        epochs=2,
        seed=5,
    )
    base.update(kwargs)
    return ExperimentSpec(**base)


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    build_synth_corpus(root, voices_per_gender=4, n_scenes=2, duration_s=5.0, seed=2)
    return CorpusManifest.load(root)


@pytest.fixture(scope="module")
def samples(corpus):
    return generate_dataset(corpus, 20, snr_db=10.0, seed=8, n_max=3)


@pytest.fixture(scope="module")
def shards(samples, tmp_path_factory):
    root = tmp_path_factory.mktemp("features")
    return stage_features(samples, tiny_spec(), root)


class TestTrain:
    def test_zero_epochs_returns_initialization(self, shards):
        spec = tiny_spec(epochs=0)
        result = train(spec, shards["train"], shards["val"])
        assert result.metrics == []
        assert result.best_epoch == 0
        from voicecount.seeding import derive_seed

        net = build_network(result.config, seed=derive_seed(spec.seed, "init"))
        for p in net.parameters():
            np.testing.assert_array_equal(result.params[p.name], p.value)

    def test_metrics_series_and_improvement(self, shards):
        result = train(tiny_spec(epochs=3), shards["train"], shards["val"])
        assert len(result.metrics) == 3
        assert [m.epoch for m in result.metrics] == [1, 2, 3]
        assert all(m.train_mse >= 0 and m.val_mse >= 0 for m in result.metrics)

    def test_deterministic_metrics(self, shards):
        a = train(tiny_spec(epochs=2), shards["train"], shards["val"])
        b = train(tiny_spec(epochs=2), shards["train"], shards["val"])
        for ma, mb in zip(a.metrics, b.metrics):
            assert ma.train_mse == mb.train_mse
            assert ma.val_mse == mb.val_mse
        for name in a.params:
            np.testing.assert_array_equal(a.params[name], b.params[name])

    def test_evaluate_train_shard_reproduces_last_train_mse(self, shards):
        spec = tiny_spec(epochs=2)
        result = train(spec, shards["train"], shards["val"])
        chosen = result.metrics[result.best_epoch - 1]
        ev = evaluate(result.config, result.params, shards["train"], spec.batch_size)
        assert abs(ev.mse - chosen.train_mse) < 1e-6

    def test_config_hash_mismatch_rejected(self, shards):
        spec = tiny_spec(mfcc=MfccConfig(n_coeffs=12))
        with pytest.raises(PipelineError, match="front-end"):
            train(spec, shards["train"], shards["val"])

    def test_non_finite_loss_aborts_with_location(self, shards):
        spec = tiny_spec(model="fc", model_overrides={})
        bad = dataclasses.replace(
            shards["train"],
            features=shards["train"].features.copy(),
        )
        bad.features[0, 0, 0] = np.nan
        with pytest.raises(PipelineError, match="epoch 1"):
            train(spec, bad, shards["val"])


class TestEvaluate:
    @staticmethod
    def _constant_net(shard, constant):
        config = build_fc_baseline(shard.geometry, hidden=(4,))
        net = build_network(config, seed=0)
        for p in net.parameters():
            p.value[...] = 0.0
        final_bias = net.parameters()[-1]
        final_bias.value[...] = np.asarray(constant, dtype=np.float32)
        return config, net.param_dict()

    def test_perfect_oracle_on_uniform_label_shard(self, shards):
        shard = shards["val"]
        target = shard.labels[0]
        uniform = Shard(
            features=shard.features,
            labels=np.tile(target, (shard.n_records, 1)),
            counts=np.tile(shard.counts[0], (shard.n_records, 1)),
            clip_index=shard.clip_index,
            n_max=shard.n_max,
            meta=shard.meta,
        )
        config, params = self._constant_net(uniform, target)
        result = evaluate(config, params, uniform)
        assert result.mse == 0.0
        assert result.clip_accuracy == 1.0

    def test_mean_predictor_equals_label_variance(self, shards):
        shard = shards["val"]
        mean = shard.labels.astype(np.float64).mean(axis=0)
        config, params = self._constant_net(shard, mean)
        result = evaluate(config, params, shard)
        variance = float(np.mean(np.var(shard.labels.astype(np.float64), axis=0)))
        assert result.mse == pytest.approx(variance, rel=1e-5)
        assert result.mse == pytest.approx(mean_predictor_mse(shard, shard), rel=1e-5)

    def test_geometry_mismatch_rejected(self, shards):
        config = build_fc_baseline((10, 10), hidden=(4,))
        net = build_network(config, seed=0)
        with pytest.raises(PipelineError, match="geometry"):
            evaluate(config, net.param_dict(), shards["val"])

    def test_checkpoint_round_trip_evaluates_identically(self, shards, tmp_path):
        from voicecount.checkpoint import save_checkpoint
        from voicecount.experiments import evaluate_checkpoint

        result = train(tiny_spec(epochs=1), shards["train"], shards["val"])
        direct = evaluate(result.config, result.params, shards["val"])
        path = save_checkpoint(tmp_path / "m.vcnp", result.config, result.params)
        loaded = evaluate_checkpoint(path, shards["val"])
        assert loaded.mse == direct.mse
        assert loaded.clip_accuracy == direct.clip_accuracy


class TestBaselines:
    def test_analytic_baseline_n_max_4(self):
        assert analytic_baseline_mse(4) == pytest.approx(75 / 49 / 16, rel=1e-12)

    def test_empirical_tracks_analytic(self, corpus):
        big = generate_dataset(corpus, 300, snr_db=np.inf, seed=77, n_max=4, duration_s=1.5)
        labels = np.array([s.label.normalized for s in big])
        empirical = float(np.mean(np.var(labels, axis=0)))
        assert empirical == pytest.approx(analytic_baseline_mse(4), rel=0.15)


class TestCsv:
    def test_round_trip_exact(self, tmp_path):
        records = [
            MetricsRecord("exp", "point-a", 1, 0.123456789012345, 0.2, 1.75),
            MetricsRecord("exp", "point-b", 2, 1e-9, 0.0007654321, 300.25),
        ]
        path = emit_metrics_csv(tmp_path / "m.csv", records)
        assert parse_metrics_csv(path) == records

    def test_header_and_lf_endings(self, tmp_path):
        path = emit_metrics_csv(tmp_path / "m.csv", [MetricsRecord("e", "p", 1, 0.5, 0.25, 1.0)])
        raw = path.read_bytes()
        assert raw.startswith(b"experiment,point,epoch,train_mse,val_mse,seconds\n")
        assert b"\r" not in raw

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(PipelineError, match="header"):
            parse_metrics_csv(path)


class TestGrids:
    def test_architecture_grid_rows_in_table_order(self, samples, tmp_path):
        base = tiny_spec(epochs=1)
        rows = run_ablation("architecture", base, samples, tmp_path)
        assert [r.point for r in rows] == ["fc", "cnn-fc", "lstm-fc", "cnn-lstm-fc"]
        parsed = parse_metrics_csv(tmp_path / "ablation_architecture.csv")
        assert parsed == rows

    def test_kernel_grid_three_rows(self, samples, tmp_path):
        rows = run_ablation("kernel", tiny_spec(epochs=1), samples, tmp_path)
        assert [r.point for r in rows] == ["3x3", "5x5", "7x7"]

    def test_window_grid_durations(self, samples, tmp_path):
        rows = run_ablation("window", tiny_spec(epochs=1), samples, tmp_path)
        # 2 s, 1 s, 0.5 s windows
        assert [r.point for r in rows] == ["q32000", "q16000", "q8000"]

    def test_filters_grid_points(self):
        labels = [label for label, _ in grid_points("filters", tiny_spec())]
        assert labels == ["64", "128", "256"]

    def test_channels_grid_uses_deep_stack_geometry(self):
        points = grid_points("channels", tiny_spec())
        assert [label for label, _ in points] == ["3", "5", "7"]
        for _, spec in points:
            assert spec.mfcc == DEEP_STACK_MFCC
            assert spec.window == DEEP_STACK_WINDOW

    def test_channels_grid_trains_end_to_end(self, samples, tmp_path):
        rows = run_ablation("channels", tiny_spec(epochs=1), samples, tmp_path)
        assert [r.point for r in rows] == ["3", "5", "7"]

    def test_unknown_grid_rejected(self, samples, tmp_path):
        with pytest.raises(PipelineError, match="unknown ablation grid"):
            run_ablation("optimizer", tiny_spec(), samples, tmp_path)

    def test_failed_point_does_not_abort_grid(self, samples, tmp_path, capsys):
        # nine conv blocks cannot pool a 98x13 input: every kernel point fails,
        # but the grid must finish and report instead of raising
        base = tiny_spec(epochs=1, model_overrides={**TINY_OVERRIDES, "conv_blocks": 9})
        rows = run_ablation("kernel", base, samples, tmp_path)
        assert rows == []
        err = capsys.readouterr().err
        assert err.count("failed") == 3


class TestRobustness:
    def test_rows_per_seed(self, samples, tmp_path):
        rows = run_split_robustness(tiny_spec(epochs=1), [1, 2, 3], samples, tmp_path)
        assert [r.point for r in rows] == ["split1", "split2", "split3"]

    def test_identical_seeds_identical_mse(self, samples, tmp_path):
        rows = run_split_robustness(tiny_spec(epochs=1), [4, 4], samples, tmp_path)
        assert rows[0].val_mse == rows[1].val_mse
        assert rows[0].train_mse == rows[1].train_mse

    def test_needs_two_seeds(self, samples, tmp_path):
        with pytest.raises(PipelineError, match=">= 2"):
            run_split_robustness(tiny_spec(), [1], samples, tmp_path)


class TestStageFeatures:
    def test_cache_reused(self, samples, tmp_path):
        spec = tiny_spec()
        first = stage_features(samples, spec, tmp_path)
        marker = list(tmp_path.rglob("train.shard"))[0]
        stamp = marker.stat().st_mtime_ns
        second = stage_features(samples, spec, tmp_path)
        assert marker.stat().st_mtime_ns == stamp
        assert first["train"].n_records == second["train"].n_records

    def test_desk_spec_defaults(self):
        spec = desk_spec()
        assert spec.mixtures == 2000
        assert spec.n_max == 4
        assert spec.window == WindowPlan(16000, 8000)
        assert spec.model_overrides["conv_blocks"] == 2
        assert spec.model_overrides["filters"] == 64
        assert spec.model_overrides["lstm_layers"] == 1
        assert spec.model_overrides["lstm_units"] == 32
        config = model_config_for(spec, (98, 13))
        assert config.shape_trace()[-1] == (2,)
