from voicecount.experiments import MetricsRecord
from voicecount.report import plot_summary_bars, plot_training_curves


def test_training_curve_renders(tmp_path):
    records = [
        MetricsRecord("exp", "cnn-lstm-fc", e, 0.1 / e, 0.12 / e, 1.0) for e in range(1, 6)
    ]
    path = plot_training_curves(records, tmp_path / "curve.png")
    assert path.is_file()
    assert path.stat().st_size > 1000


def test_summary_bars_render(tmp_path):
    rows = [
        MetricsRecord("exp", point, 3, 0.05, 0.06, 2.0)
        for point in ("fc", "cnn-fc", "lstm-fc", "cnn-lstm-fc")
    ]
    path = plot_summary_bars(rows, tmp_path / "bars.png", "architecture ablation")
    assert path.is_file()
    assert path.stat().st_size > 1000
