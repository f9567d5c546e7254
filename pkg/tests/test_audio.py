import numpy as np
import pytest

from voicecount.audio import (
    AudioClip,
    WindowPlan,
    add_noise_at_snr,
    match_length,
    mix,
    noise_gain,
    pad_or_crop,
    peak_normalize,
    signal_power,
    trim_silence,
    window,
)
from voicecount.errors import PipelineError


def clip(samples, rate=16000):
    return AudioClip(np.asarray(samples, dtype=np.float64), rate)


class TestMix:
    def test_single_clip_identity(self):
        c = clip([0.1, -0.2, 0.3])
        out = mix([c])
        np.testing.assert_array_equal(out.samples, c.samples)

    def test_samplewise_sum(self):
        out = mix([clip([0.5, 0.5]), clip([0.25, -0.25])])
        np.testing.assert_allclose(out.samples, [0.75, 0.25])

    def test_max_length_rule(self):
        three_s = clip(np.ones(48000) * 0.1)
        five_s = clip(np.ones(80000) * 0.1)
        assert mix([three_s, five_s]).n_samples == 80000

    def test_shorter_clip_zero_padded(self):
        out = mix([clip([1.0]), clip([0.0, 0.5])])
        np.testing.assert_allclose(out.samples, [1.0, 0.5])

    def test_rate_mismatch_rejected(self):
        with pytest.raises(PipelineError, match="sample rate"):
            mix([clip([0.1]), clip([0.1], rate=8000)])

    def test_empty_list_rejected(self):
        with pytest.raises(PipelineError):
            mix([])

    def test_commutative_associative(self):
        rng = np.random.default_rng(7)
        clips = [clip(rng.uniform(-1, 1, rng.integers(50, 200))) for _ in range(4)]
        forward = mix(clips)
        backward = mix(clips[::-1])
        nested = mix([mix(clips[:2]), mix(clips[2:])])
        np.testing.assert_allclose(backward.samples, forward.samples, rtol=1e-9)
        np.testing.assert_allclose(nested.samples, forward.samples, rtol=1e-9)


class TestPeakNormalize:
    def test_scales_by_peak(self):
        out = peak_normalize(clip([0.5, -0.25]))
        np.testing.assert_allclose(out.samples, [1.0, -0.5])

    def test_already_normalized(self):
        out = peak_normalize(clip([1.0, 0.0]))
        np.testing.assert_array_equal(out.samples, [1.0, 0.0])

    def test_negative_peak(self):
        out = peak_normalize(clip([-0.1, 0.05]))
        np.testing.assert_allclose(out.samples, [-1.0, 0.5])

    def test_all_zero_rejected(self):
        with pytest.raises(PipelineError, match="all-zero"):
            peak_normalize(clip([0.0, 0.0]))

    def test_idempotent_exactly(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            c = clip(rng.uniform(-0.7, 0.7, 257))
            once = peak_normalize(c)
            twice = peak_normalize(once)
            np.testing.assert_array_equal(twice.samples, once.samples)


class TestAddNoiseAtSnr:
    def test_closed_form_gain_equal_powers(self):
        speech = clip([1.0, -1.0, 1.0, -1.0])  # power 1
        noise = clip([1.0, 1.0, -1.0, -1.0])  # power 1
        assert noise_gain(speech, noise, 10.0) == pytest.approx(10 ** -0.5, rel=1e-12)

    def test_zero_snr_equal_powers(self):
        speech = clip([1.0, -1.0])
        noise = clip([-1.0, 1.0])
        assert noise_gain(speech, noise, 0.0) == pytest.approx(1.0, rel=1e-12)

    def test_quarter_power_speech(self):
        speech = clip([0.5, -0.5])  # power 0.25
        noise = clip([1.0, -1.0])  # power 1
        assert noise_gain(speech, noise, 10.0) == pytest.approx(0.5 * 10 ** -0.5, rel=1e-12)

    def test_mixed_output_is_sum(self):
        speech = clip([0.5, -0.5, 0.25, 0.0])
        noise = clip([0.1, 0.2, -0.1, 0.3])
        g = noise_gain(speech, noise, 7.0)
        out = add_noise_at_snr(speech, noise, 7.0)
        np.testing.assert_allclose(out.samples, speech.samples + g * noise.samples)

    def test_noise_looped_to_speech_length(self):
        noise = clip([0.5, -0.5])
        matched = match_length(noise, 5)
        np.testing.assert_array_equal(matched.samples, [0.5, -0.5, 0.5, -0.5, 0.5])

    def test_snr_recovered_within_1e6_db(self):
        rng = np.random.default_rng(11)
        for snr_db in (-20.0, -5.0, 0.0, 10.0, 40.0):
            speech = clip(rng.uniform(-1, 1, 400))
            noise = clip(rng.uniform(-1, 1, 150))
            matched = match_length(noise, 400)
            g = noise_gain(speech, matched, snr_db)
            measured = 10 * np.log10(
                signal_power(speech.samples) / signal_power(g * matched.samples)
            )
            assert abs(measured - snr_db) < 1e-6

    def test_zero_power_rejected(self):
        speech = clip([0.5, -0.5])
        with pytest.raises(PipelineError, match="zero power"):
            add_noise_at_snr(speech, clip([0.0, 0.0]), 10.0)
        with pytest.raises(PipelineError, match="zero power"):
            add_noise_at_snr(clip([0.0, 0.0]), speech, 10.0)

    def test_infinite_snr_is_identity(self):
        speech = clip([0.5, -0.5])
        out = add_noise_at_snr(speech, clip([1.0, 1.0]), np.inf)
        np.testing.assert_array_equal(out.samples, speech.samples)


class TestTrimSilence:
    def test_trims_quiet_edges(self):
        x = np.concatenate([np.zeros(800), np.full(800, 0.5), np.zeros(800)])
        out = trim_silence(clip(x), threshold=1e-3, min_run=400)
        np.testing.assert_array_equal(out.samples, np.full(800, 0.5))

    def test_loud_everywhere_unchanged(self):
        c = clip(np.full(1000, 0.5))
        out = trim_silence(c, threshold=1e-3, min_run=400)
        np.testing.assert_array_equal(out.samples, c.samples)

    def test_all_zero_rejected(self):
        with pytest.raises(PipelineError, match="all-silent"):
            trim_silence(clip(np.zeros(2000)), threshold=1e-3, min_run=400)

    def test_interior_silence_kept(self):
        x = np.concatenate([np.full(400, 0.5), np.zeros(400), np.full(400, 0.5)])
        out = trim_silence(clip(x), threshold=1e-3, min_run=400)
        np.testing.assert_array_equal(out.samples, x)

    def test_idempotent(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            n = int(rng.integers(900, 4000))
            x = rng.uniform(-1, 1, n) * (rng.random(n) > 0.3)
            x[: rng.integers(0, 600)] = 0.0
            if rng.random() < 0.5:
                x[-int(rng.integers(1, 600)) :] = 0.0
            if np.max(np.abs(x)) == 0:
                continue
            once = trim_silence(clip(x), threshold=1e-3, min_run=200)
            twice = trim_silence(once, threshold=1e-3, min_run=200)
            np.testing.assert_array_equal(twice.samples, once.samples)


class TestWindow:
    def test_five_second_clip_dense_shift(self):
        c = clip(np.ones(80000) * 0.1)
        wins = window(c, WindowPlan(32000, 8000))
        assert len(wins) == 7

    def test_exact_length_single_window(self):
        c = clip(np.ones(32000) * 0.1)
        wins = window(c, WindowPlan(32000, 8000))
        assert len(wins) == 1
        np.testing.assert_array_equal(wins[0].samples, c.samples)

    def test_half_shift_counts(self):
        c = clip(np.ones(80000) * 0.1)
        assert len(window(c, WindowPlan(16000, 8000))) == 9
        assert len(window(c, WindowPlan(32000, 16000))) == 4
        assert len(window(c, WindowPlan(8000, 4000))) == 19

    def test_too_short_rejected(self):
        with pytest.raises(PipelineError, match="shorter"):
            window(clip(np.ones(100)), WindowPlan(200, 100))

    def test_count_formula_property(self):
        rng = np.random.default_rng(13)
        for _ in range(200):
            q = int(rng.integers(1, 500))
            shift = int(rng.integers(1, q + 1))
            n = int(rng.integers(q, 4000))
            plan = WindowPlan(q, shift)
            wins = window(clip(np.ones(n) * 0.1), plan)
            assert len(wins) == (n - q) // shift + 1
            assert all(w.n_samples == q for w in wins)

    def test_windows_are_slices(self):
        rng = np.random.default_rng(17)
        x = rng.uniform(-1, 1, 1000)
        wins = window(clip(x), WindowPlan(300, 250))
        for i, w in enumerate(wins):
            np.testing.assert_array_equal(w.samples, x[i * 250 : i * 250 + 300])

    def test_bad_plan_rejected(self):
        with pytest.raises(PipelineError):
            WindowPlan(100, 0)
        with pytest.raises(PipelineError):
            WindowPlan(100, 101)


class TestPadOrCrop:
    def test_pads_at_end(self):
        out = pad_or_crop(clip([0.5, 0.5]), 4)
        np.testing.assert_array_equal(out.samples, [0.5, 0.5, 0.0, 0.0])

    def test_center_crops(self):
        out = pad_or_crop(clip([1.0, 2.0, 3.0, 4.0, 5.0]), 3)
        np.testing.assert_array_equal(out.samples, [2.0, 3.0, 4.0])

    def test_exact_length_unchanged(self):
        out = pad_or_crop(clip([0.1, 0.2]), 2)
        np.testing.assert_array_equal(out.samples, [0.1, 0.2])


class TestAudioClip:
    def test_rejects_empty(self):
        with pytest.raises(PipelineError):
            AudioClip(np.array([]), 16000)

    def test_rejects_bad_rate(self):
        with pytest.raises(PipelineError):
            AudioClip(np.array([0.1]), 0)

    def test_samples_immutable(self):
        c = clip([0.1, 0.2])
        with pytest.raises(ValueError):
            c.samples[0] = 5.0
