import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import naive_dft
from tajweed import audio, features
from tajweed.errors import DegenerateBank, TooFewVectors, TooShort, WrongRate

CFG = features.FeatureConfig()
BANK = features.build_filterbank(CFG)


class TestFraming:
    def test_four_seconds_gives_398_frames(self):
        frames = features.frame_signal(np.zeros(32000), CFG)
        assert frames.shape == (398, 200)

    def test_single_frame_boundary(self):
        assert features.frame_signal(np.zeros(200), CFG).shape == (1, 200)

    def test_too_short(self):
        with pytest.raises(TooShort):
            features.frame_signal(np.zeros(199), CFG)

    def test_tail_discarded(self):
        # 279 samples: one full frame, 79-sample tail dropped
        frames = features.frame_signal(np.arange(279.0), CFG)
        assert frames.shape == (1, 200)
        assert frames[0, -1] == 199.0


class TestHamming:
    def test_endpoints(self):
        w = features.hamming_window(200)
        assert w[0] == pytest.approx(0.08, abs=1e-15)
        assert w[-1] == pytest.approx(0.08, abs=1e-15)

    def test_odd_length_peak_is_one(self):
        w = features.hamming_window(201)
        assert w[100] == 1.0

    @given(n=st.integers(min_value=2, max_value=2048))
    @settings(max_examples=50, deadline=None)
    def test_symmetry_exact(self, n):
        w = features.hamming_window(n)
        assert (w == w[::-1]).all()

    def test_rejects_length_one(self):
        with pytest.raises(ValueError):
            features.hamming_window(1)


class TestPowerSpectrum:
    def test_zero_frame(self):
        assert (features.power_spectrum(np.zeros(200), 256) == 0.0).all()

    def test_cosine_peak_at_bin_8_vs_dft_oracle(self):
        t = np.arange(256)
        frame = np.cos(2 * np.pi * 8 * t / 256)
        p = features.power_spectrum(frame, 256)
        assert np.argmax(p) == 8
        oracle = np.abs(naive_dft(frame)) ** 2 / 256
        assert np.abs(p - oracle[:129]).max() < 1e-9

    def test_parseval_energy_identity(self):
        rng = np.random.default_rng(0)
        frame = rng.uniform(-1, 1, 256)
        p = features.power_spectrum(frame, 256)
        weights = np.full(129, 2.0)
        weights[0] = weights[-1] = 1.0
        assert abs((weights * p).sum() - (frame ** 2).sum()) < 1e-9

    def test_fft_matches_naive_dft_on_random_frames(self):
        rng = np.random.default_rng(42)
        frames = rng.uniform(-1, 1, (100, 256))
        ours = features.fft_radix2(frames)
        oracle = np.stack([naive_dft(f) for f in frames])
        assert np.abs(ours - oracle).max() < 1e-9

    def test_rejects_overlong_frame(self):
        with pytest.raises(ValueError):
            features.power_spectrum(np.zeros(300), 256)

    def test_rejects_non_power_of_two(self):
        with pytest.raises(ValueError):
            features.fft_radix2(np.zeros(300))


class TestFilterBank:
    def test_shape(self):
        assert BANK.weights.shape == (70, 129)
        assert BANK.center_freqs_hz.shape == (70,)

    def test_mel_formula_anchor(self):
        assert features.hz_to_mel(700.0) == pytest.approx(2595 * math.log10(2), abs=1e-9)
        assert features.hz_to_mel(700.0) == pytest.approx(781.17, abs=0.01)

    def test_boundaries_equally_spaced_in_mel(self):
        mels = features.hz_to_mel(BANK.center_freqs_hz)
        gaps = np.diff(mels)
        assert np.allclose(gaps, gaps[0])

    def test_rows_nonnegative_unimodal_peak_one(self):
        for row in BANK.weights:
            assert (row >= 0).all()
            assert row.max() == 1.0
            peak = np.argmax(row)
            assert (np.diff(row[: peak + 1]) >= 0).all()
            assert (np.diff(row[peak:]) <= 0).all()

    def test_centers_increasing_within_range(self):
        c = BANK.center_freqs_hz
        assert (np.diff(c) > 0).all()
        assert c[0] > CFG.f_min_hz
        assert c[-1] < CFG.f_max_hz

    def test_full_coverage_between_edges(self):
        total = BANK.weights.sum(axis=0)
        assert (total[1:128] > 0).all()

    def test_degenerate_bank_detected(self):
        cfg = features.FeatureConfig(num_filters=400)
        with pytest.raises(DegenerateBank):
            features.build_filterbank(cfg)


class TestExtractFeatures:
    def test_silence_hits_log_floor(self):
        clip = audio.AudioClip(np.zeros(32000), 8000)
        v = features.extract_features(clip, CFG, BANK).values
        assert np.allclose(v[:70], np.log(CFG.log_floor))
        assert (v[70:] == 0.0).all()

    def test_pooled_length_140(self):
        clip = audio.AudioClip(np.full(32000, 0.1), 8000)
        assert features.extract_features(clip, CFG, BANK).values.shape == (140,)

    def test_flatten_length(self):
        cfg = features.FeatureConfig(aggregation="flatten")
        clip = audio.AudioClip(np.full(32000, 0.1), 8000)
        assert features.extract_features(clip, cfg).values.shape == (398 * 70,)

    def test_tone_and_noise_distinguishable(self):
        t = np.arange(32000) / 8000.0
        tone = audio.AudioClip(0.5 * np.sin(2 * np.pi * 1000 * t), 8000)
        noise = audio.AudioClip(
            np.clip(0.3 * np.random.default_rng(3).standard_normal(32000), -1, 1), 8000
        )
        a = features.extract_features(tone, CFG, BANK).values
        b = features.extract_features(noise, CFG, BANK).values
        cos = a @ b / (np.linalg.norm(a) * np.linalg.norm(b))
        assert cos < 0.99

    def test_wrong_rate_rejected(self):
        clip = audio.AudioClip(np.zeros(64000), 16000)
        with pytest.raises(WrongRate):
            features.extract_features(clip, CFG)

    def test_deterministic_bytes(self):
        rng = np.random.default_rng(9)
        clip = audio.AudioClip(rng.uniform(-1, 1, 32000), 8000)
        a = features.extract_features(clip, CFG, BANK).values
        b = features.extract_features(clip, CFG, BANK).values
        assert a.tobytes() == b.tobytes()

    def test_fingerprint_tracks_config(self):
        clip = audio.AudioClip(np.zeros(32000), 8000)
        fp = features.extract_features(clip, CFG, BANK).config_fingerprint
        assert fp == CFG.fingerprint()
        assert fp != features.FeatureConfig(aggregation="flatten").fingerprint()

    def test_translation_changes_flatten_not_means(self):
        # a 1 s tone burst delayed by 1 s: flatten vectors differ, the
        # per-filter means stay put (the frame multiset barely changes)
        t = np.arange(8000) / 8000.0
        burst = 0.5 * np.sin(2 * np.pi * 800 * t)

        def clip_at(start_s):
            x = np.zeros(32000)
            n0 = int(start_s * 8000)
            x[n0:n0 + 8000] = burst
            return audio.AudioClip(x, 8000)

        flat_cfg = features.FeatureConfig(aggregation="flatten")
        fa = features.extract_features(clip_at(0.5), flat_cfg, BANK).values
        fb = features.extract_features(clip_at(1.5), flat_cfg, BANK).values
        assert not np.array_equal(fa, fb)

        ma = features.extract_features(clip_at(0.5), CFG, BANK).values[:70]
        mb = features.extract_features(clip_at(1.5), CFG, BANK).values[:70]
        assert (np.abs(ma - mb) <= 0.05 * np.abs(ma)).all()


class TestScaler:
    def test_two_point_case(self):
        sc = features.fit_scaler(np.array([[0.0], [2.0]]))
        assert sc.mean[0] == 1.0 and sc.std[0] == 1.0
        assert features.apply_scaler(np.array([0.0]), sc)[0] == -1.0
        assert features.apply_scaler(np.array([2.0]), sc)[0] == 1.0

    def test_constant_dimension_floored(self):
        sc = features.fit_scaler(np.array([[5.0, 1.0], [5.0, 3.0]]))
        z = features.apply_scaler(np.array([5.0, 2.0]), sc)
        assert z[0] == 0.0

    def test_standardizes_its_own_training_set(self):
        M = np.random.default_rng(5).standard_normal((50, 140))
        sc = features.fit_scaler(M)
        Z = sc.apply(M)
        assert np.abs(Z.mean(axis=0)).max() < 1e-9
        live = sc.std > 1e-8
        assert np.abs(Z.std(axis=0)[live] - 1.0).max() < 1e-6

    def test_too_few_vectors(self):
        with pytest.raises(TooFewVectors):
            features.fit_scaler(np.array([[1.0, 2.0]]))

    def test_accepts_feature_vectors(self):
        clip = audio.AudioClip(np.full(32000, 0.1), 8000)
        vecs = [features.extract_features(clip, CFG, BANK) for _ in range(2)]
        sc = features.fit_scaler(vecs)
        assert sc.mean.shape == (140,)


class TestFeatureConfig:
    def test_defaults_match_contract(self):
        assert CFG.frame_len == 200
        assert CFG.hop_len == 80
        assert CFG.n_bins == 129

    def test_rejects_non_power_of_two_fft(self):
        with pytest.raises(ValueError):
            features.FeatureConfig(fft_size=300)

    def test_rejects_fft_smaller_than_frame(self):
        with pytest.raises(ValueError):
            features.FeatureConfig(fft_size=128)

    def test_rejects_f_max_above_nyquist(self):
        with pytest.raises(ValueError):
            features.FeatureConfig(f_max_hz=4001.0)
