import numpy as np
import pytest

from prosotts.evaluation import (
    MetricError,
    MetricReport,
    PitchContour,
    TimbreEmbedder,
    contour_from_factors,
    contour_from_synthetic_mel,
    dtw_distance,
    linear_probe_accuracy,
    pitch_contour,
    robustness_check,
    speaker_similarity,
    stress_corpus,
)
from prosotts.mel import MelSpectrogram


def contour(values):
    values = np.asarray(values, dtype=np.float64)
    return PitchContour(values, values > 0)


class TestPitchContour:
    def test_unvoiced_forced_to_zero(self):
        c = PitchContour(np.array([100.0, 200.0]), np.array([True, False]))
        assert c.values[1] == 0.0
        np.testing.assert_array_equal(c.voiced_values(), [100.0])

    def test_shape_mismatch(self):
        with pytest.raises(MetricError):
            PitchContour(np.zeros(3), np.zeros(2, dtype=bool))

    def test_negative_rejected(self):
        with pytest.raises(MetricError):
            PitchContour(np.array([-1.0]), np.array([True]))


class TestPitchEstimation:
    def test_pure_tone_220(self):
        sr = 16_000
        t = np.arange(sr) / sr
        wav = 0.5 * np.sin(2 * np.pi * 220.0 * t)
        c = pitch_contour(wav, sr)
        voiced = c.voiced_values()
        assert voiced.size > 0.9 * len(c.values)
        assert abs(np.median(voiced) - 220.0) < 2.0

    def test_silence_is_unvoiced(self):
        c = pitch_contour(np.zeros(16_000))
        assert not c.voicing.any()

    def test_white_noise_mostly_unvoiced(self):
        wav = np.random.default_rng(0).normal(scale=0.1, size=16_000)
        c = pitch_contour(wav)
        assert c.voicing.mean() < 0.2

    def test_empty_rejected(self):
        with pytest.raises(MetricError):
            pitch_contour(np.array([]))


class TestDTW:
    def test_identical_contours_zero(self):
        c = contour([100, 150, 200, 180])
        assert dtw_distance(c, c) == 0.0

    def test_time_warped_identical_values_zero(self):
        # [1,2,3] vs [1,2,2,3]: the repeat aligns at zero cost
        assert dtw_distance(contour([1, 2, 3]), contour([1, 2, 2, 3])) == 0.0

    def test_constant_offset(self):
        # [0,0] vs [1,1] -> diagonal path, cost 1 per step
        a = PitchContour(np.zeros(2), np.ones(2, dtype=bool))
        b = PitchContour(np.ones(2), np.ones(2, dtype=bool))
        assert dtw_distance(a, b) == 2.0

    def test_symmetry(self):
        a, b = contour([100, 120, 90]), contour([95, 130])
        assert dtw_distance(a, b) == dtw_distance(b, a)

    def test_unvoiced_frames_ignored(self):
        a = PitchContour(np.array([100.0, 0.0, 200.0]), np.array([True, False, True]))
        b = contour([100, 200])
        assert dtw_distance(a, b) == 0.0

    def test_all_unvoiced_rejected(self):
        empty = PitchContour(np.zeros(3), np.zeros(3, dtype=bool))
        with pytest.raises(MetricError, match="voiced"):
            dtw_distance(empty, contour([100]))


class TestSyntheticContours:
    def test_pass_through_matches_factors(self, synth_manifest):
        utt = synth_manifest.records[0]
        c = contour_from_factors(utt)
        np.testing.assert_array_equal(c.values, np.asarray(utt.factors["pitch"], dtype=np.float64))
        assert c.voicing.all()

    def test_missing_factors_rejected(self, synth_manifest):
        utt = synth_manifest.records[0]
        bare = type(utt)(
            utt.utterance_id, utt.speaker_id, utt.phonemes, utt.durations, utt.mel
        )
        with pytest.raises(MetricError, match="pitch"):
            contour_from_factors(bare)

    def test_mel_recovery_close_to_ground_truth(self, synth_manifest):
        # recovering pitch from the synthetic mel itself should land within half
        # a state step of the stored trajectory
        for utt in synth_manifest.records[:4]:
            rec = contour_from_synthetic_mel(utt.mel)
            truth = contour_from_factors(utt)
            err = np.abs(rec.values - truth.values)
            assert np.median(err) < 15.0


class TestSpeakerSimilarity:
    def embedder(self, vec):
        return lambda mel: np.asarray(vec, dtype=np.float64)

    def mel(self, seed=0):
        return MelSpectrogram(np.random.default_rng(seed).normal(size=(10, 80)))

    def test_self_similarity_is_one(self):
        emb = self.embedder([1.0, 2.0, 3.0])
        assert speaker_similarity(self.mel(), self.mel(), emb) == pytest.approx(1.0)

    def test_orthogonal_is_zero(self):
        calls = iter([[1.0, 0.0], [0.0, 1.0]])
        emb = lambda mel: np.asarray(next(calls))
        assert speaker_similarity(self.mel(0), self.mel(1), emb) == pytest.approx(0.0)

    def test_zero_norm_rejected(self):
        with pytest.raises(MetricError, match="zero-norm"):
            speaker_similarity(self.mel(), self.mel(), self.embedder([0.0, 0.0]))

    def test_timbre_embedder_same_speaker_higher(self, toy_model, synth_manifest):
        emb = TimbreEmbedder(toy_model)
        groups = list(synth_manifest.by_speaker().values())
        same = speaker_similarity(groups[0][0].mel, groups[0][1].mel, emb)
        assert -1.0 <= same <= 1.0


class TestRobustness:
    def test_clean_emission(self):
        assert robustness_check([5, 2, 7], [0, 1, 2]) == (0, 0)

    def test_repeat_detected(self):
        assert robustness_check([5, 2, 7], [0, 0, 1, 2]) == (1, 0)

    def test_skip_detected(self):
        assert robustness_check([5, 2, 7], [0, 2]) == (0, 1)

    def test_both(self):
        assert robustness_check([1, 2, 3, 4], [0, 1, 1, 1, 3]) == (1, 1)

    def test_stress_corpus_shape(self):
        corpus = stress_corpus(50, vocab_size=12)
        assert len(corpus) == 50
        for sent in corpus:
            assert 30 <= len(sent) <= 60
            assert all(0 <= p < 12 for p in sent)

    def test_stress_corpus_repetitive(self):
        corpus = stress_corpus(20)
        # motif-based construction keeps the distinct-symbol count low
        assert np.mean([len(set(s)) for s in corpus]) < 6


class TestMetricReport:
    def test_valid(self):
        MetricReport(pitch_dtw=3.0, speaker_cos=0.5)

    def test_negative_dtw_rejected(self):
        with pytest.raises(MetricError):
            MetricReport(pitch_dtw=-1.0, speaker_cos=0.0)

    def test_out_of_range_cos_rejected(self):
        with pytest.raises(MetricError):
            MetricReport(pitch_dtw=0.0, speaker_cos=1.5)


def test_linear_probe_separable_data():
    rng = np.random.default_rng(0)
    x0 = rng.normal(loc=-2.0, size=(60, 4))
    x1 = rng.normal(loc=2.0, size=(60, 4))
    features = np.vstack([x0, x1])
    labels = np.array([0] * 60 + [1] * 60)
    assert linear_probe_accuracy(features, labels) > 0.95


def test_linear_probe_random_labels_near_chance():
    rng = np.random.default_rng(1)
    features = rng.normal(size=(200, 4))
    labels = rng.integers(2, size=200)
    acc = linear_probe_accuracy(features, labels)
    assert 0.2 < acc < 0.8
