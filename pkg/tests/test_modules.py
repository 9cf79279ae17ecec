import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from prosotts.modules.duration import DurationPredictor, length_regulate
from prosotts.modules.encoders import pool_by_phoneme


class TestProsodyEncoder:
    def test_code_length_matches_phoneme_count(self, toy_model):
        mel_low = torch.randn(35, 20)
        codes, hidden, _, _ = toy_model.prosody_encoder(mel_low, [5] * 7)
        assert codes.shape == (7,)
        assert hidden.shape == (7, 32)

    def test_rejects_full_band_input(self, toy_model):
        with pytest.raises(ValueError, match="20-bin"):
            toy_model.prosody_encoder(torch.randn(35, 80), [5] * 7)

    def test_duration_frame_mismatch(self, toy_model):
        with pytest.raises(ValueError, match="durations sum"):
            toy_model.prosody_encoder(torch.randn(35, 20), [5] * 6)


class TestContentEncoder:
    def test_shape(self, toy_model):
        out = toy_model.encode_content([0, 1, 2, 3, 4])
        assert out.shape == (5, 32)

    def test_deterministic_in_eval(self, toy_model):
        toy_model.eval()
        a = toy_model.encode_content([1, 2, 3])
        b = toy_model.encode_content([1, 2, 3])
        torch.testing.assert_close(a, b)

    def test_out_of_vocab(self, toy_model):
        with pytest.raises(ValueError, match="vocabulary"):
            toy_model.encode_content([0, 99])

    def test_empty_rejected(self, toy_model):
        with pytest.raises(ValueError):
            toy_model.encode_content([])


class TestTimbreEncoder:
    def test_constant_input_length_invariance_valid_region(self, toy_model):
        # same-padding edge frames are excluded; interior (valid-region) means
        # must agree exactly across lengths
        toy_model.eval()
        frame = np.random.default_rng(0).normal(size=80).astype(np.float32)
        edge = 16
        means = []
        for n_frames in (64, 256):
            mel = torch.from_numpy(np.tile(frame, (n_frames, 1)))
            with torch.no_grad():
                out = toy_model.timbre_encoder.stack(mel)
            means.append(out[edge:-edge].mean(0))
        torch.testing.assert_close(means[0], means[1])

    def test_interior_rows_constant(self, toy_model):
        toy_model.eval()
        frame = np.random.default_rng(1).normal(size=80).astype(np.float32)
        mel = torch.from_numpy(np.tile(frame, (64, 1)))
        with torch.no_grad():
            out = toy_model.timbre_encoder.stack(mel)
        interior = out[16:-16]
        torch.testing.assert_close(interior, interior[0].expand_as(interior))

    def test_zero_frames_rejected(self, toy_model):
        with pytest.raises(ValueError):
            toy_model.timbre_encoder(torch.zeros(0, 80))

    def test_output_dimension(self, toy_model):
        out = toy_model.encode_timbre(np.random.default_rng(2).normal(size=(30, 80)))
        assert out.shape == (32,)


class TestDurationPredictor:
    def test_shape_and_sign(self, toy_model):
        content = torch.randn(4, 32)
        prosody = torch.randn(4, 32)
        durations = toy_model.duration_predictor.predict(content, prosody)
        assert len(durations) == 4
        assert all(d >= 0 for d in durations)

    def test_length_mismatch(self, toy_model):
        with pytest.raises(ValueError):
            toy_model.duration_predictor(torch.randn(4, 32), torch.randn(3, 32))

    def test_loss_target_is_log1p(self):
        log_d = torch.log1p(torch.tensor([3.0, 7.0, 1.0]))
        assert float(DurationPredictor.loss(log_d, [3, 7, 1])) == pytest.approx(0.0, abs=1e-12)


class TestLengthRegulate:
    def test_definition(self):
        x = torch.tensor([[1.0, 0.0], [0.0, 1.0]])
        out = length_regulate(x, [2, 3])
        expected = torch.tensor([[1.0, 0.0]] * 2 + [[0.0, 1.0]] * 3)
        torch.testing.assert_close(out, expected)

    def test_identity(self):
        x = torch.randn(5, 3)
        torch.testing.assert_close(length_regulate(x, [1] * 5), x)

    def test_zero_duration_drops_row(self):
        x = torch.arange(6.0).reshape(3, 2)
        out = length_regulate(x, [1, 0, 2])
        assert out.shape[0] == 3
        torch.testing.assert_close(out, torch.stack([x[0], x[2], x[2]]))

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            length_regulate(torch.randn(2, 2), [1, -1])

    @given(durations=st.lists(st.integers(0, 5), min_size=1, max_size=8))
    @settings(max_examples=40, deadline=None)
    def test_multiset_preserved(self, durations):
        x = torch.arange(len(durations), dtype=torch.float32).unsqueeze(1)
        out = length_regulate(x, durations)
        assert out.shape[0] == sum(durations)
        counts = torch.bincount(out[:, 0].long(), minlength=len(durations))
        assert counts.tolist() == durations


def test_pool_by_phoneme_means():
    frames = torch.tensor([[1.0], [3.0], [10.0], [0.0], [0.0]])
    out = pool_by_phoneme(frames, [2, 1, 0, 2])
    torch.testing.assert_close(out[:, 0], torch.tensor([2.0, 10.0, 0.0, 0.0]))
