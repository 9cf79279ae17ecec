"""Objective metrics: pitch contours, DTW distance, speaker similarity, robustness counts."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np
import torch

from .disentangler import Disentangler
from .manifest import PhonemeUtterance
from .mel import MelSpectrogram
from .synthetic import LOW_BINS, PITCH_BASE_HZ, PITCH_STEP_HZ, state_center_bin


class MetricError(ValueError):
    pass


@dataclass
class PitchContour:
    values: np.ndarray  # Hz, 0 where unvoiced
    voicing: np.ndarray  # bool

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.voicing = np.asarray(self.voicing, dtype=bool)
        if self.values.shape != self.voicing.shape:
            raise MetricError("values and voicing must have the same length")
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise MetricError("pitch values must be finite and non-negative")
        self.values = np.where(self.voicing, self.values, 0.0)

    def voiced_values(self) -> np.ndarray:
        return self.values[self.voicing]


@dataclass
class MetricReport:
    pitch_dtw: float
    speaker_cos: float
    repeats: int = 0
    skips: int = 0
    error_sentences: int = 0

    def __post_init__(self):
        if self.pitch_dtw < 0:
            raise MetricError("pitch DTW distance cannot be negative")
        if not -1.0 <= self.speaker_cos <= 1.0 + 1e-9:
            raise MetricError("speaker similarity must lie in [-1, 1]")


# ----------------------------------------------------------------- pitch (F0)
def pitch_contour(
    waveform: np.ndarray,
    sample_rate: int = 16_000,
    frame_length: int = 1024,
    hop: int = 256,
    fmin: float = 60.0,
    fmax: float = 500.0,
    energy_threshold: float = 1e-4,
    periodicity_threshold: float = 0.5,
) -> PitchContour:
    """Autocorrelation F0 estimate per frame with an energy + periodicity voicing gate."""
    wav = np.asarray(waveform, dtype=np.float64)
    if wav.size == 0:
        raise MetricError("empty waveform")
    n_frames = max(1, 1 + (len(wav) - frame_length) // hop)
    values = np.zeros(n_frames)
    voicing = np.zeros(n_frames, dtype=bool)
    lag_min = int(sample_rate / fmax)
    lag_max = min(int(sample_rate / fmin), frame_length - 1)
    for t in range(n_frames):
        frame = wav[t * hop : t * hop + frame_length]
        if len(frame) < frame_length:
            frame = np.pad(frame, (0, frame_length - len(frame)))
        frame = frame - frame.mean()
        energy = float((frame**2).mean())
        if energy < energy_threshold:
            continue
        ac = np.correlate(frame, frame, mode="full")[frame_length - 1 :]
        if ac[0] <= 0:
            continue
        ac = ac / ac[0]
        search = ac[lag_min : lag_max + 1]
        if search.size == 0:
            continue
        lag = lag_min + int(np.argmax(search))
        if ac[lag] < periodicity_threshold:
            continue
        # parabolic refinement around the autocorrelation peak
        if 0 < lag < len(ac) - 1:
            a, b, c = ac[lag - 1], ac[lag], ac[lag + 1]
            denom = a - 2 * b + c
            shift = 0.5 * (a - c) / denom if abs(denom) > 1e-12 else 0.0
            lag = lag + float(np.clip(shift, -1, 1))
        values[t] = sample_rate / lag
        voicing[t] = True
    return PitchContour(values, voicing)


def contour_from_factors(utt: PhonemeUtterance) -> PitchContour:
    """Pass-through contour for synthetic utterances with stored ground truth."""
    if not utt.factors or "pitch" not in utt.factors:
        raise MetricError(f"{utt.utterance_id}: no stored pitch factors")
    pitch = np.asarray(utt.factors["pitch"], dtype=np.float64)
    return PitchContour(pitch, np.ones_like(pitch, dtype=bool))


def contour_from_synthetic_mel(mel: MelSpectrogram, n_states: int = 8) -> PitchContour:
    """Recover the synthetic pitch trajectory from the low-band spectral centroid.

    Only meaningful for mels in the synthetic-factor family (including model
    reconstructions of them), where pitch maps linearly to the bump position.
    """
    low = np.exp(mel.values[:, :LOW_BINS].astype(np.float64))
    # remove the flat background level so the centroid tracks only the bump
    low = np.maximum(low - low.min(axis=1, keepdims=True), 0.0)
    bins = np.arange(LOW_BINS)
    centroid = (low * bins).sum(axis=1) / np.maximum(low.sum(axis=1), 1e-12)
    c0 = state_center_bin(0, n_states)
    c1 = state_center_bin(n_states - 1, n_states)
    frac = np.clip((centroid - c0) / max(c1 - c0, 1e-9), -0.25, 1.25)
    pitch = PITCH_BASE_HZ + frac * (n_states - 1) * PITCH_STEP_HZ
    return PitchContour(np.maximum(pitch, 0.0), np.ones(mel.frames, dtype=bool))


# ------------------------------------------------------------------------ DTW
def dtw_distance(a: PitchContour, b: PitchContour) -> float:
    """Accumulated cost of the optimal full-window DTW path, absolute-difference cost."""
    x, y = a.voiced_values(), b.voiced_values()
    if x.size == 0 or y.size == 0:
        raise MetricError("DTW requires at least one voiced frame on each side")
    cost = np.abs(x[:, None] - y[None, :])
    acc = np.full((x.size + 1, y.size + 1), np.inf)
    acc[0, 0] = 0.0
    for i in range(1, x.size + 1):
        for j in range(1, y.size + 1):
            acc[i, j] = cost[i - 1, j - 1] + min(
                acc[i - 1, j - 1], acc[i - 1, j], acc[i, j - 1]
            )
    return float(acc[x.size, y.size])


# ----------------------------------------------------------------- similarity
def high_band_profile(mel: MelSpectrogram, low_bins: int = LOW_BINS) -> np.ndarray:
    """Model-free timbre signature: mean high-band magnitude profile.

    Useful as a fixed reference embedder when comparing different trained
    models, where each model's own timbre encoder would grade itself.
    """
    return np.exp(mel.values[:, low_bins:].astype(np.float64)).mean(axis=0)


class TimbreEmbedder:
    """Default speaker embedder backed by a trained timbre encoder."""

    def __init__(self, model: Disentangler):
        self.model = model.eval()

    def __call__(self, mel: MelSpectrogram) -> np.ndarray:
        with torch.no_grad():
            return self.model.encode_timbre(mel.values).numpy()


def speaker_similarity(a: MelSpectrogram, b: MelSpectrogram, embedder) -> float:
    """Cosine similarity of the two embeddings, in [-1, 1]."""
    ea = np.asarray(embedder(a), dtype=np.float64)
    eb = np.asarray(embedder(b), dtype=np.float64)
    if ea.shape != eb.shape:
        raise MetricError("embedder returned mismatched dimensions")
    na, nb = np.linalg.norm(ea), np.linalg.norm(eb)
    if na == 0 or nb == 0:
        raise MetricError("zero-norm embedding")
    return float(np.clip(ea @ eb / (na * nb), -1.0, 1.0))


# ----------------------------------------------------------------- robustness
def robustness_check(
    target_phonemes: list[int], emitted_indices: list[int]
) -> tuple[int, int]:
    """Structural audit: (repeats, skips) over target phoneme positions.

    emitted_indices lists, in emission order, which target position each
    emitted code belongs to; the synthesis pipelines emit exactly one code per
    phoneme, so both counts are zero by construction for their outputs.
    """
    counts = Counter(emitted_indices)
    repeats = sum(1 for i in range(len(target_phonemes)) if counts[i] > 1)
    skips = sum(1 for i in range(len(target_phonemes)) if counts[i] == 0)
    return repeats, skips


def stress_corpus(
    n_sentences: int = 50,
    vocab_size: int = 12,
    seed: int = 1234,
    min_len: int = 30,
    max_len: int = 60,
) -> list[list[int]]:
    """Long, repetitive phoneme strings that trip alignment-free decoders."""
    rng = np.random.default_rng(seed)
    sentences = []
    for _ in range(n_sentences):
        length = int(rng.integers(min_len, max_len + 1))
        motif_len = int(rng.integers(1, 4))
        motif = rng.integers(vocab_size, size=motif_len).tolist()
        sent = (motif * (length // motif_len + 1))[:length]
        # sprinkle a few random breaks so sentences are not pure cycles
        for _ in range(int(rng.integers(0, 4))):
            sent[int(rng.integers(length))] = int(rng.integers(vocab_size))
        sentences.append([int(p) for p in sent])
    return sentences


# --------------------------------------------------------------------- probes
def linear_probe_accuracy(
    features: np.ndarray, labels: np.ndarray, seed: int = 0, test_fraction: float = 0.3
) -> float:
    """Held-out accuracy of a logistic-regression probe."""
    from sklearn.linear_model import LogisticRegression
    from sklearn.model_selection import train_test_split

    x_train, x_test, y_train, y_test = train_test_split(
        features, labels, test_size=test_fraction, random_state=seed, stratify=labels
    )
    probe = LogisticRegression(max_iter=2000, random_state=seed)
    probe.fit(x_train, y_train)
    return float(probe.score(x_test, y_test))
