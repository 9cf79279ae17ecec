"""Pluggable vocoder boundary with a classical phase-reconstruction default."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol

import numpy as np
from scipy.io import wavfile

from .mel import MelAnalysisConfig, MelSpectrogram, mel_bytes


class VocoderError(ValueError):
    pass


class Vocoder(Protocol):
    def vocode(self, mel: MelSpectrogram) -> np.ndarray: ...


def _istft(mags: np.ndarray, phases: np.ndarray, n_fft: int, hop: int) -> np.ndarray:
    """Overlap-add inverse of the Hann-windowed magnitude STFT."""
    window = np.hanning(n_fft)
    n_frames = mags.shape[0]
    length = n_fft + (n_frames - 1) * hop
    wav = np.zeros(length)
    norm = np.zeros(length)
    spec = mags * np.exp(1j * phases)
    for t in range(n_frames):
        frame = np.fft.irfft(spec[t], n=n_fft)
        wav[t * hop : t * hop + n_fft] += frame * window
        norm[t * hop : t * hop + n_fft] += window**2
    wav /= np.maximum(norm, 1e-8)
    pad = n_fft // 2
    return wav[pad : length - pad]


def _stft_complex(wav: np.ndarray, n_fft: int, hop: int, n_frames: int) -> np.ndarray:
    window = np.hanning(n_fft)
    pad = n_fft // 2
    wav = np.pad(wav, (pad, pad), mode="reflect")
    spec = np.empty((n_frames, n_fft // 2 + 1), dtype=complex)
    for t in range(n_frames):
        seg = wav[t * hop : t * hop + n_fft]
        if len(seg) < n_fft:
            seg = np.pad(seg, (0, n_fft - len(seg)))
        spec[t] = np.fft.rfft(seg * window)
    return spec


@dataclass
class GriffinLimVocoder:
    """Mel -> waveform by filterbank pseudo-inversion and iterative phase refinement."""

    analysis: MelAnalysisConfig = None
    iterations: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.analysis is None:
            self.analysis = MelAnalysisConfig()

    def vocode(self, mel: MelSpectrogram) -> np.ndarray:
        cfg = self.analysis
        if mel.bins != cfg.n_mels:
            raise VocoderError(
                f"mel has {mel.bins} bins but the vocoder is configured for {cfg.n_mels}"
            )
        fb = cfg.filterbank()
        mel_mag = np.exp(mel.values.astype(np.float64))
        linear = np.maximum(mel_mag @ np.linalg.pinv(fb).T, 0.0)

        rng = np.random.default_rng(self.seed)
        phases = rng.uniform(-np.pi, np.pi, size=linear.shape)
        wav = _istft(linear, phases, cfg.n_fft, cfg.hop)
        for _ in range(self.iterations):
            spec = _stft_complex(wav, cfg.n_fft, cfg.hop, mel.frames)
            phases = np.angle(spec)
            wav = _istft(linear, phases, cfg.n_fft, cfg.hop)
        peak = np.abs(wav).max()
        if peak > 1.0:
            wav = wav / peak
        return wav.astype(np.float32)


@dataclass
class ExternalVocoder:
    """Adapter slot for a pre-trained neural vocoder; receives the bit-exact mel binary."""

    handler: Callable[[bytes], np.ndarray]
    n_mels: int = 80

    def vocode(self, mel: MelSpectrogram) -> np.ndarray:
        if mel.bins != self.n_mels:
            raise VocoderError(
                f"mel has {mel.bins} bins but the adapter expects {self.n_mels}"
            )
        return np.asarray(self.handler(mel_bytes(mel)), dtype=np.float32)


def write_wav(path: str | Path, waveform: np.ndarray, sample_rate: int = 16_000) -> None:
    """Mono 16-bit PCM output."""
    pcm = np.clip(waveform, -1.0, 1.0)
    wavfile.write(str(path), sample_rate, (pcm * 32767).astype(np.int16))
