"""Mel-spectrogram container, low-band slicing, binary storage, and waveform analysis."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

LOW_BAND_BINS = 20
MEL_MAGIC = b"MEL1"

# Analysis defaults; the hop/window pair is configuration, not a fixed constant.
DEFAULT_SAMPLE_RATE = 16_000
DEFAULT_N_FFT = 1024
DEFAULT_HOP = 256
DEFAULT_N_MELS = 80
LOG_FLOOR = 1e-5


class MelValidationError(ValueError):
    pass


@dataclass
class MelSpectrogram:
    """Frame-by-bin matrix of log magnitudes, shape (frames, bins)."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise MelValidationError(f"mel must be 2-D, got shape {self.values.shape}")
        if self.values.shape[0] < 1 or self.values.shape[1] < 1:
            raise MelValidationError(f"mel must be non-empty, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise MelValidationError("mel contains non-finite values")

    @property
    def frames(self) -> int:
        return self.values.shape[0]

    @property
    def bins(self) -> int:
        return self.values.shape[1]


def slice_low_band(mel: MelSpectrogram) -> MelSpectrogram:
    """Column-prefix slice keeping the first min(bins, 20) bins of every frame."""
    width = min(mel.bins, LOW_BAND_BINS)
    return MelSpectrogram(mel.values[:, :width].copy())


def save_mel(mel: MelSpectrogram, path: str | Path) -> None:
    """Write the MEL1 binary: magic, uint32 frames, uint32 bins, float32 row-major data."""
    path = Path(path)
    with open(path, "wb") as f:
        f.write(MEL_MAGIC)
        f.write(struct.pack("<II", mel.frames, mel.bins))
        f.write(np.ascontiguousarray(mel.values, dtype="<f4").tobytes())


def load_mel(path: str | Path) -> MelSpectrogram:
    path = Path(path)
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MEL_MAGIC:
            raise MelValidationError(f"{path}: bad magic {magic!r}, expected {MEL_MAGIC!r}")
        frames, bins = struct.unpack("<II", f.read(8))
        data = np.frombuffer(f.read(frames * bins * 4), dtype="<f4")
        if data.size != frames * bins:
            raise MelValidationError(f"{path}: truncated mel payload")
    return MelSpectrogram(data.reshape(frames, bins).copy())


def mel_bytes(mel: MelSpectrogram) -> bytes:
    """Bit-exact serialized form, used for determinism checks and adapter hand-off."""
    return (
        MEL_MAGIC
        + struct.pack("<II", mel.frames, mel.bins)
        + np.ascontiguousarray(mel.values, dtype="<f4").tobytes()
    )


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(
    sample_rate: int = DEFAULT_SAMPLE_RATE,
    n_fft: int = DEFAULT_N_FFT,
    n_mels: int = DEFAULT_N_MELS,
    fmin: float = 0.0,
    fmax: float | None = None,
) -> np.ndarray:
    """Triangular mel filterbank, shape (n_mels, n_fft // 2 + 1)."""
    if fmax is None:
        fmax = sample_rate / 2.0
    n_bins = n_fft // 2 + 1
    fft_freqs = np.linspace(0.0, sample_rate / 2.0, n_bins)
    mel_pts = np.linspace(_hz_to_mel(fmin), _hz_to_mel(fmax), n_mels + 2)
    hz_pts = _mel_to_hz(mel_pts)
    fb = np.zeros((n_mels, n_bins), dtype=np.float64)
    for i in range(n_mels):
        left, center, right = hz_pts[i], hz_pts[i + 1], hz_pts[i + 2]
        up = (fft_freqs - left) / max(center - left, 1e-10)
        down = (right - fft_freqs) / max(right - center, 1e-10)
        fb[i] = np.maximum(0.0, np.minimum(up, down))
    return fb.astype(np.float32)


@dataclass
class MelAnalysisConfig:
    sample_rate: int = DEFAULT_SAMPLE_RATE
    n_fft: int = DEFAULT_N_FFT
    hop: int = DEFAULT_HOP
    n_mels: int = DEFAULT_N_MELS

    def filterbank(self) -> np.ndarray:
        return mel_filterbank(self.sample_rate, self.n_fft, self.n_mels)


def stft_magnitude(waveform: np.ndarray, cfg: MelAnalysisConfig) -> np.ndarray:
    """Magnitude STFT with a Hann window, shape (frames, n_fft // 2 + 1)."""
    wav = np.asarray(waveform, dtype=np.float64)
    n_fft, hop = cfg.n_fft, cfg.hop
    pad = n_fft // 2
    wav = np.pad(wav, (pad, pad), mode="reflect")
    window = np.hanning(n_fft)
    n_frames = 1 + (len(wav) - n_fft) // hop
    mags = np.empty((n_frames, n_fft // 2 + 1), dtype=np.float64)
    for t in range(n_frames):
        seg = wav[t * hop : t * hop + n_fft] * window
        mags[t] = np.abs(np.fft.rfft(seg))
    return mags


def extract_mel(waveform: np.ndarray, cfg: MelAnalysisConfig | None = None) -> MelSpectrogram:
    """Log-magnitude mel analysis of a mono waveform."""
    cfg = cfg or MelAnalysisConfig()
    mags = stft_magnitude(waveform, cfg)
    mel_mag = mags @ cfg.filterbank().T
    return MelSpectrogram(np.log(np.maximum(mel_mag, LOG_FLOOR)).astype(np.float32))
