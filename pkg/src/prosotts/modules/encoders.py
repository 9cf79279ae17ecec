"""Prosody, content, and timbre encoders."""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..configs import DisentanglerConfig
from .quantizer import VectorQuantizer


class ConvStack(nn.Module):
    """1-D conv layers with ReLU and layer norm, channels-last in/out (T, C)."""

    def __init__(self, in_dim: int, hidden: int, layers: int, kernel: int):
        super().__init__()
        self.convs = nn.ModuleList(
            nn.Conv1d(in_dim if i == 0 else hidden, hidden, kernel, padding=kernel // 2)
            for i in range(layers)
        )
        self.norms = nn.ModuleList(nn.LayerNorm(hidden) for _ in range(layers))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = x.T.unsqueeze(0)  # (1, C, T)
        for conv, norm in zip(self.convs, self.norms):
            h = conv(h)
            h = norm(F.relu(h).transpose(1, 2)).transpose(1, 2)
        return h.squeeze(0).T


def pool_by_phoneme(frames: torch.Tensor, durations: list[int]) -> torch.Tensor:
    """Mean-pool frame features over each phoneme's span; zero-duration spans pool to zero."""
    if sum(durations) != frames.shape[0]:
        raise ValueError(
            f"durations sum to {sum(durations)} but input has {frames.shape[0]} frames"
        )
    out = frames.new_zeros(len(durations), frames.shape[1])
    t = 0
    for i, d in enumerate(durations):
        if d > 0:
            out[i] = frames[t : t + d].mean(0)
        t += d
    return out


class ProsodyEncoder(nn.Module):
    """Low-band mel -> phoneme-level VQ prosody codes.

    Frame-level conv stack, phoneme-boundary mean pooling, phoneme-level conv
    stack, linear reduction to the code dimension, then vector quantization.
    """

    def __init__(self, cfg: DisentanglerConfig):
        super().__init__()
        self.cfg = cfg
        self.frame_stack = ConvStack(cfg.low_bins, cfg.prosody_hidden, cfg.prosody_layers, cfg.prosody_kernel)
        self.phoneme_stack = ConvStack(cfg.prosody_hidden, cfg.prosody_hidden, 2, cfg.prosody_kernel)
        self.reduce = nn.Linear(cfg.prosody_hidden, cfg.code_dim)
        self.quantizer = VectorQuantizer(cfg.codebook_size, cfg.code_dim, cfg.dead_code_steps)
        self.expand = nn.Linear(cfg.code_dim, cfg.prosody_hidden)

    def pre_quant(self, mel_low: torch.Tensor, durations: list[int]) -> torch.Tensor:
        """Phoneme-level vectors in the code dimension, before quantization."""
        if mel_low.shape[1] != self.cfg.low_bins:
            raise ValueError(
                f"prosody encoder expects {self.cfg.low_bins}-bin input, got {mel_low.shape[1]}"
            )
        pooled = pool_by_phoneme(self.frame_stack(mel_low), durations)
        return self.reduce(self.phoneme_stack(pooled))

    def forward(self, mel_low: torch.Tensor, durations: list[int]):
        """Returns (codes, prosody_hidden, codebook_loss, commit_loss)."""
        h = self.pre_quant(mel_low, durations)
        codes, z_q, codebook_loss, commit_loss = self.quantizer(h)
        return codes, self.expand(z_q), codebook_loss, commit_loss

    def hidden_from_codes(self, codes: torch.Tensor) -> torch.Tensor:
        """Decoder-side prosody hidden states for a given code sequence."""
        return self.expand(self.quantizer.lookup(codes))


class FFTBlock(nn.Module):
    """Self-attention plus a conv feed-forward, as used in non-autoregressive TTS."""

    def __init__(self, hidden: int, heads: int, filter_size: int, kernel: int, dropout: float = 0.1):
        super().__init__()
        self.attn = nn.MultiheadAttention(hidden, heads, dropout=dropout, batch_first=True)
        self.norm1 = nn.LayerNorm(hidden)
        self.conv1 = nn.Conv1d(hidden, filter_size, kernel, padding=kernel // 2)
        self.conv2 = nn.Conv1d(filter_size, hidden, kernel, padding=kernel // 2)
        self.norm2 = nn.LayerNorm(hidden)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        a, _ = self.attn(x, x, x, need_weights=False)
        x = self.norm1(x + self.dropout(a))
        f = self.conv2(F.relu(self.conv1(x.transpose(1, 2)))).transpose(1, 2)
        return self.norm2(x + self.dropout(f))


class ContentEncoder(nn.Module):
    """Phoneme IDs -> phoneme-level content representation."""

    def __init__(self, cfg: DisentanglerConfig):
        super().__init__()
        self.cfg = cfg
        self.embedding = nn.Embedding(cfg.phoneme_vocab_size, cfg.content_hidden)
        self.blocks = nn.ModuleList(
            FFTBlock(cfg.content_hidden, cfg.content_heads, cfg.content_filter, cfg.content_kernel)
            for _ in range(cfg.content_layers)
        )

    def forward(self, phonemes: torch.Tensor) -> torch.Tensor:
        if phonemes.numel() == 0:
            raise ValueError("empty phoneme sequence")
        if phonemes.min() < 0 or phonemes.max() >= self.cfg.phoneme_vocab_size:
            raise ValueError(
                f"phoneme ID out of vocabulary (size {self.cfg.phoneme_vocab_size})"
            )
        x = self.embedding(phonemes).unsqueeze(0)
        for block in self.blocks:
            x = block(x)
        return x.squeeze(0)


class TimbreEncoder(nn.Module):
    """Full-band mel -> single global vector by temporal averaging."""

    def __init__(self, cfg: DisentanglerConfig):
        super().__init__()
        self.stack = ConvStack(cfg.n_mels, cfg.timbre_hidden, cfg.timbre_layers, cfg.timbre_kernel)

    def forward(self, mel: torch.Tensor) -> torch.Tensor:
        if mel.shape[0] < 1:
            raise ValueError("timbre encoder needs at least one frame")
        return self.stack(mel).mean(0)
