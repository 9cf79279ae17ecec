"""GAN mel decoder and the multi-window discriminator."""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..configs import DisentanglerConfig
from .encoders import ConvStack


class MelDecoder(nn.Module):
    """Frame-level prosody + content plus a broadcast timbre vector -> full-band mel."""

    def __init__(self, cfg: DisentanglerConfig):
        super().__init__()
        self.proj_prosody = nn.Linear(cfg.prosody_hidden, cfg.decoder_hidden)
        self.proj_content = nn.Linear(cfg.content_hidden, cfg.decoder_hidden)
        self.proj_timbre = nn.Linear(cfg.timbre_hidden, cfg.decoder_hidden)
        self.stack = ConvStack(cfg.decoder_hidden, cfg.decoder_hidden, cfg.decoder_layers, cfg.decoder_kernel)
        self.out = nn.Linear(cfg.decoder_hidden, cfg.n_mels)

    def forward(
        self, prosody_hidden: torch.Tensor, timbre: torch.Tensor, content: torch.Tensor
    ) -> torch.Tensor:
        if prosody_hidden.shape[0] != content.shape[0]:
            raise ValueError(
                f"prosody has {prosody_hidden.shape[0]} frames but content has {content.shape[0]}"
            )
        h = self.proj_prosody(prosody_hidden) + self.proj_content(content) + self.proj_timbre(timbre)
        return self.out(self.stack(h))


class WindowDiscriminator(nn.Module):
    """2-D conv stack scoring one fixed-length mel window."""

    def __init__(self, cfg: DisentanglerConfig, window: int):
        super().__init__()
        self.window = window
        chans = cfg.disc_hidden
        layers = []
        in_ch = 1
        for _ in range(cfg.disc_conv_layers):
            layers += [nn.Conv2d(in_ch, chans, kernel_size=3, stride=2, padding=1), nn.LeakyReLU(0.2)]
            in_ch = chans
        self.convs = nn.Sequential(*layers)
        self.out = nn.Linear(chans, 1)

    def forward(self, mel_window: torch.Tensor) -> torch.Tensor:
        h = self.convs(mel_window.unsqueeze(0).unsqueeze(0))
        return self.out(h.mean(dim=(2, 3))).squeeze()


class MultiWindowDiscriminator(nn.Module):
    """One sub-discriminator per window size; each scores a random contiguous window."""

    def __init__(self, cfg: DisentanglerConfig):
        super().__init__()
        self.windows = tuple(cfg.disc_windows)
        self.discs = nn.ModuleList(WindowDiscriminator(cfg, w) for w in self.windows)

    def forward(
        self, mel: torch.Tensor, generator: torch.Generator | None = None
    ) -> dict[int, torch.Tensor]:
        """Scores keyed by window size; windows longer than the mel are skipped."""
        feasible = [(w, d) for w, d in zip(self.windows, self.discs) if mel.shape[0] >= w]
        if not feasible:
            raise ValueError(
                f"mel with {mel.shape[0]} frames is shorter than every window {self.windows}"
            )
        scores = {}
        for w, disc in feasible:
            start = int(torch.randint(mel.shape[0] - w + 1, (1,), generator=generator))
            scores[w] = disc(mel[start : start + w])
        return scores


def lsgan_d_loss(real_scores: dict[int, torch.Tensor], fake_scores: dict[int, torch.Tensor]) -> torch.Tensor:
    """Least-squares discriminator loss: real -> 1, fake -> 0."""
    terms = [((s - 1.0) ** 2) for s in real_scores.values()]
    terms += [s**2 for s in fake_scores.values()]
    return torch.stack(terms).mean()


def lsgan_g_loss(fake_scores: dict[int, torch.Tensor]) -> torch.Tensor:
    """Least-squares generator loss: fake -> 1."""
    return torch.stack([(s - 1.0) ** 2 for s in fake_scores.values()]).mean()
