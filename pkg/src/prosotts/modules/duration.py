"""Duration prediction in the log domain and length regulation."""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..configs import DisentanglerConfig


class DurationPredictor(nn.Module):
    """Per-phoneme log(1 + duration) from content plus prosody hidden states."""

    def __init__(self, cfg: DisentanglerConfig):
        super().__init__()
        in_dim = cfg.content_hidden + cfg.prosody_hidden
        self.convs = nn.ModuleList(
            nn.Conv1d(
                in_dim if i == 0 else cfg.duration_hidden,
                cfg.duration_hidden,
                cfg.duration_kernel,
                padding=cfg.duration_kernel // 2,
            )
            for i in range(cfg.duration_layers)
        )
        self.norms = nn.ModuleList(nn.LayerNorm(cfg.duration_hidden) for _ in range(cfg.duration_layers))
        self.out = nn.Linear(cfg.duration_hidden, 1)

    def forward(self, content: torch.Tensor, prosody_hidden: torch.Tensor) -> torch.Tensor:
        """Log-domain durations, shape (phonemes,)."""
        if content.shape[0] != prosody_hidden.shape[0]:
            raise ValueError(
                f"content has {content.shape[0]} phonemes but prosody has {prosody_hidden.shape[0]}"
            )
        h = torch.cat([content, prosody_hidden], dim=-1).T.unsqueeze(0)
        for conv, norm in zip(self.convs, self.norms):
            h = conv(h)
            h = norm(F.relu(h).transpose(1, 2)).transpose(1, 2)
        return self.out(h.squeeze(0).T).squeeze(-1)

    def predict(self, content: torch.Tensor, prosody_hidden: torch.Tensor) -> list[int]:
        """Rounded integer durations for inference; clamped to at least one frame."""
        with torch.no_grad():
            log_d = self.forward(content, prosody_hidden)
        durations = torch.clamp(torch.round(torch.expm1(log_d)), min=1)
        return [int(d) for d in durations]

    @staticmethod
    def loss(log_d: torch.Tensor, target_durations: list[int]) -> torch.Tensor:
        """MSE against log(1 + ground-truth duration)."""
        target = torch.log1p(torch.tensor(target_durations, dtype=log_d.dtype))
        return F.mse_loss(log_d, target)


def length_regulate(x: torch.Tensor, durations: list[int]) -> torch.Tensor:
    """Repeat row i durations[i] times; output has sum(durations) rows."""
    if x.shape[0] != len(durations):
        raise ValueError(f"{x.shape[0]} rows but {len(durations)} durations")
    if any(d < 0 for d in durations):
        raise ValueError("negative duration")
    reps = torch.tensor(durations, dtype=torch.long, device=x.device)
    return torch.repeat_interleave(x, reps, dim=0)
