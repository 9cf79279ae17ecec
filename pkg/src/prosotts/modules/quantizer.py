"""Vector quantization bottleneck with straight-through gradients."""

from __future__ import annotations

import torch
import torch.nn as nn


class VectorQuantizer(nn.Module):
    """Codebook of `codebook_size` entries of dimension `code_dim`.

    The codebook is trained by gradient (the quantization loss carries an
    explicit codebook term); entries unused for `dead_code_steps` consecutive
    steps are re-seeded from the current batch of encoder outputs.
    """

    def __init__(self, codebook_size: int, code_dim: int, dead_code_steps: int = 200):
        super().__init__()
        if codebook_size < 2:
            raise ValueError("codebook needs at least 2 entries")
        self.codebook_size = codebook_size
        self.code_dim = code_dim
        self.dead_code_steps = dead_code_steps
        self.embedding = nn.Parameter(torch.randn(codebook_size, code_dim) * 0.1)
        self.register_buffer("steps_unused", torch.zeros(codebook_size, dtype=torch.long))

    def nearest(self, h: torch.Tensor) -> torch.Tensor:
        """Indices of nearest codebook rows; ties break to the lowest index."""
        if not torch.isfinite(h).all():
            raise FloatingPointError("non-finite input to quantizer")
        # exact squared distances (..., K); argmin takes the lowest index on ties
        d = ((h.unsqueeze(-2) - self.embedding) ** 2).sum(-1)
        return d.argmin(-1)

    def forward(self, h: torch.Tensor):
        """Quantize a batch of vectors (..., code_dim).

        Returns (indices, z_q, codebook_loss, commit_loss); the losses are the
        mean over vectors of the per-vector squared L2 norms, and z_q carries
        straight-through gradients back to h.
        """
        indices = self.nearest(h)
        z_q = self.embedding[indices]
        codebook_loss = ((h.detach() - z_q) ** 2).sum(-1).mean()
        commit_loss = ((z_q.detach() - h) ** 2).sum(-1).mean()
        z_q = h + (z_q - h).detach()
        return indices, z_q, codebook_loss, commit_loss

    def quantize(self, h: torch.Tensor):
        """Single-vector quantization: (index, z_q, codebook_loss, commit_loss)."""
        if h.dim() != 1:
            raise ValueError(f"expected a single vector, got shape {tuple(h.shape)}")
        indices, z_q, codebook_loss, commit_loss = self.forward(h.unsqueeze(0))
        return int(indices[0]), z_q[0], codebook_loss, commit_loss

    def lookup(self, indices: torch.Tensor) -> torch.Tensor:
        return self.embedding[indices]

    @torch.no_grad()
    def track_usage(self, indices: torch.Tensor, encoder_outputs: torch.Tensor) -> int:
        """Count usage after a training step and revive long-dead entries.

        Returns the number of revived entries.
        """
        used = torch.zeros(self.codebook_size, dtype=torch.bool, device=indices.device)
        used[indices.reshape(-1)] = True
        self.steps_unused[used] = 0
        self.steps_unused[~used] += 1
        dead = (self.steps_unused >= self.dead_code_steps).nonzero(as_tuple=True)[0]
        if len(dead) == 0:
            return 0
        flat = encoder_outputs.reshape(-1, self.code_dim)
        pick = torch.randint(flat.shape[0], (len(dead),), device=flat.device)
        self.embedding.data[dead] = flat[pick].detach()
        self.steps_unused[dead] = 0
        return len(dead)
