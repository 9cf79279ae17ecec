"""Decoder-only language model over phoneme-level prosody codes.

Input layout (segment order is fixed):

    [prompt content | SEP | prompt codes | SEP | timbre | target content | BOS | target codes... | EOS]

Each segment gets a learned type embedding and segment-relative positions.
When the prompt is empty the two prompt segments and their separators are
dropped. Code logits are a softmax over the code vocabulary only; stopping is
handled by a separate stop head so that path scores stay normalized over codes.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .configs import PLLMConfig

# segment type ids
SEG_PROMPT_CONTENT = 0
SEG_PROMPT_CODES = 1
SEG_TIMBRE = 2
SEG_TARGET_CONTENT = 3
SEG_TARGET_CODES = 4
SEG_SEPARATOR = 5
N_SEGMENT_TYPES = 6


@dataclass
class PLLMSequence:
    """Embedded conditioning prefix ending at BOS, plus the expected target length."""

    base: torch.Tensor  # (L, hidden) token embeddings before type/position terms
    type_ids: torch.Tensor  # (L,)
    positions: torch.Tensor  # (L,)
    target_len: int

    def __len__(self) -> int:
        return self.base.shape[0]


class CausalBlock(nn.Module):
    """Causal self-attention plus a causal conv feed-forward."""

    def __init__(self, cfg: PLLMConfig):
        super().__init__()
        self.attn = nn.MultiheadAttention(cfg.hidden, cfg.heads, batch_first=True)
        self.norm1 = nn.LayerNorm(cfg.hidden)
        self.kernel = cfg.kernel
        self.conv1 = nn.Conv1d(cfg.hidden, cfg.filter, cfg.kernel)
        self.conv2 = nn.Conv1d(cfg.filter, cfg.hidden, cfg.kernel)
        self.norm2 = nn.LayerNorm(cfg.hidden)

    def _causal_conv(self, x: torch.Tensor, conv: nn.Conv1d) -> torch.Tensor:
        # left-pad so position t never sees t+1
        return conv(F.pad(x, (self.kernel - 1, 0)))

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        a, _ = self.attn(x, x, x, attn_mask=mask, need_weights=False)
        x = self.norm1(x + a)
        h = x.transpose(1, 2)
        h = self._causal_conv(F.relu(self._causal_conv(h, self.conv1)), self.conv2)
        return self.norm2(x + h.transpose(1, 2))


class ProsodyLM(nn.Module):
    def __init__(self, cfg: PLLMConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        # code vocabulary plus BOS / EOS rows
        self.code_embedding = nn.Embedding(cfg.n_embeddings, cfg.hidden)
        self.content_proj = nn.Linear(cfg.content_dim, cfg.hidden)
        self.timbre_proj = nn.Linear(cfg.timbre_dim, cfg.hidden)
        self.separator = nn.Parameter(torch.randn(cfg.hidden) * 0.02)
        self.type_embedding = nn.Embedding(N_SEGMENT_TYPES, cfg.hidden)
        self.position_embedding = nn.Embedding(cfg.max_positions, cfg.hidden)
        self.blocks = nn.ModuleList(CausalBlock(cfg) for _ in range(cfg.layers))
        self.head = nn.Linear(cfg.hidden, cfg.codebook_size)
        self.stop_head = nn.Linear(cfg.hidden, 1)

    # ------------------------------------------------------------------ input
    def build_sequence(
        self,
        prompt_codes: torch.Tensor | None,
        prompt_content: torch.Tensor | None,
        timbre: torch.Tensor,
        target_content: torch.Tensor,
    ) -> PLLMSequence:
        """Assemble the conditioning prefix up to and including BOS."""
        if target_content.numel() == 0:
            raise ValueError("target content is empty")
        has_prompt = prompt_codes is not None and prompt_codes.numel() > 0
        if has_prompt:
            if prompt_content is None or prompt_content.shape[0] != prompt_codes.shape[0]:
                raise ValueError(
                    "prompt codes and prompt content must cover the same phonemes"
                )

        pieces, types = [], []
        if has_prompt:
            pieces.append(self.content_proj(prompt_content))
            types.append((SEG_PROMPT_CONTENT, prompt_content.shape[0]))
            pieces.append(self.separator.unsqueeze(0))
            types.append((SEG_SEPARATOR, 1))
            pieces.append(self.code_embedding(prompt_codes))
            types.append((SEG_PROMPT_CODES, prompt_codes.shape[0]))
            pieces.append(self.separator.unsqueeze(0))
            types.append((SEG_SEPARATOR, 1))
        pieces.append(self.timbre_proj(timbre).unsqueeze(0))
        types.append((SEG_TIMBRE, 1))
        pieces.append(self.content_proj(target_content))
        types.append((SEG_TARGET_CONTENT, target_content.shape[0]))
        # BOS opens the target-code segment
        bos = self.code_embedding(torch.tensor([self.cfg.bos_id]))
        pieces.append(bos)
        types.append((SEG_TARGET_CODES, 1))

        base = torch.cat(pieces, dim=0)
        type_ids = torch.cat(
            [torch.full((n,), t, dtype=torch.long) for t, n in types]
        )
        positions = torch.cat([torch.arange(n) for _, n in types])
        total = base.shape[0] + target_content.shape[0] + 1  # room for codes + EOS
        if total > self.cfg.max_positions:
            raise ValueError(
                f"sequence of {total} positions exceeds the {self.cfg.max_positions} budget"
            )
        return PLLMSequence(base, type_ids, positions, int(target_content.shape[0]))

    def _extend_with_codes(self, seq: PLLMSequence, codes: torch.Tensor):
        """Append target-code embeddings after BOS, continuing segment positions."""
        if codes.numel() == 0:
            return seq.base, seq.type_ids, seq.positions
        base = torch.cat([seq.base, self.code_embedding(codes)], dim=0)
        type_ids = torch.cat(
            [seq.type_ids, torch.full((codes.shape[0],), SEG_TARGET_CODES, dtype=torch.long)]
        )
        positions = torch.cat([seq.positions, 1 + torch.arange(codes.shape[0])])
        return base, type_ids, positions

    # ---------------------------------------------------------------- forward
    def _hidden(self, base, type_ids, positions) -> torch.Tensor:
        x = base + self.type_embedding(type_ids) + self.position_embedding(positions)
        x = x.unsqueeze(0)
        n = x.shape[1]
        mask = torch.triu(torch.full((n, n), float("-inf")), diagonal=1)
        for block in self.blocks:
            x = block(x, mask)
        return x.squeeze(0)

    def code_logits(self, seq: PLLMSequence, prefix_codes: torch.Tensor) -> torch.Tensor:
        """Logits for every next-code decision: row t conditions on codes < t.

        Returns (len(prefix_codes) + 1, codebook_size).
        """
        base, type_ids, positions = self._extend_with_codes(seq, prefix_codes)
        hidden = self._hidden(base, type_ids, positions)
        start = len(seq) - 1  # BOS position predicts the first code
        out = hidden[start : start + prefix_codes.shape[0] + 1]
        if not torch.isfinite(out).all():
            raise FloatingPointError("non-finite hidden states")
        return self.head(out)

    def forward_teacher_forced(self, seq: PLLMSequence, targets: torch.Tensor):
        """Cross-entropy over the target codes; returns (logits (T, K), loss)."""
        if targets.numel() < 1:
            raise ValueError("need at least one target code")
        logits = self.code_logits(seq, targets[:-1])
        if not torch.isfinite(logits).all():
            raise FloatingPointError("non-finite logits")
        loss = F.cross_entropy(logits, targets)
        return logits, loss

    def stop_loss(self, seq: PLLMSequence, targets: torch.Tensor) -> torch.Tensor:
        """Auxiliary termination loss: the final code position should stop."""
        base, type_ids, positions = self._extend_with_codes(seq, targets)
        hidden = self._hidden(base, type_ids, positions)
        span = hidden[len(seq) : len(seq) + targets.shape[0]]
        stop_logits = self.stop_head(span).squeeze(-1)
        labels = torch.zeros_like(stop_logits)
        labels[-1] = 1.0
        return F.binary_cross_entropy_with_logits(stop_logits, labels)

    # --------------------------------------------------------------- decoding
    def sample_topk(
        self,
        seq: PLLMSequence,
        k: int | None = None,
        generator: torch.Generator | None = None,
        max_len: int | None = None,
    ) -> torch.Tensor:
        """Autoregressive top-k sampling, clamped to the target phoneme count."""
        k = self.cfg.top_k if k is None else k
        if not (1 <= k <= self.cfg.codebook_size):
            raise ValueError(f"top_k must be in [1, {self.cfg.codebook_size}]")
        length = seq.target_len if max_len is None else min(max_len, seq.target_len)
        codes = torch.empty(0, dtype=torch.long)
        with torch.no_grad():
            for _ in range(length):
                logits = self.code_logits(seq, codes)[-1]
                top_vals, top_idx = torch.topk(logits, k)
                probs = torch.softmax(top_vals, dim=-1)
                if k == 1:
                    choice = top_idx[0:1]
                else:
                    choice = top_idx[torch.multinomial(probs, 1, generator=generator)]
                codes = torch.cat([codes, choice])
        return codes

    def score_path(self, seq: PLLMSequence, codes: torch.Tensor) -> torch.Tensor:
        """Total log-probability of a code path under the full code softmax."""
        if codes.numel() == 0:
            raise ValueError("cannot score an empty path")
        if codes.min() < 0 or codes.max() >= self.cfg.codebook_size:
            raise ValueError("code out of range")
        with torch.no_grad():
            logits = self.code_logits(seq, codes[:-1])
            logp = torch.log_softmax(logits, dim=-1)
        return logp[torch.arange(codes.shape[0]), codes].sum()

    def make_optimizer(self):
        cfg = self.cfg
        return torch.optim.Adam(
            self.parameters(), lr=cfg.lr, betas=(cfg.adam_beta1, cfg.adam_beta2), eps=cfg.adam_eps
        )
