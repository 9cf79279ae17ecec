"""First-stage acoustic model: factorized encoders, VQ bottleneck, GAN mel decoder."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .configs import DisentanglerConfig
from .manifest import PhonemeUtterance
from .modules.decoder import MelDecoder, MultiWindowDiscriminator, lsgan_d_loss, lsgan_g_loss
from .modules.duration import DurationPredictor, length_regulate
from .modules.encoders import ContentEncoder, ProsodyEncoder, TimbreEncoder


def vq_total_loss(
    y: torch.Tensor,
    y_hat: torch.Tensor,
    codebook_loss: torch.Tensor,
    commit_loss: torch.Tensor,
    commit_weight: float,
) -> torch.Tensor:
    """Reconstruction + codebook + weighted commitment loss."""
    return F.mse_loss(y_hat, y) + codebook_loss + commit_weight * commit_loss


@dataclass
class StepLosses:
    total: float
    reconstruction: float
    codebook: float
    commitment: float
    adversarial_g: float
    adversarial_d: float
    duration: float


class Disentangler(nn.Module):
    """Encodes speech into prosody codes, content, and a timbre vector; decodes mel."""

    def __init__(self, cfg: DisentanglerConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.prosody_encoder = ProsodyEncoder(cfg)
        self.content_encoder = ContentEncoder(cfg)
        self.timbre_encoder = TimbreEncoder(cfg)
        self.duration_predictor = DurationPredictor(cfg)
        self.decoder = MelDecoder(cfg)
        self.discriminator = MultiWindowDiscriminator(cfg)

    def generator_parameters(self):
        for name, p in self.named_parameters():
            if not name.startswith("discriminator."):
                yield p

    def encode_utterance(self, utt: PhonemeUtterance):
        """Prosody codes / hidden states plus VQ losses for one utterance."""
        mel = torch.from_numpy(utt.mel.values)
        mel_low = mel[:, : self.cfg.low_bins]
        return self.prosody_encoder(mel_low, utt.durations)

    def encode_timbre(self, mel_values: np.ndarray | torch.Tensor) -> torch.Tensor:
        mel = torch.as_tensor(mel_values, dtype=torch.float32)
        return self.timbre_encoder(mel)

    def encode_content(self, phonemes: list[int]) -> torch.Tensor:
        return self.content_encoder(torch.tensor(phonemes, dtype=torch.long))

    def reconstruct(
        self, utt: PhonemeUtterance, reference_mel: np.ndarray, timbre: torch.Tensor | None = None
    ):
        """Teacher-forced reconstruction with ground-truth durations.

        Returns (y_hat, losses_dict) where losses are the VQ terms and the
        duration predictor's log-domain loss.
        """
        codes, pros_hidden, cb_loss, commit_loss = self.encode_utterance(utt)
        content = self.encode_content(utt.phonemes)
        if timbre is None:
            timbre = self.encode_timbre(reference_mel)
        log_d = self.duration_predictor(content.detach(), pros_hidden.detach())
        frame_pros = length_regulate(pros_hidden, utt.durations)
        frame_content = length_regulate(content, utt.durations)
        y_hat = self.decoder(frame_pros, timbre, frame_content)
        losses = {
            "codebook": cb_loss,
            "commitment": commit_loss,
            "duration": DurationPredictor.loss(log_d, utt.durations),
            "codes": codes,
        }
        return y_hat, losses

    def training_step(
        self,
        batch: list[tuple[PhonemeUtterance, np.ndarray]],
        g_optimizer: torch.optim.Optimizer,
        d_optimizer: torch.optim.Optimizer,
        generator: torch.Generator | None = None,
    ) -> StepLosses:
        """One alternating generator/discriminator update over (utterance, reference mel) pairs."""
        self.train()
        g_terms, d_terms = [], []
        agg = {k: 0.0 for k in ("rec", "cb", "commit", "g_adv", "dur")}
        usage_inputs = []

        # generator pass
        for utt, ref_mel in batch:
            y = torch.from_numpy(utt.mel.values)
            y_hat, losses = self.reconstruct(utt, ref_mel)
            rec = F.mse_loss(y_hat, y)
            fake_scores = self.discriminator(y_hat, generator)
            g_adv = lsgan_g_loss(fake_scores)
            g_loss = (
                rec
                + losses["codebook"]
                + self.cfg.commit_weight * losses["commitment"]
                + self.cfg.adv_weight * g_adv
                + self.cfg.duration_weight * losses["duration"]
            )
            g_terms.append(g_loss)
            usage_inputs.append(losses["codes"])
            agg["rec"] += rec.detach().item()
            agg["cb"] += losses["codebook"].detach().item()
            agg["commit"] += losses["commitment"].detach().item()
            agg["g_adv"] += g_adv.detach().item()
            agg["dur"] += losses["duration"].detach().item()

        g_total = torch.stack(g_terms).mean()
        if not torch.isfinite(g_total):
            raise RuntimeError(f"non-finite generator loss: {agg}")
        g_optimizer.zero_grad()
        g_total.backward()
        g_optimizer.step()

        # discriminator pass on fresh forwards, generator frozen
        for utt, ref_mel in batch:
            y = torch.from_numpy(utt.mel.values)
            with torch.no_grad():
                y_hat, _ = self.reconstruct(utt, ref_mel)
            real_scores = self.discriminator(y, generator)
            fake_scores = self.discriminator(y_hat, generator)
            d_terms.append(lsgan_d_loss(real_scores, fake_scores))
        d_total = torch.stack(d_terms).mean()
        if not torch.isfinite(d_total):
            raise RuntimeError("non-finite discriminator loss")
        d_optimizer.zero_grad()
        d_total.backward()
        d_optimizer.step()

        # codebook health
        all_codes = torch.cat([c.reshape(-1) for c in usage_inputs])
        with torch.no_grad():
            sample_utt = batch[0][0]
            mel_low = torch.from_numpy(sample_utt.mel.values)[:, : self.cfg.low_bins]
            enc_out = self.prosody_encoder.pre_quant(mel_low, sample_utt.durations)
        self.prosody_encoder.quantizer.track_usage(all_codes, enc_out)

        n = len(batch)
        return StepLosses(
            total=g_total.detach().item() + d_total.detach().item(),
            reconstruction=agg["rec"] / n,
            codebook=agg["cb"] / n,
            commitment=agg["commit"] / n,
            adversarial_g=agg["g_adv"] / n,
            adversarial_d=d_total.detach().item(),
            duration=agg["dur"] / n,
        )

    def make_optimizers(self):
        cfg = self.cfg
        betas = (cfg.adam_beta1, cfg.adam_beta2)
        g_opt = torch.optim.Adam(self.generator_parameters(), lr=cfg.lr, betas=betas, eps=cfg.adam_eps)
        d_opt = torch.optim.Adam(self.discriminator.parameters(), lr=cfg.lr, betas=betas, eps=cfg.adam_eps)
        return g_opt, d_opt
