"""Bottleneck hyperparameter sweep: train, shuffle timbre, measure disentanglement."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .configs import DisentanglerConfig
from .disentangler import Disentangler
from .evaluation import (
    TimbreEmbedder,
    contour_from_factors,
    contour_from_synthetic_mel,
    dtw_distance,
    high_band_profile,
    speaker_similarity,
)
from .manifest import Manifest
from .mel import MelSpectrogram
from .modules.duration import length_regulate
from .training import Stage1Trainer

log = logging.getLogger(__name__)


@dataclass
class SweepRow:
    code_dim: int
    codebook_size: int
    seed: int
    pitch_dtw: float
    speaker_cos: float
    diverged: bool = False


def _cross_speaker_shuffle(manifest: Manifest, rng: np.random.Generator) -> list[int]:
    """Permutation assigning every utterance a timbre source from another speaker."""
    n = len(manifest.records)
    speakers = [r.speaker_id for r in manifest.records]
    for _ in range(200):
        perm = rng.permutation(n)
        if all(speakers[i] != speakers[perm[i]] for i in range(n)):
            return [int(p) for p in perm]
    # fall back to rotating across speaker groups
    order = sorted(range(n), key=lambda i: speakers[i])
    rotated = order[n // 2 :] + order[: n // 2]
    return [rotated[order.index(i)] for i in range(n)]


@torch.no_grad()
def shuffled_timbre_metrics(
    model: Disentangler,
    manifest: Manifest,
    rng: np.random.Generator,
    n_states: int = 8,
    embedder=None,
) -> tuple[float, float]:
    """(mean pitch DTW vs ground truth, mean speaker cosine vs shuffled source).

    `embedder` defaults to the model's own timbre encoder; pass a fixed
    function (e.g. `high_band_profile`) when comparing across models.
    """
    model.eval()
    perm = _cross_speaker_shuffle(manifest, rng)
    if embedder is None:
        embedder = TimbreEmbedder(model)
    pitch_dists, cosines = [], []
    for i, utt in enumerate(manifest.records):
        source = manifest.records[perm[i]]
        codes, pros_hidden, _, _ = model.encode_utterance(utt)
        content = model.encode_content(utt.phonemes)
        timbre = model.encode_timbre(source.mel.values)
        frame_pros = length_regulate(model.prosody_encoder.hidden_from_codes(codes), utt.durations)
        frame_content = length_regulate(content, utt.durations)
        y_hat = MelSpectrogram(model.decoder(frame_pros, timbre, frame_content).numpy())
        pitch_dists.append(
            dtw_distance(contour_from_synthetic_mel(y_hat, n_states), contour_from_factors(utt))
            / utt.mel.frames
        )
        cosines.append(speaker_similarity(y_hat, source.mel, embedder))
    return float(np.mean(pitch_dists)), float(np.mean(cosines))


def disentanglement_sweep(
    configs: list[tuple[int, int]],
    manifest: Manifest,
    base_cfg: DisentanglerConfig,
    seeds: list[int],
    steps: int = 400,
    batch_size: int = 4,
    n_states: int = 8,
    eval_manifest: Manifest | None = None,
    embedder=high_band_profile,
) -> list[SweepRow]:
    """Train one model per (code_dim, codebook_size, seed) and report both metrics.

    Metrics are computed on `eval_manifest` (defaults to the training manifest;
    pass held-out utterances to rule out memorization through the content
    encoder) with a fixed embedder so rows are comparable across configs.
    """
    eval_manifest = eval_manifest or manifest
    rows = []
    for code_dim, codebook_size in configs:
        cfg = dataclasses.replace(base_cfg, code_dim=code_dim, codebook_size=codebook_size)
        for seed in seeds:
            trainer = Stage1Trainer(cfg, manifest, seed=seed)
            try:
                trainer.run(steps, batch_size=batch_size)
                rng = np.random.default_rng(np.random.SeedSequence([seed, 99]))
                pitch, cos = shuffled_timbre_metrics(
                    trainer.model, eval_manifest, rng, n_states, embedder=embedder
                )
                rows.append(SweepRow(code_dim, codebook_size, seed, pitch, cos))
            except RuntimeError as e:
                log.warning("config %dx%d seed %d diverged: %s", code_dim, codebook_size, seed, e)
                rows.append(SweepRow(code_dim, codebook_size, seed, float("inf"), -1.0, True))
    return rows


def write_sweep_table(rows: list[SweepRow], path: str | Path) -> None:
    """Delimiter-separated comparison table, one row per (config, seed)."""
    with open(path, "w") as f:
        f.write("code_dim\tcodebook_size\tseed\tpitch_dtw\tspeaker_cos\tdiverged\n")
        for r in rows:
            f.write(
                f"{r.code_dim}\t{r.codebook_size}\t{r.seed}\t"
                f"{r.pitch_dtw:.4f}\t{r.speaker_cos:.4f}\t{int(r.diverged)}\n"
            )
