"""End-to-end decoding: zero-shot synthesis, cross-lingual synthesis, and likelihood-scored editing."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import torch

from .disentangler import Disentangler
from .manifest import PhonemeUtterance
from .mel import MelSpectrogram
from .modules.duration import length_regulate
from .pllm import PLLMSequence, ProsodyLM

MAX_CANDIDATES = 4096


class PipelineError(ValueError):
    pass


@dataclass
class SynthesisRequest:
    prompt: PhonemeUtterance
    target_phonemes: list[int]
    top_k: int = 5
    seed: int = 0

    def __post_init__(self):
        if not self.prompt.phonemes or not self.target_phonemes:
            raise PipelineError("prompt and target must be non-empty")


@dataclass
class EditRegion:
    """Half-open span [left, right) of the original transcript to replace."""

    left: int
    right: int
    total: int

    def __post_init__(self):
        if not (0 <= self.left <= self.right <= self.total):
            raise PipelineError(
                f"invalid edit region [{self.left}, {self.right}) of {self.total}"
            )


@dataclass
class SynthesisResult:
    mel: MelSpectrogram
    codes: list[int]
    durations: list[int]
    # indices of target phonemes in emission order, for structural audits
    emitted_indices: list[int] = field(default_factory=list)
    selected_candidate: int | None = None
    selected_score: float | None = None


def derive_generator(seed: int, *stream: int) -> torch.Generator:
    """Deterministic sub-stream generator; parallel and serial runs agree."""
    ss = np.random.SeedSequence([seed, *stream])
    g = torch.Generator()
    g.manual_seed(int(ss.generate_state(1, dtype=np.uint64)[0] & 0x7FFF_FFFF_FFFF_FFFF))
    return g


class InferencePipeline:
    """Frozen-model decoding; every output is a pure function of (models, request, seed)."""

    def __init__(self, acoustic: Disentangler, prosody_lm: ProsodyLM):
        if acoustic.cfg.codebook_size != prosody_lm.cfg.codebook_size:
            raise PipelineError(
                f"codebook mismatch: acoustic model has {acoustic.cfg.codebook_size} "
                f"entries, prosody LM expects {prosody_lm.cfg.codebook_size}"
            )
        if acoustic.cfg.content_hidden != prosody_lm.cfg.content_dim:
            raise PipelineError("content dimension mismatch between the two models")
        if acoustic.cfg.timbre_hidden != prosody_lm.cfg.timbre_dim:
            raise PipelineError("timbre dimension mismatch between the two models")
        self.acoustic = acoustic.eval()
        self.prosody_lm = prosody_lm.eval()

    # ----------------------------------------------------------------- pieces
    @torch.no_grad()
    def _decode(
        self,
        codes: torch.Tensor,
        durations: list[int],
        content: torch.Tensor,
        timbre: torch.Tensor,
    ) -> MelSpectrogram:
        pros_hidden = self.acoustic.prosody_encoder.hidden_from_codes(codes)
        frame_pros = length_regulate(pros_hidden, durations)
        frame_content = length_regulate(content, durations)
        mel = self.acoustic.decoder(frame_pros, timbre, frame_content)
        return MelSpectrogram(mel.numpy())

    @torch.no_grad()
    def _predict_durations(self, content: torch.Tensor, codes: torch.Tensor) -> list[int]:
        pros_hidden = self.acoustic.prosody_encoder.hidden_from_codes(codes)
        return self.acoustic.duration_predictor.predict(content, pros_hidden)

    # -------------------------------------------------------------- synthesis
    @torch.no_grad()
    def synthesize_zero_shot(
        self,
        request: SynthesisRequest,
        force_codes: list[int] | None = None,
        force_durations: list[int] | None = None,
    ) -> SynthesisResult:
        prompt = request.prompt
        prompt_codes, _, _, _ = self.acoustic.encode_utterance(prompt)
        prompt_content = self.acoustic.encode_content(prompt.phonemes)
        timbre = self.acoustic.encode_timbre(prompt.mel.values)
        target_content = self.acoustic.encode_content(request.target_phonemes)

        if force_codes is not None:
            codes = torch.tensor(force_codes, dtype=torch.long)
        else:
            seq = self.prosody_lm.build_sequence(
                prompt_codes, prompt_content, timbre, target_content
            )
            codes = self.prosody_lm.sample_topk(
                seq, request.top_k, derive_generator(request.seed, 0)
            )
        durations = (
            list(force_durations)
            if force_durations is not None
            else self._predict_durations(target_content, codes)
        )
        if len(durations) != len(request.target_phonemes):
            raise PipelineError("duration count does not match target phonemes")
        mel = self._decode(codes, durations, target_content, timbre)
        return SynthesisResult(
            mel=mel,
            codes=[int(c) for c in codes],
            durations=durations,
            emitted_indices=list(range(len(request.target_phonemes))),
        )

    def synthesize_cross_lingual(self, request: SynthesisRequest, **kwargs) -> SynthesisResult:
        """Identical procedure; prompt and target vocabularies share one union table."""
        return self.synthesize_zero_shot(request, **kwargs)

    # ---------------------------------------------------------------- editing
    def _candidate_paths(
        self,
        seq: PLLMSequence,
        left_codes: torch.Tensor,
        mask_len: int,
        n_candidates: int,
        top_k: int,
        seed: int,
        exhaustive: bool,
    ) -> list[torch.Tensor]:
        vocab = self.prosody_lm.cfg.codebook_size
        total_paths = vocab**mask_len
        if exhaustive or total_paths <= n_candidates:
            if total_paths > MAX_CANDIDATES:
                raise PipelineError(
                    f"cannot enumerate {total_paths} paths (limit {MAX_CANDIDATES})"
                )
            return [
                torch.tensor(p, dtype=torch.long)
                for p in itertools.product(range(vocab), repeat=mask_len)
            ]
        paths = []
        for i in range(n_candidates):
            gen = derive_generator(seed, 1, i)
            codes = left_codes.clone()
            with torch.no_grad():
                for _ in range(mask_len):
                    logits = self.prosody_lm.code_logits(seq, codes)[-1]
                    top_vals, top_idx = torch.topk(logits, top_k)
                    probs = torch.softmax(top_vals, dim=-1)
                    pick = top_idx[torch.multinomial(probs, 1, generator=gen)]
                    codes = torch.cat([codes, pick])
            paths.append(codes[left_codes.shape[0] :])
        return paths

    @torch.no_grad()
    def _suffix_score(self, seq: PLLMSequence, codes: torch.Tensor, start: int) -> float:
        """Sum of log p(code_t | codes_<t, conditioning) for t >= start."""
        logits = self.prosody_lm.code_logits(seq, codes[:-1])
        logp = torch.log_softmax(logits, dim=-1)
        steps = torch.arange(start, codes.shape[0])
        return float(logp[steps, codes[start:]].sum())

    @torch.no_grad()
    def edit_speech(
        self,
        utterance: PhonemeUtterance,
        region: EditRegion,
        new_phonemes: list[int],
        n_candidates: int = 16,
        seed: int = 0,
        top_k: int | None = None,
        exhaustive: bool = False,
    ) -> SynthesisResult:
        """Replace phonemes [left, right) with new_phonemes, choosing the prosody
        path that maximizes candidate likelihood times the likelihood it assigns
        to the ground-truth codes right of the mask."""
        if region.total != len(utterance.phonemes):
            raise PipelineError(
                f"region declares {region.total} phonemes but utterance has "
                f"{len(utterance.phonemes)}"
            )
        if n_candidates < 1:
            raise PipelineError("need at least one candidate")
        if n_candidates > MAX_CANDIDATES:
            raise PipelineError(f"candidate count exceeds {MAX_CANDIDATES}")
        top_k = self.prosody_lm.cfg.top_k if top_k is None else top_k

        gt_codes, _, _, _ = self.acoustic.encode_utterance(utterance)
        edited_phonemes = (
            utterance.phonemes[: region.left]
            + list(new_phonemes)
            + utterance.phonemes[region.right :]
        )
        mask_start = region.left
        mask_len = len(new_phonemes)
        left_codes = gt_codes[: region.left]
        right_codes = gt_codes[region.right :]
        right_durations = utterance.durations[region.right :]
        left_durations = utterance.durations[: region.left]

        timbre = self.acoustic.encode_timbre(utterance.mel.values)
        prompt_content = self.acoustic.encode_content(utterance.phonemes)
        edited_content = self.acoustic.encode_content(edited_phonemes)
        seq = self.prosody_lm.build_sequence(
            gt_codes, prompt_content, timbre, edited_content
        )

        if mask_len == 0:
            best_path = torch.empty(0, dtype=torch.long)
            best_idx, best_score = 0, 0.0
        else:
            paths = self._candidate_paths(
                seq, left_codes, mask_len, n_candidates, top_k, seed, exhaustive
            )
            scores = []
            for path in paths:
                full = torch.cat([left_codes, path, right_codes])
                scores.append(self._suffix_score(seq, full, mask_start))
            best_idx = int(np.argmax(scores))
            best_path, best_score = paths[best_idx], scores[best_idx]

        final_codes = torch.cat([left_codes, best_path, right_codes])
        if mask_len > 0:
            predicted = self._predict_durations(edited_content, final_codes)
            mask_durations = predicted[mask_start : mask_start + mask_len]
        else:
            mask_durations = []
        durations = left_durations + mask_durations + right_durations
        mel = self._decode(final_codes, durations, edited_content, timbre)
        return SynthesisResult(
            mel=mel,
            codes=[int(c) for c in final_codes],
            durations=durations,
            emitted_indices=list(range(len(edited_phonemes))),
            selected_candidate=best_idx,
            selected_score=float(best_score),
        )
