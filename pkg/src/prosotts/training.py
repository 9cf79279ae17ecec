"""Training loops for both stages, with CSV loss logs and resumable checkpoints."""

from __future__ import annotations

import csv
import logging
import random
from pathlib import Path

import numpy as np
import torch

from .checkpoint import load_stage1, load_stage2, save_checkpoint
from .configs import DisentanglerConfig, PLLMConfig
from .disentangler import Disentangler
from .manifest import Manifest, sample_reference
from .pllm import ProsodyLM

log = logging.getLogger(__name__)


def seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)


class LossLog:
    def __init__(self, path: Path | None, fieldnames: list[str]):
        self.path = path
        self.fieldnames = ["step", *fieldnames]
        self.rows: list[dict] = []
        if path is not None and not path.exists():
            with open(path, "w", newline="") as f:
                csv.DictWriter(f, self.fieldnames).writeheader()

    def append(self, step: int, **values) -> None:
        row = {"step": step, **values}
        self.rows.append(row)
        if self.path is not None:
            with open(self.path, "a", newline="") as f:
                csv.DictWriter(f, self.fieldnames).writerow(row)


class Stage1Trainer:
    def __init__(
        self,
        cfg: DisentanglerConfig,
        manifest: Manifest,
        seed: int = 0,
        out_dir: str | Path | None = None,
    ):
        self.cfg = cfg
        self.manifest = manifest
        self.seed = seed
        self.out_dir = Path(out_dir) if out_dir else None
        if self.out_dir:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        seed_everything(seed)
        self.model = Disentangler(cfg)
        self.g_opt, self.d_opt = self.model.make_optimizers()
        self.step = 0
        self.rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
        self.window_gen = torch.Generator().manual_seed(seed + 17)
        self.log = LossLog(
            self.out_dir / "stage1_losses.csv" if self.out_dir else None,
            ["total", "reconstruction", "codebook", "commitment", "adv_g", "adv_d", "duration"],
        )

    def sample_batch(self, batch_size: int):
        idx = self.rng.choice(len(self.manifest.records), size=batch_size, replace=True)
        batch = []
        for i in idx:
            utt = self.manifest.records[int(i)]
            ref = sample_reference(self.manifest, utt, self.rng, allow_self=True)
            batch.append((utt, ref.mel.values))
        return batch

    def run(self, steps: int, batch_size: int = 4, checkpoint_every: int = 0) -> list[dict]:
        for _ in range(steps):
            batch = self.sample_batch(batch_size)
            losses = self.model.training_step(batch, self.g_opt, self.d_opt, self.window_gen)
            self.step += 1
            self.log.append(
                self.step,
                total=losses.total,
                reconstruction=losses.reconstruction,
                codebook=losses.codebook,
                commitment=losses.commitment,
                adv_g=losses.adversarial_g,
                adv_d=losses.adversarial_d,
                duration=losses.duration,
            )
            if checkpoint_every and self.out_dir and self.step % checkpoint_every == 0:
                self.save(self.out_dir / f"stage1_step{self.step}.pt")
        if self.out_dir:
            self.save(self.out_dir / "stage1_latest.pt")
        return self.log.rows

    def save(self, path: str | Path) -> None:
        save_checkpoint(
            path,
            "stage1",
            self.model,
            self.cfg,
            self.step,
            optimizers={"generator": self.g_opt, "discriminator": self.d_opt},
            extra={
                "seed": self.seed,
                "np_rng": self.rng.bit_generator.state,
                "window_gen": self.window_gen.get_state(),
                "torch_rng": torch.get_rng_state(),
            },
        )

    @classmethod
    def resume(cls, path: str | Path, manifest: Manifest, out_dir: str | Path | None = None):
        model, payload = load_stage1(path)
        trainer = cls(model.cfg, manifest, seed=payload["extra"].get("seed", 0), out_dir=out_dir)
        trainer.model = model
        trainer.g_opt, trainer.d_opt = trainer.model.make_optimizers()
        trainer.g_opt.load_state_dict(payload["optimizers"]["generator"])
        trainer.d_opt.load_state_dict(payload["optimizers"]["discriminator"])
        trainer.step = payload["step"]
        if "np_rng" in payload["extra"]:
            trainer.rng.bit_generator.state = payload["extra"]["np_rng"]
        if "window_gen" in payload["extra"]:
            trainer.window_gen.set_state(payload["extra"]["window_gen"])
        if "torch_rng" in payload["extra"]:
            torch.set_rng_state(payload["extra"]["torch_rng"])
        return trainer


class Stage2Trainer:
    """Trains the prosody LM on codes from a frozen stage-1 model.

    Prompt history: up to `context_sentences` consecutive same-speaker
    utterances preceding the target, truncated (oldest first) to respect the
    position budget.
    """

    def __init__(
        self,
        cfg: PLLMConfig,
        stage1: Disentangler,
        manifest: Manifest,
        seed: int = 0,
        out_dir: str | Path | None = None,
        stop_weight: float = 0.1,
    ):
        self.cfg = cfg
        self.manifest = manifest
        self.seed = seed
        self.stop_weight = stop_weight
        self.out_dir = Path(out_dir) if out_dir else None
        if self.out_dir:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        seed_everything(seed)
        self.model = ProsodyLM(cfg)
        self.opt = self.model.make_optimizer()
        self.step = 0
        self.rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
        self.log = LossLog(
            self.out_dir / "stage2_losses.csv" if self.out_dir else None, ["loss", "stop_loss"]
        )
        self.stage1 = stage1.eval()
        for p in self.stage1.parameters():
            p.requires_grad_(False)
        self._encode_corpus()

    @torch.no_grad()
    def _encode_corpus(self) -> None:
        self.encoded = []
        for utt in self.manifest.records:
            codes, _, _, _ = self.stage1.encode_utterance(utt)
            content = self.stage1.encode_content(utt.phonemes)
            timbre = self.stage1.encode_timbre(utt.mel.values)
            self.encoded.append(
                {
                    "speaker": utt.speaker_id,
                    "codes": codes,
                    "content": content,
                    "timbre": timbre,
                }
            )
        self.by_speaker: dict[str, list[int]] = {}
        for i, e in enumerate(self.encoded):
            self.by_speaker.setdefault(e["speaker"], []).append(i)

    def _make_example(self):
        target_idx = int(self.rng.integers(len(self.encoded)))
        target = self.encoded[target_idx]
        group = self.by_speaker[target["speaker"]]
        pos = group.index(target_idx)
        history = group[max(0, pos - self.cfg.context_sentences) : pos]
        # shrink history until the sequence fits the position budget
        while True:
            if history:
                prompt_codes = torch.cat([self.encoded[i]["codes"] for i in history])
                prompt_content = torch.cat([self.encoded[i]["content"] for i in history])
                timbre = self.encoded[history[-1]]["timbre"]
            else:
                prompt_codes, prompt_content = None, None
                timbre = target["timbre"]
            length = (
                (prompt_codes.shape[0] * 2 + 2 if prompt_codes is not None else 0)
                + 1
                + 2 * target["content"].shape[0]
                + 2
            )
            if length <= self.cfg.max_positions or not history:
                break
            history = history[1:]
        return prompt_codes, prompt_content, timbre, target["content"], target["codes"]

    def run(self, steps: int, checkpoint_every: int = 0) -> list[dict]:
        self.model.train()
        for _ in range(steps):
            prompt_codes, prompt_content, timbre, target_content, target_codes = (
                self._make_example()
            )
            seq = self.model.build_sequence(prompt_codes, prompt_content, timbre, target_content)
            _, ce = self.model.forward_teacher_forced(seq, target_codes)
            stop = self.model.stop_loss(seq, target_codes)
            loss = ce + self.stop_weight * stop
            if not torch.isfinite(loss):
                raise RuntimeError(f"non-finite loss at step {self.step}")
            self.opt.zero_grad()
            loss.backward()
            self.opt.step()
            self.step += 1
            self.log.append(self.step, loss=ce.detach().item(), stop_loss=stop.detach().item())
            if checkpoint_every and self.out_dir and self.step % checkpoint_every == 0:
                self.save(self.out_dir / f"stage2_step{self.step}.pt")
        if self.out_dir:
            self.save(self.out_dir / "stage2_latest.pt")
        return self.log.rows

    def save(self, path: str | Path) -> None:
        save_checkpoint(
            path,
            "stage2",
            self.model,
            self.cfg,
            self.step,
            optimizers={"adam": self.opt},
            extra={
                "seed": self.seed,
                "np_rng": self.rng.bit_generator.state,
                "torch_rng": torch.get_rng_state(),
            },
        )

    @classmethod
    def resume(
        cls,
        path: str | Path,
        stage1: Disentangler,
        manifest: Manifest,
        out_dir: str | Path | None = None,
    ):
        model, payload = load_stage2(path)
        trainer = cls(
            model.cfg, stage1, manifest, seed=payload["extra"].get("seed", 0), out_dir=out_dir
        )
        trainer.model = model
        trainer.opt = trainer.model.make_optimizer()
        trainer.opt.load_state_dict(payload["optimizers"]["adam"])
        trainer.step = payload["step"]
        if "np_rng" in payload["extra"]:
            trainer.rng.bit_generator.state = payload["extra"]["np_rng"]
        if "torch_rng" in payload["extra"]:
            torch.set_rng_state(payload["extra"]["torch_rng"])
        return trainer
