"""Versioned checkpoint container shared by both training stages."""

from __future__ import annotations

import dataclasses
from pathlib import Path

import torch

from .configs import DisentanglerConfig, PLLMConfig, config_hash
from .disentangler import Disentangler
from .pllm import ProsodyLM

CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(
    path: str | Path,
    kind: str,
    model: torch.nn.Module,
    cfg,
    step: int,
    optimizers: dict[str, torch.optim.Optimizer] | None = None,
    extra: dict | None = None,
) -> None:
    payload = {
        "version": CHECKPOINT_VERSION,
        "kind": kind,
        "config": dataclasses.asdict(cfg),
        "config_hash": config_hash(cfg),
        "step": step,
        "model": model.state_dict(),
        "optimizers": {
            name: opt.state_dict() for name, opt in (optimizers or {}).items()
        },
        "extra": extra or {},
    }
    torch.save(payload, str(path))


def _load(path: str | Path, kind: str) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    payload = torch.load(str(path), map_location="cpu", weights_only=False)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {payload.get('version')}")
    if payload.get("kind") != kind:
        raise CheckpointError(f"{path}: expected a {kind} checkpoint, found {payload.get('kind')}")
    return payload


def load_stage1(path: str | Path, expect_hash: str | None = None):
    """Returns (model, payload); payload keeps optimizer state for resuming."""
    payload = _load(path, "stage1")
    cfg = DisentanglerConfig(**payload["config"])
    cfg.disc_windows = tuple(cfg.disc_windows)
    if expect_hash is not None and config_hash(cfg) != expect_hash:
        raise CheckpointError(f"{path}: config hash mismatch")
    model = Disentangler(cfg)
    model.load_state_dict(payload["model"])
    return model, payload


def load_stage2(path: str | Path, expect_hash: str | None = None):
    payload = _load(path, "stage2")
    cfg = PLLMConfig(**payload["config"])
    if expect_hash is not None and config_hash(cfg) != expect_hash:
        raise CheckpointError(f"{path}: config hash mismatch")
    model = ProsodyLM(cfg)
    model.load_state_dict(payload["model"])
    return model, payload
