"""Dataclass configs for both model stages, with INI-style file round-tripping."""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path


@dataclass
class DisentanglerConfig:
    """First-stage acoustic model hyperparameters."""

    # mel front end
    n_mels: int = 80
    low_bins: int = 20
    phoneme_vocab_size: int = 100

    # prosody encoder
    prosody_layers: int = 5
    prosody_hidden: int = 320
    prosody_kernel: int = 5
    codebook_size: int = 2048  # K
    code_dim: int = 256  # d

    # content encoder
    content_layers: int = 4
    content_hidden: int = 320
    content_heads: int = 2
    content_filter: int = 1280
    content_kernel: int = 5

    # timbre encoder
    timbre_layers: int = 5
    timbre_hidden: int = 320
    timbre_kernel: int = 31

    # duration predictor
    duration_layers: int = 3
    duration_hidden: int = 320
    duration_kernel: int = 3

    # mel decoder
    decoder_layers: int = 5
    decoder_hidden: int = 320
    decoder_kernel: int = 5

    # multi-window discriminator
    disc_windows: tuple[int, ...] = (32, 64, 128)
    disc_conv_layers: int = 3
    disc_hidden: int = 192

    # loss weights (config-exposed; not fixed by the training objective)
    commit_weight: float = 0.25
    adv_weight: float = 0.05
    duration_weight: float = 1.0

    # optimization
    lr: float = 2e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.98
    adam_eps: float = 1e-9
    total_steps: int = 320_000
    dead_code_steps: int = 200

    def validate(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, int) and f.name not in () and v <= 0 and "weight" not in f.name:
                raise ValueError(f"{f.name} must be positive, got {v}")
        if list(self.disc_windows) != sorted(self.disc_windows):
            raise ValueError("disc_windows must be sorted ascending")
        if self.codebook_size < 2:
            raise ValueError("codebook_size must be >= 2")


@dataclass
class PLLMConfig:
    """Prosody code language model hyperparameters."""

    layers: int = 8
    heads: int = 8
    hidden: int = 512
    filter: int = 2048
    kernel: int = 5
    codebook_size: int = 2048
    # embedding table has two extra rows for BOS / EOS
    context_sentences: int = 7
    max_positions: int = 1024
    top_k: int = 5
    content_dim: int = 320
    timbre_dim: int = 320

    lr: float = 2e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.98
    adam_eps: float = 1e-9
    total_steps: int = 100_000

    @property
    def n_embeddings(self) -> int:
        return self.codebook_size + 2

    @property
    def bos_id(self) -> int:
        return self.codebook_size

    @property
    def eos_id(self) -> int:
        return self.codebook_size + 1

    def validate(self) -> None:
        if min(self.layers, self.heads, self.hidden, self.filter, self.kernel) <= 0:
            raise ValueError("model dimensions must be positive")
        if not (1 <= self.top_k <= self.codebook_size):
            raise ValueError(f"top_k must be in [1, {self.codebook_size}]")


def _to_ini_value(v):
    if isinstance(v, (tuple, list)):
        return " ".join(str(x) for x in v)
    return str(v)


def _from_ini_value(raw: str, f: dataclasses.Field):
    if f.type in ("int", int):
        return int(raw)
    if f.type in ("float", float):
        return float(raw)
    if "tuple" in str(f.type):
        return tuple(int(x) for x in raw.split())
    return raw


def save_config(path: str | Path, **sections) -> None:
    """Write dataclass configs as INI sections, e.g. save_config(p, stage1=cfg)."""
    parser = configparser.ConfigParser()
    for name, cfg in sections.items():
        parser[name] = {f.name: _to_ini_value(getattr(cfg, f.name)) for f in fields(cfg)}
    with open(path, "w") as f:
        parser.write(f)


def load_config(path: str | Path, section: str, cls):
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise FileNotFoundError(f"config not found: {path}")
    if section not in parser:
        raise KeyError(f"section [{section}] missing in {path}")
    kwargs = {}
    for f in fields(cls):
        if f.name in parser[section]:
            kwargs[f.name] = _from_ini_value(parser[section][f.name], f)
    return cls(**kwargs)


def config_hash(cfg) -> str:
    """Stable digest of a config dataclass, embedded into checkpoints."""
    payload = json.dumps(dataclasses.asdict(cfg), sort_keys=True, default=list)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]
