import numpy as np
import pytest
import torch

from prosotts.configs import DisentanglerConfig, PLLMConfig
from prosotts.disentangler import Disentangler
from prosotts.pllm import ProsodyLM
from prosotts.synthetic import SyntheticFactorSpec, generate_synthetic_dataset


def toy_disentangler_config(**overrides) -> DisentanglerConfig:
    base = dict(
        phoneme_vocab_size=12,
        prosody_layers=2,
        prosody_hidden=32,
        content_layers=2,
        content_hidden=32,
        content_heads=2,
        content_filter=64,
        timbre_layers=2,
        timbre_hidden=32,
        timbre_kernel=9,
        duration_hidden=32,
        decoder_layers=2,
        decoder_hidden=32,
        codebook_size=16,
        code_dim=8,
        disc_windows=(8, 16, 32),
        disc_hidden=16,
    )
    base.update(overrides)
    return DisentanglerConfig(**base)


def toy_pllm_config(**overrides) -> PLLMConfig:
    base = dict(
        layers=2,
        heads=2,
        hidden=32,
        filter=64,
        codebook_size=16,
        content_dim=32,
        timbre_dim=32,
        max_positions=512,
    )
    base.update(overrides)
    return PLLMConfig(**base)


@pytest.fixture
def toy_cfg():
    return toy_disentangler_config()


@pytest.fixture
def toy_model(toy_cfg):
    torch.manual_seed(0)
    return Disentangler(toy_cfg)


@pytest.fixture
def toy_lm():
    torch.manual_seed(0)
    return ProsodyLM(toy_pllm_config())


@pytest.fixture(scope="session")
def synth_manifest():
    return generate_synthetic_dataset(
        SyntheticFactorSpec(n_speakers=4, utterances_per_speaker=6)
    )


@pytest.fixture
def rng():
    return np.random.default_rng(0)
