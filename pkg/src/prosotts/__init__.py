"""Factorized speech synthesis lab: VQ acoustic model, prosody code LM, editing, metrics."""

from .configs import DisentanglerConfig, PLLMConfig
from .manifest import Manifest, PhonemeUtterance, load_manifest, sample_reference, save_manifest
from .mel import MelSpectrogram, extract_mel, load_mel, save_mel, slice_low_band
from .pipeline import EditRegion, InferencePipeline, SynthesisRequest
from .synthetic import MarkovProsodyProcess, SyntheticFactorSpec, generate_synthetic_dataset

__all__ = [
    "DisentanglerConfig",
    "PLLMConfig",
    "Manifest",
    "PhonemeUtterance",
    "load_manifest",
    "save_manifest",
    "sample_reference",
    "MelSpectrogram",
    "extract_mel",
    "load_mel",
    "save_mel",
    "slice_low_band",
    "EditRegion",
    "InferencePipeline",
    "SynthesisRequest",
    "MarkovProsodyProcess",
    "SyntheticFactorSpec",
    "generate_synthetic_dataset",
]
