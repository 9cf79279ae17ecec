"""Utterance records, line-delimited manifests, and same-speaker reference sampling."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mel import MelSpectrogram, load_mel, save_mel

log = logging.getLogger(__name__)


class ManifestError(ValueError):
    pass


@dataclass
class PhonemeUtterance:
    utterance_id: str
    speaker_id: str
    phonemes: list[int]
    durations: list[int]
    mel: MelSpectrogram
    # ground-truth latent factors for synthetic data; None for real corpora
    factors: dict | None = None

    def __post_init__(self):
        if len(self.durations) != len(self.phonemes):
            raise ManifestError(
                f"{self.utterance_id}: {len(self.durations)} durations for "
                f"{len(self.phonemes)} phonemes"
            )
        if any(d < 0 for d in self.durations):
            raise ManifestError(f"{self.utterance_id}: negative duration")
        if sum(self.durations) != self.mel.frames:
            raise ManifestError(
                f"{self.utterance_id}: durations sum to {sum(self.durations)} "
                f"but mel has {self.mel.frames} frames"
            )


@dataclass
class Manifest:
    records: list[PhonemeUtterance]

    def __len__(self) -> int:
        return len(self.records)

    def by_speaker(self) -> dict[str, list[PhonemeUtterance]]:
        groups: dict[str, list[PhonemeUtterance]] = {}
        for rec in self.records:
            groups.setdefault(rec.speaker_id, []).append(rec)
        return groups

    def get(self, utterance_id: str) -> PhonemeUtterance:
        for rec in self.records:
            if rec.utterance_id == utterance_id:
                return rec
        raise KeyError(utterance_id)


def save_manifest(manifest: Manifest, path: str | Path, mel_dir: str | Path) -> None:
    """Write one JSON record per line; mel matrices go to <mel_dir>/<utterance_id>.mel."""
    path = Path(path)
    mel_dir = Path(mel_dir)
    mel_dir.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        for rec in manifest.records:
            mel_path = mel_dir / f"{rec.utterance_id}.mel"
            save_mel(rec.mel, mel_path)
            row = {
                "utterance_id": rec.utterance_id,
                "speaker_id": rec.speaker_id,
                "phonemes": " ".join(str(p) for p in rec.phonemes),
                "durations": " ".join(str(d) for d in rec.durations),
                "mel_path": str(mel_path),
            }
            if rec.factors is not None:
                row["factors"] = rec.factors
            f.write(json.dumps(row) + "\n")


def load_manifest(path: str | Path) -> Manifest:
    """Load a line-delimited manifest; invalid records raise ManifestError naming the utterance."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    records = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as e:
                raise ManifestError(f"{path}:{lineno}: unparseable record: {e}") from e
            missing = {"utterance_id", "speaker_id", "phonemes", "durations", "mel_path"} - set(row)
            if missing:
                raise ManifestError(
                    f"{path}:{lineno}: missing fields {sorted(missing)}"
                )
            mel_path = Path(row["mel_path"])
            if not mel_path.is_absolute():
                mel_path = path.parent / mel_path
            records.append(
                PhonemeUtterance(
                    utterance_id=row["utterance_id"],
                    speaker_id=row["speaker_id"],
                    phonemes=[int(p) for p in row["phonemes"].split()],
                    durations=[int(d) for d in row["durations"].split()],
                    mel=load_mel(mel_path),
                    factors=row.get("factors"),
                )
            )
    if not records:
        log.warning("manifest %s is empty", path)
    return Manifest(records)


def sample_reference(
    manifest: Manifest,
    utterance: PhonemeUtterance,
    rng: np.random.Generator,
    allow_self: bool = False,
) -> PhonemeUtterance:
    """Uniformly pick a different utterance of the same speaker.

    A singleton speaker group is an error unless allow_self is set, in which
    case the utterance stands in as its own reference (with a warning).
    """
    group = [
        rec
        for rec in manifest.by_speaker().get(utterance.speaker_id, [])
        if rec.utterance_id != utterance.utterance_id
    ]
    if not group:
        if allow_self:
            log.warning(
                "speaker %s has a single utterance; using %s as its own reference",
                utterance.speaker_id,
                utterance.utterance_id,
            )
            return utterance
        raise ManifestError(
            f"speaker {utterance.speaker_id} has no other utterance to reference; "
            "pass allow_self=True to fall back to self-reference"
        )
    return group[rng.integers(len(group))]
