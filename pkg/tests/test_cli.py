import json

import numpy as np
import pytest

from prosotts.cli import main
from prosotts.manifest import load_manifest
from prosotts.mel import MelSpectrogram, load_mel, save_mel

STAGE1_OVERRIDES = json.dumps(
    {
        "phoneme_vocab_size": 12,
        "prosody_layers": 2,
        "prosody_hidden": 32,
        "content_layers": 2,
        "content_hidden": 32,
        "content_heads": 2,
        "content_filter": 64,
        "timbre_layers": 2,
        "timbre_hidden": 32,
        "timbre_kernel": 9,
        "duration_hidden": 32,
        "decoder_layers": 2,
        "decoder_hidden": 32,
        "codebook_size": 16,
        "code_dim": 8,
        "disc_windows": [8, 16, 32],
        "disc_hidden": 16,
    }
)
STAGE2_OVERRIDES = json.dumps(
    {
        "layers": 2,
        "heads": 2,
        "hidden": 32,
        "filter": 64,
        "codebook_size": 16,
        "content_dim": 32,
        "timbre_dim": 32,
        "max_positions": 512,
    }
)


@pytest.fixture
def workspace(tmp_path, monkeypatch):
    monkeypatch.setenv("MEGA_LAB_HOME", str(tmp_path))
    return tmp_path


def prepare(workspace, out="data", speakers=2, per_speaker=3):
    code = main(
        [
            "prepare",
            "--synthetic",
            "--speakers",
            str(speakers),
            "--per-speaker",
            str(per_speaker),
            "--out",
            out,
        ]
    )
    assert code == 0
    return workspace / out / "manifest.jsonl"


def train_stage1(workspace, manifest, out="s1", steps=2):
    code = main(
        [
            "train",
            "--stage",
            "1",
            "--manifest",
            str(manifest),
            "--steps",
            str(steps),
            "--batch-size",
            "2",
            "--overrides",
            STAGE1_OVERRIDES,
            "--out",
            out,
        ]
    )
    assert code == 0
    return workspace / out / "stage1_latest.pt"


def train_stage2(workspace, manifest, stage1_ckpt, out="s2", steps=2):
    code = main(
        [
            "train",
            "--stage",
            "2",
            "--manifest",
            str(manifest),
            "--steps",
            str(steps),
            "--stage1-ckpt",
            str(stage1_ckpt),
            "--overrides",
            STAGE2_OVERRIDES,
            "--out",
            out,
        ]
    )
    assert code == 0
    return workspace / out / "stage2_latest.pt"


class TestPrepare:
    def test_synthetic_writes_manifest(self, workspace, capsys):
        path = prepare(workspace)
        out = capsys.readouterr().out
        assert "6 records, 2 speakers" in out
        manifest = load_manifest(path)
        assert len(manifest) == 6
        assert (workspace / "data" / "run_record_prepare.json").exists()

    def test_deterministic(self, workspace):
        a = load_manifest(prepare(workspace, out="a"))
        b = load_manifest(prepare(workspace, out="b"))
        for ra, rb in zip(a.records, b.records):
            assert ra.mel.values.tobytes() == rb.mel.values.tobytes()

    def test_no_source_is_validation_error(self, workspace):
        assert main(["prepare", "--out", "x"]) == 2

    def test_raw_bad_columns_reports_line(self, workspace, capsys):
        raw = workspace / "corpus.tsv"
        raw.write_text("u0\ts0\t1 2\n")
        assert main(["prepare", "--raw", str(raw), "--out", "x"]) == 2
        assert "corpus.tsv:1" in capsys.readouterr().err

    def test_raw_round_trip(self, workspace):
        mel_dir = workspace / "rawmels"
        mel_dir.mkdir()
        rng = np.random.default_rng(0)
        lines = []
        for i in range(2):
            mel = MelSpectrogram(rng.normal(size=(8, 80)).astype(np.float32))
            save_mel(mel, mel_dir / f"u{i}.mel")
            lines.append(f"u{i}\ts0\t1 2\t3 5\trawmels/u{i}.mel")
        raw = workspace / "corpus.tsv"
        raw.write_text("\n".join(lines) + "\n")
        assert main(["prepare", "--raw", str(raw), "--out", "conv"]) == 0
        manifest = load_manifest(workspace / "conv" / "manifest.jsonl")
        assert len(manifest) == 2
        assert manifest.get("u1").durations == [3, 5]


class TestTrain:
    def test_stage1_writes_checkpoint_and_log(self, workspace):
        manifest = prepare(workspace)
        ckpt = train_stage1(workspace, manifest)
        assert ckpt.exists()
        assert (workspace / "s1" / "stage1_losses.csv").exists()
        assert not (workspace / "s1" / ".lock").exists()  # lock released

    def test_stage2_requires_stage1_ckpt(self, workspace):
        manifest = prepare(workspace)
        code = main(
            ["train", "--stage", "2", "--manifest", str(manifest), "--steps", "1", "--out", "x"]
        )
        assert code == 3

    def test_stage2_trains_from_stage1(self, workspace):
        manifest = prepare(workspace)
        s1 = train_stage1(workspace, manifest)
        s2 = train_stage2(workspace, manifest, s1)
        assert s2.exists()

    def test_missing_manifest_is_validation_error(self, workspace):
        code = main(
            [
                "train",
                "--stage",
                "1",
                "--manifest",
                str(workspace / "nope.jsonl"),
                "--steps",
                "1",
                "--out",
                "x",
            ]
        )
        assert code == 2

    def test_locked_directory_fails(self, workspace):
        manifest = prepare(workspace)
        out = workspace / "locked"
        out.mkdir()
        (out / ".lock").write_text("9999")
        code = main(
            [
                "train",
                "--stage",
                "1",
                "--manifest",
                str(manifest),
                "--steps",
                "1",
                "--overrides",
                STAGE1_OVERRIDES,
                "--out",
                str(out),
            ]
        )
        assert code == 1


class TestSynthEdit:
    @pytest.fixture
    def trained(self, workspace):
        manifest = prepare(workspace)
        s1 = train_stage1(workspace, manifest)
        s2 = train_stage2(workspace, manifest, s1)
        return manifest, s1, s2

    def test_synth_writes_artifacts(self, workspace, trained):
        manifest, s1, s2 = trained
        phon = workspace / "phonemes.txt"
        phon.write_text("1 2 3 4")
        utt_id = load_manifest(manifest).records[0].utterance_id
        code = main(
            [
                "synth",
                "--stage1",
                str(s1),
                "--stage2",
                str(s2),
                "--manifest",
                str(manifest),
                "--prompt",
                utt_id,
                "--text-phonemes",
                str(phon),
                "--out",
                "synth_out",
            ]
        )
        assert code == 0
        out = workspace / "synth_out"
        assert (out / "synth.wav").exists()
        mel = load_mel(out / "synth.mel")
        assert mel.bins == 80

    def test_synth_missing_checkpoint(self, workspace, trained):
        manifest, s1, _ = trained
        phon = workspace / "p.txt"
        phon.write_text("1")
        code = main(
            [
                "synth",
                "--stage1",
                str(s1),
                "--stage2",
                str(workspace / "missing.pt"),
                "--manifest",
                str(manifest),
                "--prompt",
                "x",
                "--text-phonemes",
                str(phon),
                "--out",
                "y",
            ]
        )
        assert code == 3

    def test_synth_incompatible_checkpoints(self, workspace, trained):
        manifest, s1, _ = trained
        phon = workspace / "p.txt"
        phon.write_text("1")
        utt_id = load_manifest(manifest).records[0].utterance_id

        # a stage-2 model trained with a different codebook size cannot pair
        # with s1 at inference time
        bad_overrides = json.loads(STAGE2_OVERRIDES)
        bad_overrides["codebook_size"] = 32
        code = main(
            [
                "train",
                "--stage",
                "2",
                "--manifest",
                str(manifest),
                "--steps",
                "1",
                "--stage1-ckpt",
                str(s1),
                "--overrides",
                json.dumps(bad_overrides),
                "--out",
                "s2bad",
            ]
        )
        assert code == 0
        code = main(
            [
                "synth",
                "--stage1",
                str(s1),
                "--stage2",
                str(workspace / "s2bad" / "stage2_latest.pt"),
                "--manifest",
                str(manifest),
                "--prompt",
                utt_id,
                "--text-phonemes",
                str(phon),
                "--out",
                "y",
            ]
        )
        assert code == 4

        # a stage-1 checkpoint passed as stage 2 is a kind mismatch
        code = main(
            [
                "synth",
                "--stage1",
                str(s1),
                "--stage2",
                str(s1),
                "--manifest",
                str(manifest),
                "--prompt",
                utt_id,
                "--text-phonemes",
                str(phon),
                "--out",
                "y",
            ]
        )
        assert code == 4

    def test_unknown_prompt_is_validation_error(self, workspace, trained):
        manifest, s1, s2 = trained
        phon = workspace / "p.txt"
        phon.write_text("1 2")
        code = main(
            [
                "synth",
                "--stage1",
                str(s1),
                "--stage2",
                str(s2),
                "--manifest",
                str(manifest),
                "--prompt",
                "no_such_utt",
                "--text-phonemes",
                str(phon),
                "--out",
                "y",
            ]
        )
        assert code == 2

    def test_edit_writes_artifacts_and_record(self, workspace, trained):
        manifest, s1, s2 = trained
        utt = load_manifest(manifest).records[0]
        code = main(
            [
                "edit",
                "--stage1",
                str(s1),
                "--stage2",
                str(s2),
                "--manifest",
                str(manifest),
                "--utt",
                utt.utterance_id,
                "--left",
                "1",
                "--right",
                "3",
                "--phonemes",
                "4 5",
                "--out",
                "edit_out",
            ]
        )
        assert code == 0
        out = workspace / "edit_out"
        assert (out / "edit.wav").exists()
        record = json.loads((out / "run_record_edit.json").read_text())
        assert "selected_candidate" in record
        assert "selected_score" in record

    def test_edit_invalid_region_is_validation_error(self, workspace, trained):
        manifest, s1, s2 = trained
        utt = load_manifest(manifest).records[0]
        code = main(
            [
                "edit",
                "--stage1",
                str(s1),
                "--stage2",
                str(s2),
                "--manifest",
                str(manifest),
                "--utt",
                utt.utterance_id,
                "--left",
                "5",
                "--right",
                "2",
                "--out",
                "y",
            ]
        )
        assert code == 2


class TestEvalAndReplay:
    def test_eval_writes_reports(self, workspace):
        manifest = prepare(workspace)
        s1 = train_stage1(workspace, manifest)
        code = main(
            [
                "eval",
                "--manifest",
                str(manifest),
                "--stage1",
                str(s1),
                "--out",
                "eval_out",
            ]
        )
        assert code == 0
        reports = list((workspace / "eval_out").glob("metrics_*.txt"))
        assert len(reports) == 6
        text = reports[0].read_text()
        assert "pitch_dtw:" in text and "speaker_cos:" in text

    def test_eval_missing_checkpoint(self, workspace):
        manifest = prepare(workspace)
        code = main(["eval", "--manifest", str(manifest), "--out", "y"])
        assert code == 3

    def test_replay_reproduces_prepare(self, workspace):
        prepare(workspace, out="orig")
        record = workspace / "orig" / "run_record_prepare.json"
        # replay writes into the same out dir; move the originals aside first
        a = load_manifest(workspace / "orig" / "manifest.jsonl")
        assert main(["replay", str(record)]) == 0
        b = load_manifest(workspace / "orig" / "manifest.jsonl")
        for ra, rb in zip(a.records, b.records):
            assert ra.mel.values.tobytes() == rb.mel.values.tobytes()

    def test_replay_missing_record(self, workspace):
        assert main(["replay", str(workspace / "nope.json")]) == 2
