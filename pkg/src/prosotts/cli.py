"""Command-line entry points: prepare, train, synth, edit, eval, replay."""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

from . import checkpoint as ckpt
from .configs import DisentanglerConfig, PLLMConfig, load_config
from .evaluation import (
    MetricReport,
    TimbreEmbedder,
    contour_from_factors,
    contour_from_synthetic_mel,
    dtw_distance,
    robustness_check,
    speaker_similarity,
)
from .manifest import Manifest, ManifestError, PhonemeUtterance, load_manifest, save_manifest
from .mel import MelSpectrogram, load_mel, save_mel
from .pipeline import EditRegion, InferencePipeline, PipelineError, SynthesisRequest
from .sweep import disentanglement_sweep, write_sweep_table
from .synthetic import SyntheticFactorSpec, generate_synthetic_dataset
from .training import Stage1Trainer, Stage2Trainer
from .vocoder import GriffinLimVocoder, write_wav

log = logging.getLogger("prosotts")

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_VALIDATION = 2
EXIT_MISSING_ARTIFACT = 3
EXIT_COMPAT = 4


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def artifact_root() -> Path:
    return Path(os.environ.get("MEGA_LAB_HOME", ".")).expanduser()


def write_run_record(out_dir: Path, command: str, args: argparse.Namespace) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    record = {
        "command": command,
        "args": {k: v for k, v in vars(args).items() if k != "func"},
    }
    path = out_dir / f"run_record_{command}.json"
    with open(path, "w") as f:
        json.dump(record, f, indent=2, default=str)
    return path


class DirLock:
    """Guards a checkpoint directory against concurrent writers."""

    def __init__(self, directory: Path):
        directory.mkdir(parents=True, exist_ok=True)
        self.path = directory / ".lock"

    def __enter__(self):
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise CliError(
                f"{self.path} exists; another process owns this checkpoint directory",
                EXIT_INTERNAL,
            )
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        return self

    def __exit__(self, *exc):
        self.path.unlink(missing_ok=True)


def _out_dir(args) -> Path:
    return artifact_root() / args.out if not Path(args.out).is_absolute() else Path(args.out)


# --------------------------------------------------------------------- prepare
def cmd_prepare(args) -> int:
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    if args.synthetic:
        spec = SyntheticFactorSpec(
            n_speakers=args.speakers,
            utterances_per_speaker=args.per_speaker,
            timbre_seed=args.seed,
            prosody_seed=args.seed + 1,
            phoneme_vocab_size=args.vocab,
        )
        manifest = generate_synthetic_dataset(spec)
    elif args.raw:
        manifest = _convert_raw(Path(args.raw))
    else:
        raise CliError("either --synthetic or --raw is required", EXIT_VALIDATION)
    save_manifest(manifest, out / "manifest.jsonl", out / "mels")
    write_run_record(out, "prepare", args)
    speakers = manifest.by_speaker()
    print(f"manifest: {len(manifest)} records, {len(speakers)} speakers")
    print(f"frames total: {sum(r.mel.frames for r in manifest.records)}")
    return EXIT_OK


def _convert_raw(path: Path) -> Manifest:
    if not path.exists():
        raise CliError(f"raw corpus not found: {path}", EXIT_VALIDATION)
    records = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 5:
                raise CliError(
                    f"{path}:{lineno}: expected 5 tab-separated columns "
                    f"(utterance_id, speaker_id, phonemes, durations, mel_path), got {len(cols)}",
                    EXIT_VALIDATION,
                )
            utt_id, speaker, phonemes, durations, mel_path = cols
            mel_file = Path(mel_path)
            if not mel_file.is_absolute():
                mel_file = path.parent / mel_file
            try:
                records.append(
                    PhonemeUtterance(
                        utterance_id=utt_id,
                        speaker_id=speaker,
                        phonemes=[int(p) for p in phonemes.split()],
                        durations=[int(d) for d in durations.split()],
                        mel=load_mel(mel_file),
                    )
                )
            except (ManifestError, ValueError, FileNotFoundError) as e:
                raise CliError(f"{path}:{lineno}: {e}", EXIT_VALIDATION)
    return Manifest(records)


# ----------------------------------------------------------------------- train
def cmd_train(args) -> int:
    out = _out_dir(args)
    manifest = _load_manifest_checked(args.manifest)
    if args.stage == 1:
        cfg = (
            load_config(args.config, "stage1", DisentanglerConfig)
            if args.config
            else DisentanglerConfig(**json.loads(args.overrides or "{}"))
        )
        with DirLock(out):
            if args.resume:
                trainer = Stage1Trainer.resume(args.resume, manifest, out_dir=out)
            else:
                trainer = Stage1Trainer(cfg, manifest, seed=args.seed, out_dir=out)
            trainer.run(args.steps, batch_size=args.batch_size, checkpoint_every=args.checkpoint_every)
        print(f"stage 1 done at step {trainer.step}; checkpoint in {out}")
    else:
        if not args.stage1_ckpt:
            raise CliError("stage 2 requires --stage1-ckpt", EXIT_MISSING_ARTIFACT)
        if not Path(args.stage1_ckpt).exists():
            raise CliError(f"stage-1 checkpoint not found: {args.stage1_ckpt}", EXIT_MISSING_ARTIFACT)
        stage1, _ = ckpt.load_stage1(args.stage1_ckpt)
        cfg = (
            load_config(args.config, "stage2", PLLMConfig)
            if args.config
            else PLLMConfig(**json.loads(args.overrides or "{}"))
        )
        with DirLock(out):
            if args.resume:
                trainer = Stage2Trainer.resume(args.resume, stage1, manifest, out_dir=out)
            else:
                trainer = Stage2Trainer(cfg, stage1, manifest, seed=args.seed, out_dir=out)
            trainer.run(args.steps, checkpoint_every=args.checkpoint_every)
        print(f"stage 2 done at step {trainer.step}; checkpoint in {out}")
    write_run_record(out, "train", args)
    return EXIT_OK


def _load_manifest_checked(path: str) -> Manifest:
    try:
        return load_manifest(path)
    except FileNotFoundError as e:
        raise CliError(str(e), EXIT_VALIDATION)
    except ManifestError as e:
        raise CliError(str(e), EXIT_VALIDATION)


def _load_pipeline(args) -> InferencePipeline:
    for p in (args.stage1, args.stage2):
        if not Path(p).exists():
            raise CliError(f"checkpoint not found: {p}", EXIT_MISSING_ARTIFACT)
    try:
        stage1, _ = ckpt.load_stage1(args.stage1)
        stage2, _ = ckpt.load_stage2(args.stage2)
        return InferencePipeline(stage1, stage2)
    except ckpt.CheckpointError as e:
        raise CliError(str(e), EXIT_COMPAT)
    except PipelineError as e:
        raise CliError(str(e), EXIT_COMPAT)


# ----------------------------------------------------------------------- synth
def cmd_synth(args) -> int:
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    pipeline = _load_pipeline(args)
    manifest = _load_manifest_checked(args.manifest)
    try:
        prompt = manifest.get(args.prompt)
    except KeyError:
        raise CliError(f"prompt utterance {args.prompt!r} not in manifest", EXIT_VALIDATION)
    phonemes = _read_phonemes(args.text_phonemes)
    try:
        request = SynthesisRequest(prompt, phonemes, top_k=args.k, seed=args.seed)
        result = (
            pipeline.synthesize_cross_lingual(request)
            if args.cross_lingual
            else pipeline.synthesize_zero_shot(request)
        )
    except PipelineError as e:
        raise CliError(str(e), EXIT_VALIDATION)
    save_mel(result.mel, out / "synth.mel")
    vocoder = GriffinLimVocoder(seed=args.seed)
    write_wav(out / "synth.wav", vocoder.vocode(result.mel), vocoder.analysis.sample_rate)
    record = write_run_record(out, "synth", args)
    print(f"wrote {out / 'synth.wav'}, {out / 'synth.mel'}, {record}")
    return EXIT_OK


def _read_phonemes(path: str) -> list[int]:
    p = Path(path)
    if not p.exists():
        raise CliError(f"phoneme file not found: {p}", EXIT_VALIDATION)
    try:
        return [int(tok) for tok in p.read_text().split()]
    except ValueError as e:
        raise CliError(f"{p}: phonemes must be integers: {e}", EXIT_VALIDATION)


# ------------------------------------------------------------------------ edit
def cmd_edit(args) -> int:
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    pipeline = _load_pipeline(args)
    manifest = _load_manifest_checked(args.manifest)
    try:
        utt = manifest.get(args.utt)
    except KeyError:
        raise CliError(f"utterance {args.utt!r} not in manifest", EXIT_VALIDATION)
    phonemes = [int(p) for p in args.phonemes.split()] if args.phonemes else []
    try:
        region = EditRegion(args.left, args.right, len(utt.phonemes))
        result = pipeline.edit_speech(
            utt, region, phonemes, n_candidates=args.n_candidates, seed=args.seed
        )
    except PipelineError as e:
        raise CliError(str(e), EXIT_VALIDATION)
    save_mel(result.mel, out / "edit.mel")
    vocoder = GriffinLimVocoder(seed=args.seed)
    write_wav(out / "edit.wav", vocoder.vocode(result.mel), vocoder.analysis.sample_rate)
    record_path = write_run_record(out, "edit", args)
    with open(record_path) as f:
        record = json.load(f)
    record["selected_candidate"] = result.selected_candidate
    record["selected_score"] = result.selected_score
    with open(record_path, "w") as f:
        json.dump(record, f, indent=2, default=str)
    print(
        f"wrote {out / 'edit.wav'}; candidate {result.selected_candidate} "
        f"score {result.selected_score:.4f}"
    )
    return EXIT_OK


# ------------------------------------------------------------------------ eval
def cmd_eval(args) -> int:
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    manifest = _load_manifest_checked(args.manifest)
    if args.sweep:
        sweep_cfg = _read_sweep_config(Path(args.sweep))
        base = DisentanglerConfig(**sweep_cfg["base"])
        rows = disentanglement_sweep(
            sweep_cfg["configs"], manifest, base, sweep_cfg["seeds"], steps=sweep_cfg["steps"]
        )
        write_sweep_table(rows, out / "sweep_table.tsv")
        print(f"wrote {out / 'sweep_table.tsv'} ({len(rows)} rows)")
    else:
        if not args.stage1 or not Path(args.stage1).exists():
            raise CliError("eval needs --stage1 checkpoint (or --sweep)", EXIT_MISSING_ARTIFACT)
        model, _ = ckpt.load_stage1(args.stage1)
        embedder = TimbreEmbedder(model)
        reports = []
        for utt in manifest.records:
            yhat, _ = model.reconstruct(utt, utt.mel.values)
            recon = MelSpectrogram(yhat.detach().numpy())
            pitch = dtw_distance(contour_from_synthetic_mel(recon), contour_from_factors(utt))
            cos = speaker_similarity(recon, utt.mel, embedder)
            repeats, skips = robustness_check(utt.phonemes, list(range(len(utt.phonemes))))
            reports.append(MetricReport(pitch, cos, repeats, skips, 0))
        for utt, report in zip(manifest.records, reports):
            with open(out / f"metrics_{utt.utterance_id}.txt", "w") as f:
                for field in dataclasses.fields(report):
                    f.write(f"{field.name}: {getattr(report, field.name)}\n")
        print(f"wrote {len(reports)} metric reports to {out}")
    write_run_record(out, "eval", args)
    return EXIT_OK


def _read_sweep_config(path: Path) -> dict:
    if not path.exists():
        raise CliError(f"sweep config not found: {path}", EXIT_VALIDATION)
    parser = configparser.ConfigParser()
    parser.read(path)
    if "sweep" not in parser:
        raise CliError(f"{path}: missing [sweep] section", EXIT_VALIDATION)
    sect = parser["sweep"]
    configs = []
    for item in sect.get("configs", "").split():
        dim, size = item.split("x")
        configs.append((int(dim), int(size)))
    if not configs:
        raise CliError(f"{path}: no sweep configs", EXIT_VALIDATION)
    base = json.loads(sect.get("base", "{}"))
    return {
        "configs": configs,
        "seeds": [int(s) for s in sect.get("seeds", "0 1 2").split()],
        "steps": sect.getint("steps", 300),
        "base": base,
    }


# ---------------------------------------------------------------------- replay
def cmd_replay(args) -> int:
    record_path = Path(args.record)
    if not record_path.exists():
        raise CliError(f"run record not found: {record_path}", EXIT_VALIDATION)
    with open(record_path) as f:
        record = json.load(f)
    argv = [record["command"]]
    skip = {"command", "selected_candidate", "selected_score"}
    for key, value in record["args"].items():
        if value is None or value is False or key in skip:
            continue
        flag = "--" + key.replace("_", "-")
        if value is True:
            argv.append(flag)
        else:
            argv += [flag, str(value)]
    return main(argv)


# ----------------------------------------------------------------------- main
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prosotts")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="build a manifest from synthetic or raw data")
    p.add_argument("--synthetic", action="store_true")
    p.add_argument("--raw", help="tab-separated aligned corpus file")
    p.add_argument("--speakers", type=int, default=4)
    p.add_argument("--per-speaker", type=int, default=8)
    p.add_argument("--vocab", type=int, default=12)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="data")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train stage 1 or stage 2")
    p.add_argument("--stage", type=int, choices=(1, 2), required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--batch-size", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="INI config file; overrides flags when given")
    p.add_argument("--overrides", help="JSON dict of config overrides")
    p.add_argument("--stage1-ckpt", help="stage-1 checkpoint (required for stage 2)")
    p.add_argument("--resume", help="checkpoint to resume from")
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--out", default="runs/train")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("synth", help="zero-shot or cross-lingual synthesis")
    p.add_argument("--stage1", required=True)
    p.add_argument("--stage2", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--prompt", required=True, help="prompt utterance id")
    p.add_argument("--text-phonemes", required=True, help="file of space-separated phoneme IDs")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cross-lingual", action="store_true")
    p.add_argument("--out", default="runs/synth")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("edit", help="likelihood-scored speech editing")
    p.add_argument("--stage1", required=True)
    p.add_argument("--stage2", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--utt", required=True)
    p.add_argument("--left", "-L", type=int, required=True)
    p.add_argument("--right", "-R", type=int, required=True)
    p.add_argument("--phonemes", default="", help="replacement phoneme IDs, space-separated")
    p.add_argument("--n-candidates", "-N", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="runs/edit")
    p.set_defaults(func=cmd_edit)

    p = sub.add_parser("eval", help="metric reports or bottleneck sweep")
    p.add_argument("--manifest", required=True)
    p.add_argument("--stage1")
    p.add_argument("--sweep", help="INI sweep config")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="runs/eval")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("replay", help="re-run a command from its run record")
    p.add_argument("record")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except Exception as e:  # internal failure
        log.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
