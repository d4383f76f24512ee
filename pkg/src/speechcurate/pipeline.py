"""Stage orchestration: fixed stage order, bounded parallelism, versioned outputs.

Each stage reads the previous stage's manifest and writes a new one plus a
JSON stage report; per-utterance failures are quarantined into a rejects
manifest instead of aborting the run. Worker results are re-sorted by
utterance_id before writing, so the worker count never affects output bytes.
"""

from __future__ import annotations

import io
import json
import logging
import shlex
import subprocess
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import audio as audiolib
from . import bandwidth as bwlib
from . import curation, segmentation, textproc
from .config import STAGE_ORDER, PipelineConfig, validate_config
from .manifest import (
    ChapterRecord,
    UtteranceRecord,
    read_chapters,
    read_manifest,
    write_manifest,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG_ERROR = 1
EXIT_STAGE_FAILURE = 2
EXIT_PARTIAL = 3


class ConfigError(Exception):
    pass


class StageError(Exception):
    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"stage {stage!r}: {message}")


@dataclass
class StageReport:
    stage: str
    records_in: int
    records_out: int
    records_dropped: int
    drop_reasons: dict[str, int] = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "stage": self.stage,
            "records_in": self.records_in,
            "records_out": self.records_out,
            "records_dropped": self.records_dropped,
            "drop_reasons": self.drop_reasons,
            **({"extras": self.extras} if self.extras else {}),
        }


@dataclass
class PipelineResult:
    exit_code: int
    reports: list[StageReport]
    final_manifest: Path | None


class _Context:
    def __init__(self, config: PipelineConfig):
        self.config = config
        self.out_dir = Path(config.out_dir)
        self._chapters: dict[str, ChapterRecord] | None = None
        self._chapter_audio: dict[str, audiolib.AudioBuffer] = {}
        self._chapter_text: dict[str, str] = {}
        self.rules = (
            textproc.load_rules(config.rules_path)
            if config.rules_path
            else textproc.default_rules()
        )
        self.abbreviations = (
            segmentation.load_abbreviations(config.abbreviations_path)
            if config.abbreviations_path
            else segmentation.load_default_abbreviations()
        )

    @property
    def chapters(self) -> dict[str, ChapterRecord]:
        if self._chapters is None:
            path = Path(self.config.chapters_manifest)
            if not path.exists():
                raise StageError("setup", f"chapters manifest not found: {path}")
            self._chapters = {c.chapter_id: c for c in read_chapters(path)}
        return self._chapters

    def chapter_audio(self, chapter_id: str) -> audiolib.AudioBuffer:
        if chapter_id not in self._chapter_audio:
            chapter = self.chapters[chapter_id]
            path = Path(self.config.audio_root) / chapter.audio_path
            self._chapter_audio[chapter_id] = _decode(path, self.config.decoder_cmd)
        return self._chapter_audio[chapter_id]

    def chapter_text(self, chapter_id: str) -> str:
        if chapter_id not in self._chapter_text:
            chapter = self.chapters.get(chapter_id)
            if chapter is None or chapter.book_text_path is None:
                raise KeyError(chapter_id)
            raw = Path(chapter.book_text_path).read_text(encoding="utf-8")
            self._chapter_text[chapter_id] = textproc.clean_formatting(raw, self.rules)
        return self._chapter_text[chapter_id]


def _decode(path: Path, decoder_cmd: str | None) -> audiolib.AudioBuffer:
    if path.suffix.lower() == ".wav" or decoder_cmd is None:
        return audiolib.load_pcm(path)
    cmd = [part.format(input=str(path)) for part in shlex.split(decoder_cmd)]
    proc = subprocess.run(cmd, capture_output=True, check=True)
    from scipy.io import wavfile

    rate, data = wavfile.read(io.BytesIO(proc.stdout))
    buf = audiolib.AudioBuffer(samples=data, sample_rate_hz=int(rate))
    import numpy as np

    if data.dtype == np.int16:
        buf = audiolib.AudioBuffer(data.astype(np.float64) / 32768.0, int(rate))
    elif data.dtype == np.float32:
        buf = audiolib.AudioBuffer(data.astype(np.float64), int(rate))
    return buf


def _pmap(fn, items, workers: int):
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _load_jsonl_map(path: str, key: str, value: str) -> dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                obj = json.loads(line)
                out[obj[key]] = obj[value]
    return out


# Every stage function maps (records, ctx) -> (kept, rejects, extras) where
# rejects is a list of (record, reason).


def _stage_text(records, ctx: _Context):
    predicted = (
        _load_jsonl_map(ctx.config.predicted_pc_path, "utterance_id", "text")
        if ctx.config.predicted_pc_path
        else {}
    )

    def work(rec: UtteranceRecord):
        try:
            chapter_text = ctx.chapter_text(rec.chapter_id)
        except KeyError:
            return ("reject", rec, "missing_book_text")
        except OSError as exc:
            return ("reject", rec, f"book_text_unreadable:{exc.__class__.__name__}")
        match = textproc.match_transcript(textproc.strip_pc(rec.raw_text), chapter_text)
        if match.matched:
            text = textproc.normalize_spoken(match.restored_text, ctx.rules)
            return ("ok", rec.with_fields(text=text, text_source="book_match"))
        text = predicted.get(rec.utterance_id, rec.raw_text)
        return ("ok", rec.with_fields(text=text, text_source="predicted_pc"))

    return _collect(_pmap(work, records, ctx.config.workers))


def _stage_audio(records, ctx: _Context):
    cfg = ctx.config
    audio_out = ctx.out_dir / "audio"
    audio_out.mkdir(parents=True, exist_ok=True)
    # Preload chapter audio serially; worker threads then only read.
    for chapter_id in sorted({r.chapter_id for r in records}):
        if chapter_id not in ctx.chapters:
            raise StageError("audio", f"chapter {chapter_id!r} not in chapters manifest")
        ctx.chapter_audio(chapter_id)

    def work(rec: UtteranceRecord):
        buf = ctx.chapter_audio(rec.chapter_id)
        sr = buf.sample_rate_hz
        start = int(round(rec.offset_s * sr))
        stop = int(round((rec.offset_s + rec.duration_s) * sr))
        if start >= buf.num_frames:
            return ("reject", rec, "offset_past_end")
        piece = audiolib.AudioBuffer(buf.samples[start:stop], sr)
        piece = audiolib.mixdown(piece)
        piece = audiolib.resample(piece, cfg.target_sample_rate_hz)
        trim = audiolib.trim_silence(
            piece,
            threshold_db=cfg.trim_threshold_db,
            max_edge_silence_s=cfg.max_edge_silence_s,
        )
        if trim.empty_after_trim:
            return ("reject", rec, "empty_after_trim")
        wav_path = audio_out / f"{rec.utterance_id}.wav"
        audiolib.save_pcm(trim.trimmed, wav_path)
        rel_path = str(wav_path.relative_to(ctx.out_dir))
        if cfg.encoder_cmd:
            flac_path = wav_path.with_suffix(".flac")
            cmd = [
                part.format(input=str(wav_path), output=str(flac_path))
                for part in shlex.split(cfg.encoder_cmd)
            ]
            subprocess.run(cmd, capture_output=True, check=True)
            wav_path.unlink()
            rel_path = str(flac_path.relative_to(ctx.out_dir))
        return (
            "ok",
            rec.with_fields(
                audio_path=rel_path,
                offset_s=0.0,
                duration_s=round(trim.trimmed.duration_s, 4),
            ),
        )

    return _collect(_pmap(work, records, ctx.config.workers))


def _stage_bandwidth(records, ctx: _Context):
    cfg = ctx.config
    chapter_ids = sorted({r.chapter_id for r in records})

    def estimate(chapter_id: str):
        chapter = ctx.chapters.get(chapter_id)
        if chapter is None:
            return chapter_id, None
        buf = audiolib.mixdown(ctx.chapter_audio(chapter_id))
        head = buf.samples[: int(round(cfg.bandwidth_analysis_s * buf.sample_rate_hz))]
        head_buf = audiolib.AudioBuffer(head, buf.sample_rate_hz)
        head_buf = audiolib.resample(head_buf, cfg.target_sample_rate_hz)
        spec = bwlib.mean_power_spectrum(head_buf)
        est = bwlib.estimate_bandwidth(spec, threshold_db=cfg.bandwidth_threshold_db)
        return chapter_id, est

    estimates = dict(_pmap(estimate, chapter_ids, cfg.workers))

    def work(rec: UtteranceRecord):
        est = estimates.get(rec.chapter_id)
        if est is None:
            return ("reject", rec, "missing_chapter")
        if est.degenerate:
            return ("reject", rec, "degenerate_spectrum")
        return ("ok", rec.with_fields(bandwidth_hz=int(round(est.f_max_hz))))

    return _collect([work(rec) for rec in records])


def _stage_segment(records, ctx: _Context):
    cfg = ctx.config
    if not cfg.alignments_path:
        raise StageError("segment", "alignments_path is required")
    path = Path(cfg.alignments_path)
    if not path.exists():
        raise StageError("segment", f"alignments file not found: {path}")
    if path.suffix == ".ctm":
        tracks = segmentation.load_ctm(path)
    else:
        tracks = segmentation.load_alignments_jsonl(path)

    def work(rec: UtteranceRecord):
        track = tracks.get(rec.utterance_id)
        if track is None:
            return ("reject", rec, "missing_alignment")
        transcript = rec.text if rec.text else rec.raw_text
        try:
            pauses = segmentation.find_candidate_pauses(
                track, transcript, cfg.min_pause_s, ctx.abbreviations
            )
            decision = segmentation.choose_split(
                pauses, segmentation.utterance_seed(rec.utterance_id, cfg.seed)
            )
            children = segmentation.apply_split(rec, decision, track)
        except segmentation.AlignmentError as exc:
            return ("reject", rec, f"alignment_mismatch:{exc}")
        return ("ok-many", children)

    return _collect(_pmap(work, records, cfg.workers))


def _stage_validate(records, ctx: _Context):
    cfg = ctx.config
    if not cfg.asr_hypotheses_path:
        raise StageError("validate", "asr_hypotheses_path is required")
    path = Path(cfg.asr_hypotheses_path)
    if not path.exists():
        raise StageError("validate", f"ASR hypotheses file not found: {path}")
    hyps = _load_jsonl_map(path, "utterance_id", "hyp_text")

    def work(rec: UtteranceRecord):
        hyp = hyps.get(rec.utterance_id)
        if hyp is None:
            return ("reject", rec, "missing_hypothesis")
        ref = rec.text if rec.text else rec.raw_text
        try:
            stats = textproc.edit_stats(ref, hyp)
        except textproc.TextError:
            return ("reject", rec, "empty_reference")
        rec = rec.with_fields(
            wer_pct=round(stats.wer_pct, 4), cer_pct=round(stats.cer_pct, 4)
        )
        if not textproc.passes_cer_gate(stats, cfg.max_cer_pct):
            return ("reject", rec, "cer_gate")
        return ("ok", rec)

    return _collect(_pmap(work, records, cfg.workers))


def _stage_speakers(records, ctx: _Context):
    cfg = ctx.config
    if not cfg.speaker_counts_path:
        raise StageError("speakers", "speaker_counts_path is required")
    path = Path(cfg.speaker_counts_path)
    if not path.exists():
        raise StageError("speakers", f"speaker counts file not found: {path}")
    counts = curation.load_speaker_counts(path)
    tagged = curation.apply_speaker_counts(records, counts)
    return tagged, [], {}


def _collect(results):
    kept: list[UtteranceRecord] = []
    rejects: list[tuple[UtteranceRecord, str]] = []
    split_parents = 0
    for item in results:
        if item[0] == "ok":
            kept.append(item[1])
        elif item[0] == "ok-many":
            if len(item[1]) > 1:
                split_parents += 1
            kept.extend(item[1])
        else:
            rejects.append((item[1], item[2]))
    # records_out = records_in - records_dropped + split_parents
    extras = {"split_parents": split_parents} if split_parents else {}
    return kept, rejects, extras


_STAGE_FNS = {
    "text": _stage_text,
    "audio": _stage_audio,
    "bandwidth": _stage_bandwidth,
    "segment": _stage_segment,
    "validate": _stage_validate,
    "speakers": _stage_speakers,
}


def run_pipeline(config: PipelineConfig) -> PipelineResult:
    """Execute the enabled stages in the fixed order.

    Each stage writes `manifest.NN_stage.jsonl`, `rejects.stage.jsonl` (when
    non-empty) and `report.stage.json` under config.out_dir. Inputs are never
    mutated in place.
    """
    problems = validate_config(config)
    if problems:
        raise ConfigError("; ".join(problems))
    ctx = _Context(config)
    ctx.out_dir.mkdir(parents=True, exist_ok=True)
    records = read_manifest(config.utterances_manifest)
    reports: list[StageReport] = []
    final_path: Path | None = None
    any_rejects = False
    enabled = [s for s in STAGE_ORDER if s in config.stages]
    for index, stage in enumerate(enabled):
        fn = _STAGE_FNS[stage]
        n_in = len(records)
        kept, rejects, extras = fn(records, ctx)
        kept.sort(key=lambda r: r.utterance_id)
        final_path = ctx.out_dir / f"manifest.{index:02d}_{stage}.jsonl"
        write_manifest(kept, final_path)
        if rejects:
            any_rejects = True
            write_manifest(
                [r for r, _ in rejects], ctx.out_dir / f"rejects.{stage}.jsonl"
            )
        drop_reasons: dict[str, int] = {}
        for _, reason in rejects:
            drop_reasons[reason] = drop_reasons.get(reason, 0) + 1
        report = StageReport(
            stage=stage,
            records_in=n_in,
            records_out=len(kept),
            records_dropped=len(rejects),
            drop_reasons=drop_reasons,
            extras=extras,
        )
        reports.append(report)
        (ctx.out_dir / f"report.{stage}.json").write_text(
            json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        print(
            f"[{stage}] in={n_in} out={len(kept)} dropped={len(rejects)}",
            file=sys.stderr,
        )
        records = kept
    exit_code = EXIT_PARTIAL if any_rejects else EXIT_OK
    return PipelineResult(exit_code=exit_code, reports=reports, final_manifest=final_path)
