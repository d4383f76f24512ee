"""Pause-midpoint utterance splitting driven by forced-alignment tokens.

Long utterances are split at the midpoint of the longest pause that follows
a sentence-final period (>= 0.08 s by default), ignoring periods that belong
to abbreviations. Ties between equally long pauses are broken by a
deterministic per-utterance random choice.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .manifest import UtteranceRecord

DEFAULT_MIN_PAUSE_S = 0.08

_TRAILING_QUOTES = "\"'’”`)"


class AlignmentError(Exception):
    pass


@dataclass(frozen=True)
class AlignmentToken:
    word: str
    start_s: float
    end_s: float


@dataclass(frozen=True)
class Pause:
    gap_start_s: float
    gap_end_s: float
    word_index: int  # index of the sentence-final token before the gap

    @property
    def duration_s(self) -> float:
        return self.gap_end_s - self.gap_start_s


@dataclass(frozen=True)
class SplitDecision:
    split_point_s: float | None
    candidate_pauses: tuple[Pause, ...]
    chosen_index: int | None


def load_default_abbreviations() -> frozenset[str]:
    return load_abbreviations(Path(__file__).parent / "data" / "abbreviations.txt")


def load_abbreviations(path: str | Path) -> frozenset[str]:
    entries = set()
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if line and not line.startswith("#"):
            entries.add(line.rstrip(".").casefold())
    return frozenset(entries)


def _strip_word(word: str) -> str:
    return "".join(ch for ch in word if ch.isalnum()).casefold()


def find_candidate_pauses(
    track: list[AlignmentToken],
    transcript: str,
    min_pause_s: float = DEFAULT_MIN_PAUSE_S,
    abbreviations: frozenset[str] | None = None,
) -> list[Pause]:
    """Gaps of at least min_pause_s following a non-abbreviation period.

    Transcript words pair positionally with alignment tokens; a count
    mismatch aborts the utterance.
    """
    if abbreviations is None:
        abbreviations = load_default_abbreviations()
    words = transcript.split()
    if len(words) != len(track):
        raise AlignmentError(
            f"transcript has {len(words)} words but alignment has {len(track)} tokens"
        )
    pauses = []
    for i in range(len(track) - 1):
        word = words[i].rstrip(_TRAILING_QUOTES)
        if not word.endswith("."):
            continue
        if _strip_word(word) in abbreviations:
            continue
        gap = track[i + 1].start_s - track[i].end_s
        if gap >= min_pause_s:
            pauses.append(Pause(track[i].end_s, track[i + 1].start_s, i))
    return pauses


def _splitmix64(state: int) -> int:
    state = (state + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


def utterance_seed(utterance_id: str, global_seed: int = 0) -> int:
    """Stable 64-bit seed independent of worker scheduling."""
    digest = hashlib.blake2b(utterance_id.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") ^ (global_seed & 0xFFFFFFFFFFFFFFFF)


def choose_split(pauses: list[Pause], rng_seed: int = 0) -> SplitDecision:
    """Pick the longest pause; break exact-duration ties pseudo-randomly."""
    candidates = tuple(pauses)
    if not candidates:
        return SplitDecision(None, candidates, None)
    longest = max(p.duration_s for p in candidates)
    maximal = [i for i, p in enumerate(candidates) if p.duration_s == longest]
    pick = maximal[_splitmix64(rng_seed) % len(maximal)]
    chosen = candidates[pick]
    return SplitDecision(
        split_point_s=(chosen.gap_start_s + chosen.gap_end_s) / 2.0,
        candidate_pauses=candidates,
        chosen_index=pick,
    )


def _exact_partition(total: float, first: float) -> tuple[float, float]:
    # Fix up float rounding so the two parts sum to the parent exactly.
    a, b = first, total - first
    for _ in range(5):
        if a + b == total:
            return a, b
        a = total - b
        if a + b == total:
            return a, b
        b = total - a
    raise ArithmeticError(f"could not partition {total} at {first}")


def apply_split(
    rec: UtteranceRecord,
    decision: SplitDecision,
    track: list[AlignmentToken],
) -> list[UtteranceRecord]:
    """Split a record in two at the decided point; identity when no split.

    Children get ids suffixed _a/_b, transcripts partitioned at the period
    boundary, inherited metadata copied, and WER/CER cleared for
    recomputation.
    """
    if decision.split_point_s is None:
        return [rec]
    sp = decision.split_point_s
    if not 0.0 < sp < rec.duration_s:
        raise AlignmentError(
            f"{rec.utterance_id}: split point {sp} outside (0, {rec.duration_s})"
        )
    pause = decision.candidate_pauses[decision.chosen_index]
    boundary = pause.word_index
    words = rec.text.split() if rec.text else rec.raw_text.split()
    text_a = " ".join(words[: boundary + 1])
    text_b = " ".join(words[boundary + 1:])
    raw_words = rec.raw_text.split()
    if len(raw_words) == len(words):
        raw_a = " ".join(raw_words[: boundary + 1])
        raw_b = " ".join(raw_words[boundary + 1:])
    else:
        from .textproc import strip_pc

        raw_a, raw_b = strip_pc(text_a), strip_pc(text_b)
    dur_a, dur_b = _exact_partition(rec.duration_s, sp)
    common = dict(wer_pct=None, cer_pct=None)
    child_a = rec.with_fields(
        utterance_id=rec.utterance_id + "_a",
        duration_s=dur_a,
        text=text_a if rec.text else None,
        raw_text=raw_a,
        **common,
    )
    child_b = rec.with_fields(
        utterance_id=rec.utterance_id + "_b",
        offset_s=rec.offset_s + dur_a,
        duration_s=dur_b,
        text=text_b if rec.text else None,
        raw_text=raw_b,
        **common,
    )
    return [child_a, child_b]


def load_alignment_json(path: str | Path) -> list[AlignmentToken]:
    """One utterance per file: a JSON array of {word, start, end}."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return [_token_from_obj(obj) for obj in data]


def load_alignments_jsonl(path: str | Path) -> dict[str, list[AlignmentToken]]:
    """Consolidated alignments: JSONL of {utterance_id, tokens: [...]}."""
    tracks: dict[str, list[AlignmentToken]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                tracks[obj["utterance_id"]] = [
                    _token_from_obj(tok) for tok in obj["tokens"]
                ]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise AlignmentError(f"{path}:{lineno}: {exc}") from exc
    return tracks


def load_ctm(path: str | Path) -> dict[str, list[AlignmentToken]]:
    """CTM reader: `utt channel start dur word` lines, grouped by utterance."""
    tracks: dict[str, list[AlignmentToken]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith(";;"):
                continue
            parts = line.split()
            if len(parts) < 5:
                raise AlignmentError(f"{path}:{lineno}: expected 5 fields, got {len(parts)}")
            utt, _channel, start, dur, word = parts[:5]
            start_s = float(start)
            tracks.setdefault(utt, []).append(
                AlignmentToken(word=word, start_s=start_s, end_s=start_s + float(dur))
            )
    for track in tracks.values():
        track.sort(key=lambda t: t.start_s)
    return tracks


def _token_from_obj(obj: dict) -> AlignmentToken:
    token = AlignmentToken(
        word=obj["word"], start_s=float(obj["start"]), end_s=float(obj["end"])
    )
    if token.start_s > token.end_s:
        raise AlignmentError(f"token {token.word!r} has start > end")
    return token
