"""Transcript text processing.

Punctuation-and-capitalization (PC) recovery by substring match against the
source book text, formatting cleanup, rule-based spoken normalization, and
WER/CER edit statistics.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path


class TextError(Exception):
    pass


# Characters treated as punctuation for PC stripping: Unicode P* plus
# backtick and straight quotes (typographic quoting must not break matches).
_EXTRA_PUNCT = {"`", '"', "'"}


def _is_punct(ch: str) -> bool:
    return ch in _EXTRA_PUNCT or unicodedata.category(ch).startswith("P")


def _strip_pc_map(text: str) -> tuple[str, list[int]]:
    """Normalize text and keep a per-character map back to original offsets."""
    out: list[str] = []
    omap: list[int] = []
    pending_space = -1  # original index of the whitespace run head, -1 = none
    for i, ch in enumerate(text):
        if ch.isspace():
            if out and pending_space < 0:
                pending_space = i
            continue
        if _is_punct(ch):
            continue
        if pending_space >= 0:
            out.append(" ")
            omap.append(pending_space)
            pending_space = -1
        for low in ch.lower():
            out.append(low)
            omap.append(i)
    return "".join(out), omap


def strip_pc(text: str) -> str:
    """Lowercase, drop punctuation, collapse whitespace runs, trim edges."""
    return _strip_pc_map(text)[0]


@dataclass(frozen=True)
class TranscriptMatch:
    matched: bool
    book_span: tuple[int, int] | None = None
    restored_text: str | None = None
    multiple_occurrences: bool = False


def match_transcript(transcript: str, chapter_text: str) -> TranscriptMatch:
    """Find the transcript as a word-boundary substring of the chapter text.

    On success returns the original punctuated slice of the chapter, expanded
    over punctuation attached to the edge words. On failure the caller tags
    the utterance text_source = predicted_pc.
    """
    query = strip_pc(transcript)
    if not query:
        return TranscriptMatch(matched=False)
    norm, omap = _strip_pc_map(chapter_text)
    hay = f" {norm} "
    needle = f" {query} "
    pos = hay.find(needle)
    if pos < 0:
        return TranscriptMatch(matched=False)
    multiple = hay.find(needle, pos + 1) >= 0
    n_start, n_end = pos, pos + len(query)  # span in norm
    o_start = omap[n_start]
    o_end = omap[n_end - 1] + 1
    # Pull in punctuation glued to the edge words (quotes, final period).
    while o_start > 0 and not chapter_text[o_start - 1].isspace() \
            and _is_punct(chapter_text[o_start - 1]):
        o_start -= 1
    while o_end < len(chapter_text) and not chapter_text[o_end].isspace() \
            and _is_punct(chapter_text[o_end]):
        o_end += 1
    return TranscriptMatch(
        matched=True,
        book_span=(o_start, o_end),
        restored_text=chapter_text[o_start:o_end],
        multiple_occurrences=multiple,
    )


@dataclass(frozen=True)
class NormalizationRules:
    """Token expansions plus literal formatting artifacts to delete/replace."""

    abbreviation_expansions: dict[str, str] = field(default_factory=dict)
    artifact_patterns: tuple[tuple[str, str], ...] = ()


DEFAULT_ARTIFACTS: tuple[tuple[str, str], ...] = (
    ("nbsp", ""),
    ("p p", ""),
)

_TAG_RE = re.compile(r"<[^<>]+>")
_WS_RE = re.compile(r"[ \t\f\v]+")


def load_rules(path: str | Path) -> NormalizationRules:
    """Read `token<TAB>expansion` lines; lines starting `! ` define artifacts."""
    expansions: dict[str, str] = {}
    artifacts: list[tuple[str, str]] = []
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("! "):
            parts = line[2:].split("\t")
            artifacts.append((parts[0], parts[1] if len(parts) > 1 else ""))
            continue
        token, _, expansion = line.partition("\t")
        if token:
            expansions[token.strip().lower()] = expansion.strip()
    return NormalizationRules(
        abbreviation_expansions=expansions,
        artifact_patterns=tuple(artifacts) if artifacts else DEFAULT_ARTIFACTS,
    )


def default_rules() -> NormalizationRules:
    return load_rules(Path(__file__).parent / "data" / "normalization_rules.txt")


def clean_formatting(text: str, rules: NormalizationRules | None = None) -> str:
    """Remove HTML tags and literal layout artifacts; re-collapse whitespace."""
    rules = rules or NormalizationRules(artifact_patterns=DEFAULT_ARTIFACTS)
    out = _TAG_RE.sub(" ", text)
    for literal, replacement in rules.artifact_patterns or DEFAULT_ARTIFACTS:
        pattern = re.compile(
            r"(?<!\S)" + re.escape(literal) + r"(?!\S)")
        out = pattern.sub(replacement, out)
    out = "\n".join(_WS_RE.sub(" ", line).strip() for line in out.split("\n"))
    return re.sub(r"\n{2,}", "\n\n", out).strip()


_WORD_CORE_RE = re.compile(r"^(\W*)(.*?)(\W*)$", re.DOTALL)


def normalize_spoken(
    text: str,
    rules: NormalizationRules | None = None,
    flagged: list[str] | None = None,
) -> str:
    """Expand abbreviations to spoken forms, preserving capitalization.

    Tokens containing digits or symbols with no covering rule pass through
    unchanged and are appended to `flagged` when a list is supplied.
    """
    rules = rules or default_rules()
    out_tokens = []
    for token in text.split(" "):
        prefix, core, suffix = _WORD_CORE_RE.match(token).groups()
        expansion = None
        if core and suffix.startswith("."):
            # a "token." rule consumes the abbreviation period itself
            expansion = rules.abbreviation_expansions.get(core.lower() + ".")
            if expansion is not None:
                suffix = suffix[1:]
        if expansion is None:
            expansion = rules.abbreviation_expansions.get(core.lower())
        if expansion is not None and core:
            if core[0].isupper():
                expansion = expansion[:1].upper() + expansion[1:]
            out_tokens.append(prefix + expansion + suffix)
            continue
        if flagged is not None and core and not core.replace("-", "").isalpha():
            flagged.append(token)
        out_tokens.append(token)
    return " ".join(out_tokens)


@dataclass(frozen=True)
class EditStats:
    word_edits: int
    ref_words: int
    char_edits: int
    ref_chars: int

    @property
    def wer_pct(self) -> float:
        return 100.0 * self.word_edits / self.ref_words

    @property
    def cer_pct(self) -> float:
        return 100.0 * self.char_edits / self.ref_chars


def levenshtein(ref, hyp) -> int:
    """Unit-cost edit distance over two sequences, two-row DP."""
    if len(ref) < len(hyp):
        ref, hyp = hyp, ref
    prev = list(range(len(hyp) + 1))
    for i, r in enumerate(ref, start=1):
        cur = [i] + [0] * len(hyp)
        for j, h in enumerate(hyp, start=1):
            cur[j] = min(
                prev[j] + 1,
                cur[j - 1] + 1,
                prev[j - 1] + (r != h),
            )
        prev = cur
    return prev[-1]


def edit_stats(ref: str, hyp: str) -> EditStats:
    """Word and character Levenshtein counts between PC-stripped texts.

    Character distance includes spaces. Rates are percentages of the
    reference length and may exceed 100.
    """
    ref_norm = strip_pc(ref)
    hyp_norm = strip_pc(hyp)
    if not ref_norm:
        raise TextError("empty reference")
    ref_words = ref_norm.split()
    hyp_words = hyp_norm.split()
    return EditStats(
        word_edits=levenshtein(ref_words, hyp_words),
        ref_words=len(ref_words),
        char_edits=levenshtein(ref_norm, hyp_norm),
        ref_chars=len(ref_norm),
    )


def passes_cer_gate(stats: EditStats, max_cer_pct: float = 100.0) -> bool:
    """True iff CER is strictly below the threshold (default: drop >= 100%)."""
    return stats.cer_pct < max_cer_pct
