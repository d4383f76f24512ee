"""Catalog-metadata client for an audiobook-library HTTP JSON API.

Fetches paginated book/chapter metadata, applies the opt-out speaker
exclusion list, and materializes ChapterRecords plus a URL list for
external bulk transfer tooling.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import requests

from .manifest import ChapterRecord

logger = logging.getLogger(__name__)

DEFAULT_PAGE_SIZE = 50
DEFAULT_MAX_RETRIES = 3
RETRIABLE_STATUSES = {429, 500, 502, 503, 504}


class IngestError(Exception):
    pass


@dataclass(frozen=True)
class ChapterEntry:
    chapter_id: str
    audio_url: str
    reader_id: str


@dataclass(frozen=True)
class CatalogEntry:
    book_id: str
    title: str
    language: str
    chapters: tuple[ChapterEntry, ...]


def _get_with_retries(session, url, params, max_retries, backoff_s):
    last_exc = None
    for attempt in range(max_retries):
        try:
            resp = session.get(url, params=params, timeout=30)
        except requests.ConnectionError as exc:
            last_exc = exc
            time.sleep(backoff_s * 2**attempt)
            continue
        if resp.status_code in RETRIABLE_STATUSES:
            last_exc = IngestError(f"HTTP {resp.status_code} from {url}")
            time.sleep(backoff_s * 2**attempt)
            continue
        if resp.status_code != 200:
            raise IngestError(f"HTTP {resp.status_code} from {url}")
        return resp
    raise IngestError(f"giving up after {max_retries} attempts: {last_exc}")


def fetch_catalog(
    base_url: str,
    query: dict | None = None,
    page_size: int = DEFAULT_PAGE_SIZE,
    max_retries: int = DEFAULT_MAX_RETRIES,
    backoff_s: float = 0.5,
    session: requests.Session | None = None,
) -> list[CatalogEntry]:
    """Drain all catalog pages, deduplicating by book_id.

    Entries are returned sorted by book_id so that concurrent page fetches
    elsewhere cannot change the result order. Chapters without an audio URL
    are skipped with a warning.
    """
    session = session or requests.Session()
    query = dict(query or {})
    entries: dict[str, CatalogEntry] = {}
    offset = 0
    while True:
        params = {**query, "offset": offset, "limit": page_size}
        resp = _get_with_retries(session, base_url, params, max_retries, backoff_s)
        try:
            payload = resp.json()
        except (json.JSONDecodeError, ValueError) as exc:
            raise IngestError(f"malformed JSON from {base_url}: {exc}") from exc
        books = payload.get("books", [])
        for book in books:
            entry = _parse_book(book)
            if entry is None:
                continue
            entries.setdefault(entry.book_id, entry)
        if len(books) < page_size:
            break
        offset += page_size
    return [entries[book_id] for book_id in sorted(entries)]


def _parse_book(book: dict) -> CatalogEntry | None:
    try:
        book_id = str(book["id"])
    except (KeyError, TypeError):
        logger.warning("skipping catalog entry without an id: %r", book)
        return None
    chapters = []
    for section in book.get("sections", []):
        audio_url = section.get("audio_url")
        readers = section.get("readers") or []
        if not audio_url:
            logger.warning("book %s: section %r has no audio URL, skipped",
                           book_id, section.get("id"))
            continue
        if not readers:
            logger.warning("book %s: section %r has no readers, skipped",
                           book_id, section.get("id"))
            continue
        chapters.append(
            ChapterEntry(
                chapter_id=str(section.get("id", f"{book_id}_{len(chapters)}")),
                audio_url=audio_url,
                reader_id=str(readers[0]),
            )
        )
    return CatalogEntry(
        book_id=book_id,
        title=book.get("title", ""),
        language=book.get("language", ""),
        chapters=tuple(chapters),
    )


def load_exclusion_list(path: str | Path) -> frozenset[str]:
    """One speaker id per line; `#` starts a comment."""
    excluded = set()
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            excluded.add(line)
    return frozenset(excluded)


def apply_exclusions(
    entries: list[CatalogEntry], excluded_speaker_ids: frozenset[str] | set[str]
) -> list[CatalogEntry]:
    """Drop every chapter read by an opted-out speaker."""
    out = []
    removed = 0
    for entry in entries:
        kept = tuple(c for c in entry.chapters if c.reader_id not in excluded_speaker_ids)
        removed += len(entry.chapters) - len(kept)
        if kept:
            out.append(CatalogEntry(entry.book_id, entry.title, entry.language, kept))
    if removed:
        logger.info("excluded %d chapters from opted-out speakers", removed)
    return out


def chapters_from_catalog(
    entries: list[CatalogEntry],
    audio_dir: str | Path,
    sample_rate_hz: int = 48000,
) -> list[ChapterRecord]:
    """Materialize ChapterRecords with local paths under audio_dir."""
    records = []
    for entry in entries:
        for chapter in entry.chapters:
            suffix = Path(chapter.audio_url).suffix or ".mp3"
            records.append(
                ChapterRecord(
                    chapter_id=chapter.chapter_id,
                    book_id=entry.book_id,
                    speaker_id=chapter.reader_id,
                    audio_path=str(Path(audio_dir) / f"{chapter.chapter_id}{suffix}"),
                    sample_rate_hz=sample_rate_hz,
                )
            )
    return records


def write_url_list(entries: list[CatalogEntry], path: str | Path) -> None:
    """Audio URL list for external download tooling, one URL per line."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for entry in entries:
            for chapter in entry.chapters:
                fh.write(chapter.audio_url + "\n")
