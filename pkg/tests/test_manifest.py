import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from speechcurate.manifest import (
    ChapterRecord,
    InvariantError,
    ManifestError,
    SubsetSpec,
    UtteranceRecord,
    read_chapters,
    read_manifest,
    write_chapters,
    write_manifest,
)


def make_record(i=0, **overrides):
    fields = dict(
        utterance_id=f"ch1_{i:04d}",
        book_id="b1",
        chapter_id="ch1",
        speaker_id="spk1",
        audio_path="audio/ch1.wav",
        offset_s=1.25,
        duration_s=4.5,
        raw_text="hello world",
        text="Hello, world!",
        text_source="book_match",
        bandwidth_hz=14000,
        wer_pct=0.0,
        cer_pct=1.5,
        num_speakers=1,
        gender="f",
    )
    fields.update(overrides)
    return UtteranceRecord(**fields)


def test_empty_file_gives_empty_sequence(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    assert read_manifest(path) == []


def test_empty_records_give_zero_byte_file(tmp_path):
    path = tmp_path / "out.jsonl"
    write_manifest([], path)
    assert path.read_bytes() == b""


def test_single_record_round_trip(tmp_path):
    path = tmp_path / "one.jsonl"
    rec = make_record()
    write_manifest([rec], path)
    (loaded,) = read_manifest(path)
    assert loaded == rec


def test_round_trip_many(tmp_path):
    records = [make_record(i, duration_s=round(1.0 + i * 0.01, 4)) for i in range(100)]
    path = tmp_path / "many.jsonl"
    write_manifest(records, path)
    assert read_manifest(path) == records


def test_write_is_deterministic(tmp_path):
    records = [make_record(i) for i in range(10)]
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    write_manifest(records, a)
    write_manifest(records, b)
    assert a.read_bytes() == b.read_bytes()


def test_order_preserved(tmp_path):
    records = [make_record(i) for i in (3, 1, 2)]
    path = tmp_path / "ordered.jsonl"
    write_manifest(records, path)
    assert [r.utterance_id for r in read_manifest(path)] == [
        "ch1_0003", "ch1_0001", "ch1_0002"]


def test_negative_duration_names_field(tmp_path):
    path = tmp_path / "bad.jsonl"
    obj = make_record().to_json_dict()
    obj["duration_s"] = -1
    path.write_text(json.dumps(obj) + "\n")
    with pytest.raises(ManifestError, match="duration_s"):
        read_manifest(path)


def test_malformed_line_carries_line_number(tmp_path):
    path = tmp_path / "bad.jsonl"
    write_manifest([make_record(0)], path)
    with open(path, "a") as fh:
        fh.write("{not json\n")
    with pytest.raises(ManifestError, match=":2"):
        read_manifest(path)


def test_duplicate_id_rejected(tmp_path):
    path = tmp_path / "dup.jsonl"
    line = json.dumps(make_record().to_json_dict())
    path.write_text(line + "\n" + line + "\n")
    with pytest.raises(ManifestError, match="duplicate"):
        read_manifest(path)


def test_unknown_fields_survive_round_trip(tmp_path):
    path = tmp_path / "extra.jsonl"
    obj = make_record().to_json_dict()
    obj["custom_tag"] = "kept"
    path.write_text(json.dumps(obj) + "\n")
    (rec,) = read_manifest(path)
    assert rec.extra == {"custom_tag": "kept"}
    out = tmp_path / "extra2.jsonl"
    write_manifest([rec], out)
    assert json.loads(out.read_text())["custom_tag"] == "kept"


def test_absent_metrics_are_omitted_keys(tmp_path):
    rec = make_record(wer_pct=None, cer_pct=None, num_speakers=None)
    obj = rec.to_json_dict()
    for key in ("wer_pct", "cer_pct", "num_speakers"):
        assert key not in obj


def test_bad_text_source_rejected():
    with pytest.raises(InvariantError, match="text_source"):
        make_record(text_source="guessed").validate()


@settings(max_examples=50, deadline=None)
@given(
    offset=st.decimals(min_value=0, max_value=1000, places=4),
    duration=st.decimals(min_value="0.0001", max_value=20, places=4),
    wer=st.one_of(st.none(), st.decimals(min_value=0, max_value=500, places=4)),
)
def test_round_trip_property(tmp_path_factory, offset, duration, wer):
    rec = make_record(
        offset_s=float(offset),
        duration_s=float(duration),
        wer_pct=None if wer is None else float(wer),
    )
    path = tmp_path_factory.mktemp("m") / "p.jsonl"
    write_manifest([rec], path)
    assert read_manifest(path) == [rec]


def test_chapter_round_trip(tmp_path):
    chapters = [
        ChapterRecord("ch1", "b1", "spk1", "raw/ch1.wav", 48000, 20000, "text/ch1.txt"),
        ChapterRecord("ch2", "b1", "spk1", "raw/ch2.wav", 48000),
    ]
    path = tmp_path / "chapters.jsonl"
    write_chapters(chapters, path)
    assert read_chapters(path) == chapters


def test_chapter_bandwidth_above_nyquist_rejected():
    bad = ChapterRecord("ch1", "b1", "s", "a.wav", 16000, bandwidth_hz=9000)
    with pytest.raises(InvariantError, match="bandwidth_hz"):
        bad.validate()


def test_subset_spec_negative_threshold_rejected():
    with pytest.raises(InvariantError, match="min_bandwidth_hz"):
        SubsetSpec(min_bandwidth_hz=-1).validate()
