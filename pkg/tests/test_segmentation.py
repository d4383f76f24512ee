import pytest

from speechcurate.manifest import UtteranceRecord
from speechcurate.segmentation import (
    AlignmentError,
    AlignmentToken,
    Pause,
    apply_split,
    choose_split,
    find_candidate_pauses,
    load_alignment_json,
    load_alignments_jsonl,
    load_ctm,
    load_default_abbreviations,
    utterance_seed,
)

ABBREVS = load_default_abbreviations()


def track_for(words_with_times):
    return [AlignmentToken(w, s, e) for w, s, e in words_with_times]


def make_record(duration_s=15.0, text="It ended. Then more", **overrides):
    fields = dict(
        utterance_id="ch1_0001",
        book_id="b1",
        chapter_id="ch1",
        speaker_id="s1",
        audio_path="a.wav",
        offset_s=2.0,
        duration_s=duration_s,
        raw_text="it ended then more",
        text=text,
        text_source="book_match",
        wer_pct=1.0,
        cer_pct=0.5,
    )
    fields.update(overrides)
    return UtteranceRecord(**fields)


class TestFindCandidatePauses:
    def test_period_then_pause(self):
        track = track_for([("it", 0.0, 0.4), ("ended", 0.5, 1.0),
                           ("then", 1.2, 1.5), ("more", 1.6, 2.0)])
        pauses = find_candidate_pauses(track, "It ended. Then more", abbreviations=ABBREVS)
        assert pauses == [Pause(1.0, 1.2, 1)]

    def test_abbreviation_period_ignored(self):
        track = track_for([("mr", 0.0, 0.3), ("smith", 0.6, 1.0), ("spoke", 1.1, 1.6)])
        pauses = find_candidate_pauses(track, "Mr. Smith spoke", abbreviations=ABBREVS)
        assert pauses == []

    def test_below_threshold_ignored(self):
        track = track_for([("over", 0.0, 1.0), ("next", 1.07, 2.0)])
        assert find_candidate_pauses(track, "over. next", abbreviations=ABBREVS) == []

    def test_exact_threshold_included(self):
        track = track_for([("over", 0.0, 1.0), ("next", 1.08, 2.0)])
        pauses = find_candidate_pauses(track, "over. next", abbreviations=ABBREVS)
        assert len(pauses) == 1

    def test_no_period_no_candidates(self):
        track = track_for([("a", 0.0, 0.2), ("b", 1.0, 1.2)])
        assert find_candidate_pauses(track, "a b", abbreviations=ABBREVS) == []

    def test_token_count_mismatch(self):
        track = track_for([("a", 0.0, 0.2)])
        with pytest.raises(AlignmentError, match="words"):
            find_candidate_pauses(track, "a b", abbreviations=ABBREVS)

    def test_period_with_closing_quote(self):
        track = track_for([("stop", 0.0, 0.5), ("then", 1.0, 1.4)])
        pauses = find_candidate_pauses(track, 'stop." Then', abbreviations=ABBREVS)
        assert len(pauses) == 1


class TestChooseSplit:
    def test_empty_no_split(self):
        decision = choose_split([], rng_seed=1)
        assert decision.split_point_s is None
        assert decision.chosen_index is None

    def test_longest_wins(self):
        pauses = [Pause(1.0, 1.1, 0), Pause(5.0, 5.3, 3)]
        decision = choose_split(pauses, rng_seed=1)
        assert decision.chosen_index == 1
        assert decision.split_point_s == pytest.approx(5.15)

    def test_tie_break_deterministic(self):
        pauses = [Pause(1.0, 1.25, 0), Pause(5.0, 5.25, 3)]
        seed = utterance_seed("some_utt", 42)
        picks = {choose_split(pauses, seed).chosen_index for _ in range(10)}
        assert len(picks) == 1

    def test_tie_break_depends_on_seed(self):
        pauses = [Pause(1.0, 1.25, 0), Pause(5.0, 5.25, 3)]
        picks = {choose_split(pauses, utterance_seed(f"utt{i}", 0)).chosen_index
                 for i in range(64)}
        assert picks == {0, 1}  # both sides reachable over many utterances

    def test_midpoint(self):
        decision = choose_split([Pause(2.0, 2.5, 1)], rng_seed=0)
        assert decision.split_point_s == pytest.approx(2.25)


class TestApplySplit:
    def test_no_split_identity(self):
        rec = make_record()
        decision = choose_split([], 0)
        assert apply_split(rec, decision, []) == [rec]

    def test_two_children_partition_duration(self):
        rec = make_record(duration_s=15.0)
        track = track_for([("it", 0.0, 2.0), ("ended", 2.5, 7.0),
                           ("then", 7.2, 9.0), ("more", 9.5, 15.0)])
        decision = choose_split(
            find_candidate_pauses(track, rec.text, abbreviations=ABBREVS), 7)
        a, b = apply_split(rec, decision, track)
        assert a.utterance_id == "ch1_0001_a"
        assert b.utterance_id == "ch1_0001_b"
        assert a.duration_s == pytest.approx(7.1)
        assert a.duration_s + b.duration_s == rec.duration_s  # exact
        assert b.offset_s == rec.offset_s + a.duration_s

    def test_transcript_partitioned_at_period(self):
        rec = make_record(text="A b. C d", raw_text="a b c d")
        track = track_for([("a", 0.0, 1.0), ("b", 1.0, 2.0),
                           ("c", 3.0, 4.0), ("d", 4.0, 5.0)])
        decision = choose_split(
            find_candidate_pauses(track, rec.text, abbreviations=ABBREVS), 0)
        a, b = apply_split(rec, decision, track)
        assert a.text == "A b."
        assert b.text == "C d"
        assert a.raw_text == "a b"
        assert b.raw_text == "c d"
        assert f"{a.text} {b.text}" == rec.text

    def test_metrics_cleared_and_metadata_copied(self):
        rec = make_record(bandwidth_hz=14000, num_speakers=1)
        track = track_for([("it", 0.0, 2.0), ("ended", 2.5, 7.0),
                           ("then", 7.2, 9.0), ("more", 9.5, 15.0)])
        decision = choose_split(
            find_candidate_pauses(track, rec.text, abbreviations=ABBREVS), 0)
        a, b = apply_split(rec, decision, track)
        for child in (a, b):
            assert child.wer_pct is None
            assert child.cer_pct is None
            assert child.bandwidth_hz == 14000
            assert child.num_speakers == 1
            assert child.speaker_id == rec.speaker_id

    def test_split_point_out_of_range(self):
        rec = make_record(duration_s=5.0)
        from speechcurate.segmentation import SplitDecision

        decision = SplitDecision(7.0, (Pause(6.9, 7.1, 1),), 0)
        with pytest.raises(AlignmentError, match="outside"):
            apply_split(rec, decision, [])

    def test_children_within_parent_span(self):
        rec = make_record(duration_s=12.0, offset_s=3.0)
        track = track_for([("it", 0.0, 2.0), ("ended", 2.5, 5.0),
                           ("then", 5.5, 9.0), ("more", 9.5, 12.0)])
        decision = choose_split(
            find_candidate_pauses(track, rec.text, abbreviations=ABBREVS), 0)
        a, b = apply_split(rec, decision, track)
        assert a.offset_s >= rec.offset_s
        assert b.offset_s + b.duration_s <= rec.offset_s + rec.duration_s + 1e-12


class TestReaders:
    def test_alignment_json(self, tmp_path):
        path = tmp_path / "utt.json"
        path.write_text('[{"word": "hi", "start": 0.0, "end": 0.5}]')
        (tok,) = load_alignment_json(path)
        assert tok == AlignmentToken("hi", 0.0, 0.5)

    def test_alignments_jsonl(self, tmp_path):
        path = tmp_path / "all.jsonl"
        path.write_text(
            '{"utterance_id": "u1", "tokens": [{"word": "a", "start": 0, "end": 1}]}\n'
            '{"utterance_id": "u2", "tokens": []}\n'
        )
        tracks = load_alignments_jsonl(path)
        assert set(tracks) == {"u1", "u2"}
        assert tracks["u1"][0].word == "a"

    def test_ctm(self, tmp_path):
        path = tmp_path / "all.ctm"
        path.write_text("u1 1 0.00 0.50 hello\nu1 1 0.60 0.40 world\n")
        tracks = load_ctm(path)
        assert [t.word for t in tracks["u1"]] == ["hello", "world"]
        assert tracks["u1"][1].end_s == pytest.approx(1.0)

    def test_bad_token_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('[{"word": "x", "start": 2.0, "end": 1.0}]')
        with pytest.raises(AlignmentError):
            load_alignment_json(path)


def test_utterance_seed_stable():
    assert utterance_seed("u1", 7) == utterance_seed("u1", 7)
    assert utterance_seed("u1", 7) != utterance_seed("u2", 7)
    assert utterance_seed("u1", 7) != utterance_seed("u1", 8)
