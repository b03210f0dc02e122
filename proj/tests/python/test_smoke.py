import math

import pytest

import emomusic as em


def melody():
    return em.MidiPiece(480, 500000, [em.NoteEvent(60, 0, 480, 100), em.NoteEvent(64, 480, 240, 100)])


def test_entropy_hand_value():
    p = em.MidiPiece(480, 500000, [em.NoteEvent(n, 0, 10) for n in (60, 64, 67)] + [em.NoteEvent(60, 20, 10)])
    assert em.pitch_entropy(p) == 1.5


def test_reference_triple_scores_zero():
    assert em.music_quality_loss(*em.REFERENCE_TRIPLE) == 0.0


def test_midi_bytes_round_trip(tmp_path):
    p = melody()
    data = em.write_midi(p)
    assert data[:4] == b"MThd"
    assert em.parse_midi(data) == p
    em.save_midi(tmp_path / "a.mid", p)
    assert em.read_midi(tmp_path / "a.mid") == p


def test_errors_carry_codes():
    with pytest.raises(em.EmomusicError) as info:
        em.parse_midi(b"RIFF0000")
    assert info.value.code == "MalformedHeader"
    with pytest.raises(em.EmomusicError) as info:
        em.pitch_entropy(em.MidiPiece())
    assert info.value.code == "EmptyPiece"


def test_tokens_round_trip():
    v = em.Vocabulary()
    assert v.size == 391
    ids = em.encode(melody(), v)
    assert ids[0] == em.BOS and ids[-1] == em.EOS
    assert em.well_formed(ids, v)
    assert em.encode(em.decode(ids, v), v) == ids


def test_piano_roll_and_polyphony():
    chord = em.MidiPiece(480, 500000, [em.NoteEvent(60, 0, 240), em.NoteEvent(64, 0, 240)])
    assert em.piano_roll(chord) == [[60, 64], [60, 64]]
    assert em.polyphony_rate(chord) == 1.0


def test_evaluate_reports_short_pieces():
    r = em.evaluate(melody())
    assert r["error"] == "TooShort"
    assert r["music_quality_loss"] is None
    assert r["pitch_entropy"] == 1.0


def test_pairing_prefers_smallest_image_id_on_ties():
    out = em.pair([("m1", 3.0, 2.0)], [("b", 2.0, 2.0), ("a", 4.0, 2.0)])
    assert out == [("m1", "a", 1.0)]
    assert math.isinf(em.similarity((1.0, 1.0), (1.0, 1.0)))
    assert em.normalize_va(0.5, 0.0, 1.0) == 5.0


def test_cli_runs_in_process(tmp_path):
    code, out, err = em.run_cli(["make-desk-data", "--out-dir", str(tmp_path), "--count", "4"])
    assert code == 0, err
    assert (tmp_path / "manifest.json").exists()
    code, _, err = em.run_cli(["metrics", "--midi-dir", str(tmp_path / "midi"), "--out", str(tmp_path / "m.csv")])
    assert code == 0, err
    assert (tmp_path / "m.csv").read_text().startswith("path,polyphony_rate")
    code, _, err = em.run_cli(["train", "--config", str(tmp_path / "missing.json"), "--out-dir", str(tmp_path)])
    assert code == 2 and "IoError" in err
