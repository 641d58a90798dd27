import numpy as np
import pytest

from diarkit.core import Annotation, Segment, SpeakerTurn
from diarkit.ingest import (
    FormatError,
    VadLabels,
    emit_embeddings,
    emit_embeddings_binary,
    emit_features,
    emit_regions,
    emit_rttm,
    emit_score_matrix,
    emit_segments,
    emit_uem,
    load_embeddings,
    parse_embeddings,
    parse_features,
    parse_regions,
    parse_rttm,
    parse_score_matrix,
    parse_segments,
    parse_uem,
    regions_to_vad,
    vad_to_regions,
)

from generators import random_annotation, random_embeddings, random_features, random_score_matrix

RTTM_LINE = "SPEAKER rec1 1 0.00 10.00 <NA> <NA> A <NA> <NA>"


def test_parse_single_rttm_line():
    anns = parse_rttm(RTTM_LINE)
    assert list(anns) == ["rec1"]
    assert anns["rec1"].turns == (SpeakerTurn(0, 10_000, "A", "rec1"),)


def test_parse_rttm_merges_same_speaker():
    text = ("SPEAKER rec1 1 0 5 <NA> <NA> A <NA> <NA>\n"
            "SPEAKER rec1 1 3 5 <NA> <NA> A <NA> <NA>\n")
    assert [t.interval for t in parse_rttm(text)["rec1"].turns] == [(0, 8000)]


def test_parse_rttm_skips_other_rows():
    text = "SPKR-INFO rec1 1 <NA> <NA> <NA> unknown A <NA> <NA>\n" + RTTM_LINE
    assert len(parse_rttm(text)["rec1"].turns) == 1


@pytest.mark.parametrize("line", [
    "SPEAKER rec1 1 0.00 10.00 <NA> <NA> A <NA>",
    "SPEAKER rec1 1 0.00 -1.00 <NA> <NA> A <NA> <NA>",
    "SPEAKER rec1 1 abc 1.00 <NA> <NA> A <NA> <NA>",
])
def test_parse_rttm_errors_carry_line_number(line):
    with pytest.raises(FormatError) as err:
        parse_rttm(RTTM_LINE + "\n" + line)
    assert err.value.line == 2
    assert str(err.value).startswith("line 2:")


def test_emit_rttm_trivial_cases():
    assert emit_rttm(Annotation("r")) == ""
    out = emit_rttm(Annotation("r", (SpeakerTurn(0, 10_000, "A"),)))
    assert out == "SPEAKER r 1 0.000 10.000 <NA> <NA> A <NA> <NA>\n"


def test_rttm_round_trip_random():
    rng = np.random.default_rng(1)
    for _ in range(100):
        ann = random_annotation(rng, extra_tail=False)
        assert parse_rttm(emit_rttm(ann))[ann.recording_id] == ann


def test_rttm_accepts_file_object(tmp_path):
    p = tmp_path / "a.rttm"
    p.write_text(RTTM_LINE + "\n")
    with open(p) as fh:
        assert "rec1" in parse_rttm(fh)


def test_uem_and_regions_round_trip():
    uem = {"a": [(0, 1500), (2000, 2500)], "b": [(10, 20)]}
    assert parse_uem(emit_uem(uem)) == uem
    regions = {"a": [(0, 1234), (5000, 5001)]}
    assert parse_regions(emit_regions(regions)) == regions
    with pytest.raises(FormatError):
        parse_uem("a 1 5.0 4.0")


def test_segments_round_trip():
    segs = [Segment(0, 1500, "A"), Segment(750, 2250)]
    assert parse_segments(emit_segments("r", segs)) == {"r": segs}


def test_embedding_examples():
    with pytest.raises(FormatError, match="empty embedding set"):
        parse_embeddings("0 4\n")
    emb = parse_embeddings("3 2\n0 1.5 1 2\n0.75 2.25 3 4\n1.5 3 5 6\n", "r")
    assert (emb.n, emb.dim) == (3, 2)
    assert emb.segments[1] == Segment(750, 2250)
    with pytest.raises(FormatError):
        parse_embeddings("1 2\n0 1 1 2\n0 1 1 2\n")  # trailing row
    with pytest.raises(FormatError):
        parse_embeddings("1 2\n0 1 1\n")


def test_embedding_round_trips(tmp_path):
    rng = np.random.default_rng(2)
    for _ in range(50):
        emb = random_embeddings(rng)
        assert parse_embeddings(emit_embeddings(emb), emb.recording_id) == emb
        assert parse_embeddings(emit_embeddings_binary(emb), emb.recording_id) == emb
    (tmp_path / "x.emb").write_bytes(emit_embeddings_binary(emb))
    assert load_embeddings(tmp_path / "x.emb", emb.recording_id) == emb
    (tmp_path / "rec.emb").write_text(emit_embeddings(emb))
    assert load_embeddings(tmp_path / "rec.emb") == emb


def test_features_and_scores_round_trip():
    rng = np.random.default_rng(3)
    for _ in range(50):
        f = random_features(rng)
        assert parse_features(emit_features(f), f.recording_id) == f
        m = random_score_matrix(rng)
        assert parse_score_matrix(emit_score_matrix(m)) == m


def test_score_matrix_non_square_payload():
    with pytest.raises(FormatError):
        parse_score_matrix("2\n1 2\n3\n")
    with pytest.raises(FormatError):
        parse_score_matrix("2\n1 2\n3 4\n5 6\n")


def test_vad_regions_midpoint_rule():
    vad = regions_to_vad("r", [(0, 25), (40, 60)], 10, 7)
    assert vad.labels.tolist() == [1, 1, 0, 0, 1, 1, 0]
    assert vad_to_regions(vad) == [(0, 20), (40, 60)]
    with pytest.raises(ValueError):
        VadLabels("r", 10, [0, 2])
