import pytest
from hypothesis import given, strategies as st

from diarkit.core import Annotation, Segment, SpeakerTurn, merge_intervals, total_length
from diarkit.segmenter import (
    SegmenterConfig,
    assign_reference_label,
    central_region,
    segments_to_annotation,
    uniform_segment,
)


def test_regular_grid_without_tail():
    segs = uniform_segment([(0, 10_000)], SegmenterConfig(tail_align=False))
    assert len(segs) == 12
    assert [s.start_ms for s in segs] == [750 * i for i in range(12)]
    assert all(s.end_ms - s.start_ms == 1500 for s in segs)


def test_tail_alignment_adds_final_window():
    segs = uniform_segment([(0, 10_000)])
    assert len(segs) == 13
    assert segs[-1] == Segment(8500, 10_000)


def test_short_and_exact_regions():
    assert uniform_segment([(0, 1000)]) == [Segment(0, 1000)]
    assert uniform_segment([(0, 1500)]) == [Segment(0, 1500)]


@given(st.lists(st.tuples(st.integers(0, 50_000), st.integers(1, 8_000)), max_size=6))
def test_segments_cover_speech_and_stay_inside(raw):
    regions = merge_intervals((s, s + d) for s, d in raw)
    segs = uniform_segment(regions)
    assert merge_intervals(s.interval for s in segs) == regions
    for s in segs:
        assert s.end_ms - s.start_ms <= 1500
        assert any(a <= s.start_ms and s.end_ms <= b for a, b in regions)


def test_central_region():
    assert central_region(Segment(0, 1500)) == (375, 1125)


def test_reference_label_examples():
    ref = Annotation("r", (SpeakerTurn(0, 1000, "A"), SpeakerTurn(1000, 500, "B")))
    assert assign_reference_label(Segment(0, 1500), ref) == "A"
    single = Annotation("r", (SpeakerTurn(0, 5000, "Z"),))
    assert assign_reference_label(Segment(0, 1500), single) == "Z"
    tie = Annotation("r", (SpeakerTurn(0, 750, "B"), SpeakerTurn(750, 750, "A")))
    assert assign_reference_label(Segment(0, 1500), tie) == "A"
    assert assign_reference_label(Segment(0, 1500), Annotation("r")) is None


def test_segments_to_annotation_splits_overlaps_at_midpoint():
    segs = uniform_segment([(0, 3000)])
    out = segments_to_annotation("r", segs, ["A", "A", "B"])
    assert out.speaker_regions() == {"A": [(0, 1875)], "B": [(1875, 3000)]}


@given(st.lists(st.tuples(st.integers(0, 30_000), st.integers(1, 6_000)), min_size=1, max_size=5),
       st.randoms())
def test_segments_to_annotation_is_single_label_and_covers(raw, rnd):
    regions = merge_intervals((s, s + d) for s, d in raw)
    segs = uniform_segment(regions)
    labels = [rnd.choice("AB") for _ in segs]
    ann = segments_to_annotation("r", segs, labels)
    speaker_time = sum(t.duration_ms for t in ann.turns)
    assert speaker_time == total_length(ann.speech_regions())
    assert ann.speech_regions() == regions


def test_config_validation():
    with pytest.raises(ValueError):
        SegmenterConfig(window=1.0, step=2.0)
    with pytest.raises(ValueError):
        SegmenterConfig(central_fraction=0)
