"""Uniform sliding-window segmentation and center-majority labeling."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

from .core import Annotation, Interval, Segment, interval_intersection_length, to_ms


@dataclass(frozen=True)
class SegmenterConfig:
    window: float = 1.5
    step: float = 0.75
    central_fraction: float = 0.5
    # add one segment ending exactly at the region end when the regular
    # grid stops short of it
    tail_align: bool = True

    def __post_init__(self):
        if not 0 < self.step <= self.window:
            raise ValueError("need 0 < step <= window")
        if not 0 < self.central_fraction <= 1:
            raise ValueError("need 0 < central_fraction <= 1")
        if to_ms(self.step) < 1:
            raise ValueError("step must be at least 1 ms")

    @property
    def window_ms(self) -> int:
        return to_ms(self.window)

    @property
    def step_ms(self) -> int:
        return to_ms(self.step)


def uniform_segment(speech_regions: Iterable[Interval],
                    cfg: SegmenterConfig = SegmenterConfig()) -> list[Segment]:
    """Cut each speech region into windows; segments never cross regions.

    Regions shorter than the window give a single truncated segment.
    """
    win, step = cfg.window_ms, cfg.step_ms
    out = []
    for a, b in speech_regions:
        if b - a <= win:
            out.append(Segment(a, b))
            continue
        start = a
        while start + win <= b:
            out.append(Segment(start, start + win))
            start += step
        if cfg.tail_align and out[-1].end_ms < b:
            out.append(Segment(b - win, b))
    return out


def central_region(seg: Segment, cfg: SegmenterConfig = SegmenterConfig()) -> Interval:
    length = seg.end_ms - seg.start_ms
    width = max(1, int(round(cfg.central_fraction * length)))
    lo = seg.start_ms + (length - width) // 2
    return (lo, lo + width)


def assign_reference_label(seg: Segment, ref: Annotation,
                           cfg: SegmenterConfig = SegmenterConfig()) -> Optional[str]:
    """Speaker talking most inside the segment's central region.

    Ties go to the lexicographically smallest speaker id; ``None`` when
    nobody speaks in the center.
    """
    center = [central_region(seg, cfg)]
    best, best_dur = None, 0
    for spk, regions in sorted(ref.speaker_regions().items()):
        dur = interval_intersection_length(regions, center)
        if dur > best_dur:
            best, best_dur = spk, dur
    return best


def label_segments(segments: Iterable[Segment], ref: Annotation,
                   cfg: SegmenterConfig = SegmenterConfig()) -> list[Segment]:
    return [Segment(s.start_ms, s.end_ms, assign_reference_label(s, ref, cfg))
            for s in segments]


def segments_to_annotation(recording_id: str, segments: list[Segment], labels: list[str],
                           total_duration_ms: Optional[int] = None) -> Annotation:
    """Turn labeled, possibly overlapping segments into a single-label annotation.

    Where consecutive segments overlap, the boundary is placed at the
    midpoint of the shared part.
    """
    if len(segments) != len(labels):
        raise ValueError(f"{len(segments)} segments but {len(labels)} labels")
    order = sorted(range(len(segments)), key=lambda i: segments[i].interval)
    regions: dict[str, list[Interval]] = {}
    owned_end = 0
    for pos, i in enumerate(order):
        seg = segments[i]
        start = max(seg.start_ms, owned_end)
        end = seg.end_ms
        if pos + 1 < len(order):
            nxt = segments[order[pos + 1]]
            if nxt.start_ms < seg.end_ms:
                end = (nxt.start_ms + seg.end_ms) // 2
        if end > start:
            regions.setdefault(labels[i], []).append((start, end))
            owned_end = end
    return Annotation.from_regions(recording_id, regions, total_duration_ms)
