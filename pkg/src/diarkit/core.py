"""Domain types and exact interval algebra.

All times are integer milliseconds. Intervals are half-open ``(start, end)``
tuples with ``start < end``; seconds only appear at I/O boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable, Optional, Sequence

import numpy as np

Interval = tuple[int, int]


def to_ms(seconds) -> int:
    """Convert seconds (float, int, str or Decimal) to integer milliseconds."""
    if isinstance(seconds, str):
        seconds = Decimal(seconds)
    if isinstance(seconds, Decimal):
        return int((seconds * 1000).quantize(Decimal(1), rounding=ROUND_HALF_UP))
    return int(round(float(seconds) * 1000))


def to_seconds(ms: int) -> float:
    return ms / 1000.0


def format_seconds(ms: int) -> str:
    """Exact decimal text for a millisecond count, always three decimals."""
    sign = "-" if ms < 0 else ""
    ms = abs(ms)
    return f"{sign}{ms // 1000}.{ms % 1000:03d}"


# ---------------------------------------------------------------------------
# interval algebra
# ---------------------------------------------------------------------------

def merge_intervals(intervals: Iterable[Interval]) -> list[Interval]:
    """Union of arbitrary intervals as a sorted disjoint list.

    Abutting intervals are fused, so the result has no zero-length gaps.
    """
    out: list[list[int]] = []
    for start, end in sorted(intervals):
        if end <= start:
            continue
        if out and start <= out[-1][1]:
            if end > out[-1][1]:
                out[-1][1] = end
        else:
            out.append([start, end])
    return [(s, e) for s, e in out]


def timeline_union(turns: Iterable["SpeakerTurn"]) -> list[Interval]:
    """Disjoint sorted intervals covering every turn."""
    return merge_intervals((t.onset_ms, t.end_ms) for t in turns)


def total_length(intervals: Iterable[Interval]) -> int:
    return sum(e - s for s, e in intervals)


def intersect_intervals(a: Sequence[Interval], b: Sequence[Interval]) -> list[Interval]:
    """Pointwise intersection of two sorted disjoint lists (two-pointer sweep)."""
    out = []
    i = j = 0
    while i < len(a) and j < len(b):
        start = max(a[i][0], b[j][0])
        end = min(a[i][1], b[j][1])
        if start < end:
            out.append((start, end))
        if a[i][1] < b[j][1]:
            i += 1
        else:
            j += 1
    return out


def interval_intersection_length(a: Sequence[Interval], b: Sequence[Interval]) -> int:
    return total_length(intersect_intervals(a, b))


def subtract_intervals(a: Sequence[Interval], b: Sequence[Interval]) -> list[Interval]:
    """Parts of ``a`` not covered by ``b``; both sorted and disjoint."""
    out = []
    j = 0
    for start, end in a:
        cur = start
        while j < len(b) and b[j][1] <= cur:
            j += 1
        k = j
        while k < len(b) and b[k][0] < end:
            if b[k][0] > cur:
                out.append((cur, b[k][0]))
            cur = max(cur, b[k][1])
            k += 1
        if cur < end:
            out.append((cur, end))
    return out


def clip_intervals(intervals: Sequence[Interval], lo: int, hi: int) -> list[Interval]:
    return intersect_intervals(intervals, [(lo, hi)]) if hi > lo else []


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True, order=True)
class SpeakerTurn:
    onset_ms: int
    duration_ms: int
    speaker_id: str
    recording_id: str = ""
    channel: int = 1

    def __post_init__(self):
        if self.onset_ms < 0:
            raise ValueError(f"negative onset {self.onset_ms} ms")
        if self.duration_ms <= 0:
            raise ValueError(f"non-positive duration {self.duration_ms} ms")

    @property
    def end_ms(self) -> int:
        return self.onset_ms + self.duration_ms

    @property
    def onset(self) -> float:
        return to_seconds(self.onset_ms)

    @property
    def duration(self) -> float:
        return to_seconds(self.duration_ms)

    @property
    def interval(self) -> Interval:
        return (self.onset_ms, self.end_ms)


@dataclass(frozen=True)
class Annotation:
    """Speaker activity for one recording.

    Turns of the same speaker that overlap or abut are merged on
    construction, and turns are kept sorted by ``(onset, speaker_id)``.
    ``total_duration_ms`` defaults to the end of the last turn.
    """

    recording_id: str
    turns: tuple[SpeakerTurn, ...] = ()
    total_duration_ms: Optional[int] = None

    def __post_init__(self):
        by_speaker: dict[str, list[SpeakerTurn]] = {}
        for t in self.turns:
            by_speaker.setdefault(t.speaker_id, []).append(t)
        merged = []
        for spk, turns in by_speaker.items():
            channel = turns[0].channel
            for s, e in merge_intervals(t.interval for t in turns):
                merged.append(SpeakerTurn(s, e - s, spk, self.recording_id, channel))
        merged.sort(key=lambda t: (t.onset_ms, t.speaker_id, t.end_ms))
        last_end = max((t.end_ms for t in merged), default=0)
        total = self.total_duration_ms
        if total is None:
            total = last_end
        elif last_end > total:
            raise ValueError(
                f"{self.recording_id}: turn ends at {last_end} ms, "
                f"after total duration {total} ms")
        object.__setattr__(self, "turns", tuple(merged))
        object.__setattr__(self, "total_duration_ms", int(total))

    @property
    def total_duration(self) -> float:
        return to_seconds(self.total_duration_ms)

    @property
    def speakers(self) -> list[str]:
        return sorted({t.speaker_id for t in self.turns})

    def speaker_regions(self) -> dict[str, list[Interval]]:
        out: dict[str, list[Interval]] = {}
        for t in self.turns:
            out.setdefault(t.speaker_id, []).append(t.interval)
        return out

    def speech_regions(self) -> list[Interval]:
        return timeline_union(self.turns)

    def with_duration(self, total_duration_ms: int) -> "Annotation":
        return Annotation(self.recording_id, self.turns, total_duration_ms)

    @classmethod
    def from_regions(cls, recording_id: str, regions: dict[str, Iterable[Interval]],
                     total_duration_ms: Optional[int] = None) -> "Annotation":
        turns = [SpeakerTurn(s, e - s, spk, recording_id)
                 for spk, ivs in regions.items() for s, e in ivs if e > s]
        return cls(recording_id, tuple(turns), total_duration_ms)


@dataclass(frozen=True)
class Segment:
    start_ms: int
    end_ms: int
    label: Optional[str] = None

    def __post_init__(self):
        if self.end_ms <= self.start_ms:
            raise ValueError(f"empty segment [{self.start_ms}, {self.end_ms})")

    @property
    def start(self) -> float:
        return to_seconds(self.start_ms)

    @property
    def end(self) -> float:
        return to_seconds(self.end_ms)

    @property
    def interval(self) -> Interval:
        return (self.start_ms, self.end_ms)


@dataclass(frozen=True, eq=False)
class EmbeddingSet:
    """One embedding vector per segment, sorted by segment start."""

    recording_id: str
    segments: tuple[Segment, ...]
    vectors: np.ndarray

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=float)
        if vectors.ndim != 2:
            raise ValueError("embedding vectors must be a 2-D array")
        if len(self.segments) != vectors.shape[0]:
            raise ValueError(
                f"{len(self.segments)} segments but {vectors.shape[0]} vectors")
        if vectors.shape[0] == 0:
            raise ValueError("empty embedding set")
        if vectors.shape[1] < 1:
            raise ValueError("embedding dimension must be positive")
        if not np.all(np.isfinite(vectors)):
            raise ValueError("embedding vectors contain NaN or Inf")
        starts = [s.start_ms for s in self.segments]
        if starts != sorted(starts):
            raise ValueError("embedding entries must be sorted by segment start")
        vectors.setflags(write=False)
        object.__setattr__(self, "segments", tuple(self.segments))
        object.__setattr__(self, "vectors", vectors)

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def entries(self) -> list[tuple[Segment, np.ndarray]]:
        return list(zip(self.segments, self.vectors))

    def __eq__(self, other):
        if not isinstance(other, EmbeddingSet):
            return NotImplemented
        return (self.recording_id == other.recording_id
                and self.segments == other.segments
                and self.vectors.shape == other.vectors.shape
                and bool(np.array_equal(self.vectors, other.vectors)))


@dataclass(frozen=True, eq=False)
class ScoreMatrix:
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError(f"score matrix must be square, got shape {values.shape}")
        if values.shape[0] < 1:
            raise ValueError("score matrix must be non-empty")
        if not np.all(np.isfinite(values)):
            raise ValueError("score matrix contains NaN or Inf")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def is_symmetric(self) -> bool:
        return bool(np.array_equal(self.values, self.values.T))

    def __eq__(self, other):
        if not isinstance(other, ScoreMatrix):
            return NotImplemented
        return (self.values.shape == other.values.shape
                and bool(np.array_equal(self.values, other.values)))
