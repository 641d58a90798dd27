"""Readers and writers for the on-disk formats.

Every text format is UTF-8 with whitespace-separated columns. Parsers take
either the full text as a ``str`` or any iterable of lines (an open file),
and raise :class:`FormatError` carrying the 1-based line number.

Formats
-------
RTTM
    ``SPEAKER <file> <chan> <onset> <dur> <NA> <NA> <speaker> <NA> <NA>``
UEM
    ``<file> <chan> <onset> <offset>``
regions (VAD labels, overlap regions)
    ``<file> <onset> <dur>``
segments
    ``<file> <start> <end> [label]``
embeddings
    header ``n d``, then ``n`` rows ``start end v1 ... vd``; a binary variant
    starts with ``DKEB``, u32 ``n``, u32 ``d`` and ``n*(2+d)`` little-endian f64
features
    header ``T d frame_step frame_length``, then ``T`` rows of ``d`` values
score matrix
    header ``n``, then ``n`` rows of ``n`` values
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from typing import Iterable, Iterator, Mapping, Optional, Union

import numpy as np

from .core import (
    Annotation,
    EmbeddingSet,
    Interval,
    ScoreMatrix,
    Segment,
    SpeakerTurn,
    format_seconds,
    merge_intervals,
    to_ms,
)

Source = Union[str, Iterable[str]]

BINARY_MAGIC = b"DKEB"


class FormatError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _lines(source: Source) -> Iterator[tuple[int, list[str]]]:
    """Yield ``(line_number, fields)`` for non-blank lines."""
    if isinstance(source, str):
        source = source.splitlines()
    for lineno, line in enumerate(source, start=1):
        fields = line.split()
        if fields:
            yield lineno, fields


def _ms(text: str, lineno: int, what: str) -> int:
    try:
        value = Decimal(text)
    except InvalidOperation:
        raise FormatError(f"bad {what} {text!r}", lineno) from None
    if not value.is_finite():
        raise FormatError(f"bad {what} {text!r}", lineno)
    return to_ms(value)


def _float(text: str, lineno: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise FormatError(f"bad number {text!r}", lineno) from None
    if not np.isfinite(value):
        raise FormatError(f"non-finite value {text!r}", lineno)
    return value


def _int(text: str, lineno: int, what: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise FormatError(f"bad {what} {text!r}", lineno) from None


def _fmt(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# RTTM
# ---------------------------------------------------------------------------

def parse_rttm(source: Source,
               durations: Optional[Mapping[str, int]] = None) -> dict[str, Annotation]:
    """Parse SPEAKER rows into one :class:`Annotation` per recording.

    ``durations`` optionally maps recording ids to total durations in ms;
    otherwise the total duration is the end of the last turn.
    """
    turns: dict[str, list[SpeakerTurn]] = {}
    for lineno, f in _lines(source):
        if f[0] != "SPEAKER":
            continue
        if len(f) != 10:
            raise FormatError(f"SPEAKER row needs 10 fields, got {len(f)}", lineno)
        rec, chan = f[1], f[2]
        onset = _ms(f[3], lineno, "onset")
        dur = _ms(f[4], lineno, "duration")
        if onset < 0:
            raise FormatError(f"negative onset {f[3]}", lineno)
        if dur < 0:
            raise FormatError(f"negative duration {f[4]}", lineno)
        channel = _int(chan, lineno, "channel") if chan.lstrip("-").isdigit() else 1
        turns.setdefault(rec, [])
        if dur == 0:
            continue
        turns[rec].append(SpeakerTurn(onset, dur, f[7], rec, channel))
    durations = durations or {}
    out = {}
    for rec, ts in turns.items():
        try:
            out[rec] = Annotation(rec, tuple(ts), durations.get(rec))
        except ValueError as exc:
            raise FormatError(str(exc)) from None
    return out


def emit_rttm(annotations: Union[Annotation, Iterable[Annotation], Mapping[str, Annotation]]) -> str:
    if isinstance(annotations, Annotation):
        annotations = [annotations]
    elif isinstance(annotations, Mapping):
        annotations = annotations.values()
    lines = []
    for ann in annotations:
        for t in ann.turns:
            lines.append(
                f"SPEAKER {ann.recording_id} {t.channel} {format_seconds(t.onset_ms)} "
                f"{format_seconds(t.duration_ms)} <NA> <NA> {t.speaker_id} <NA> <NA>")
    return "".join(line + "\n" for line in lines)


# ---------------------------------------------------------------------------
# UEM, regions, segments
# ---------------------------------------------------------------------------

def parse_uem(source: Source) -> dict[str, list[Interval]]:
    out: dict[str, list[Interval]] = {}
    for lineno, f in _lines(source):
        if f[0].startswith("#"):
            continue
        if len(f) != 4:
            raise FormatError(f"UEM row needs 4 fields, got {len(f)}", lineno)
        start = _ms(f[2], lineno, "onset")
        end = _ms(f[3], lineno, "offset")
        if start < 0 or end < start:
            raise FormatError(f"bad UEM interval [{f[2]}, {f[3]})", lineno)
        out.setdefault(f[0], []).append((start, end))
    return {rec: merge_intervals(ivs) for rec, ivs in out.items()}


def emit_uem(regions: Mapping[str, Iterable[Interval]], channel: int = 1) -> str:
    return "".join(
        f"{rec} {channel} {format_seconds(s)} {format_seconds(e)}\n"
        for rec, ivs in regions.items() for s, e in ivs)


def parse_regions(source: Source) -> dict[str, list[Interval]]:
    """Parse ``<file> <onset> <dur>`` triples into merged interval lists."""
    out: dict[str, list[Interval]] = {}
    for lineno, f in _lines(source):
        if f[0].startswith("#"):
            continue
        if len(f) != 3:
            raise FormatError(f"region row needs 3 fields, got {len(f)}", lineno)
        onset = _ms(f[1], lineno, "onset")
        dur = _ms(f[2], lineno, "duration")
        if onset < 0 or dur < 0:
            raise FormatError("negative onset or duration", lineno)
        out.setdefault(f[0], []).append((onset, onset + dur))
    return {rec: merge_intervals(ivs) for rec, ivs in out.items()}


def emit_regions(regions: Mapping[str, Iterable[Interval]]) -> str:
    return "".join(
        f"{rec} {format_seconds(s)} {format_seconds(e - s)}\n"
        for rec, ivs in regions.items() for s, e in ivs)


parse_overlap_regions = parse_regions
emit_overlap_regions = emit_regions


def parse_segments(source: Source) -> dict[str, list[Segment]]:
    out: dict[str, list[Segment]] = {}
    for lineno, f in _lines(source):
        if len(f) not in (3, 4):
            raise FormatError(f"segment row needs 3 or 4 fields, got {len(f)}", lineno)
        start = _ms(f[1], lineno, "start")
        end = _ms(f[2], lineno, "end")
        if start < 0 or end <= start:
            raise FormatError(f"bad segment [{f[1]}, {f[2]})", lineno)
        out.setdefault(f[0], []).append(Segment(start, end, f[3] if len(f) == 4 else None))
    return out


def emit_segments(recording_id: str, segments: Iterable[Segment]) -> str:
    lines = []
    for s in segments:
        row = f"{recording_id} {format_seconds(s.start_ms)} {format_seconds(s.end_ms)}"
        if s.label is not None:
            row += f" {s.label}"
        lines.append(row + "\n")
    return "".join(lines)


# ---------------------------------------------------------------------------
# VAD labels
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class VadLabels:
    recording_id: str
    frame_step_ms: int
    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 1:
            raise ValueError("VAD labels must be one-dimensional")
        if not np.all((labels == 0) | (labels == 1)):
            raise ValueError("VAD labels must be 0 or 1")
        if self.frame_step_ms <= 0:
            raise ValueError("frame step must be positive")
        object.__setattr__(self, "labels", labels.astype(np.int8))

    @property
    def n_frames(self) -> int:
        return len(self.labels)

    def __eq__(self, other):
        if not isinstance(other, VadLabels):
            return NotImplemented
        return (self.recording_id == other.recording_id
                and self.frame_step_ms == other.frame_step_ms
                and np.array_equal(self.labels, other.labels))


def regions_to_vad(recording_id: str, regions: Iterable[Interval], frame_step_ms: int,
                   n_frames: int) -> VadLabels:
    """Frame ``t`` is speech when its midpoint lies inside a region."""
    labels = np.zeros(n_frames, dtype=np.int8)
    mids = np.arange(n_frames) * frame_step_ms + frame_step_ms // 2
    for s, e in regions:
        labels[(mids >= s) & (mids < e)] = 1
    return VadLabels(recording_id, frame_step_ms, labels)


def vad_to_regions(vad: VadLabels) -> list[Interval]:
    padded = np.concatenate([[0], vad.labels, [0]]).astype(np.int8)
    edges = np.flatnonzero(np.diff(padded))
    step = vad.frame_step_ms
    return [(int(a) * step, int(b) * step) for a, b in zip(edges[::2], edges[1::2])]


# ---------------------------------------------------------------------------
# embeddings
# ---------------------------------------------------------------------------

def _matrix_rows(lines: Iterator[tuple[int, list[str]]], n: int, width: int,
                 what: str) -> np.ndarray:
    out = np.empty((n, width))
    for i in range(n):
        try:
            lineno, f = next(lines)
        except StopIteration:
            raise FormatError(f"expected {n} {what} rows, got {i}") from None
        if len(f) != width:
            raise FormatError(f"{what} row needs {width} fields, got {len(f)}", lineno)
        out[i] = [_float(x, lineno) for x in f]
    for lineno, _ in lines:
        raise FormatError(f"trailing data after {n} {what} rows", lineno)
    return out


def _header(lines: Iterator[tuple[int, list[str]]], size: int, what: str) -> tuple[int, list[str]]:
    try:
        lineno, f = next(lines)
    except StopIteration:
        raise FormatError(f"empty {what} file") from None
    if len(f) != size:
        raise FormatError(f"{what} header needs {size} fields, got {len(f)}", lineno)
    return lineno, f


def parse_embeddings(source: Union[Source, bytes], recording_id: str = "") -> EmbeddingSet:
    if isinstance(source, (bytes, bytearray)):
        return parse_embeddings_binary(bytes(source), recording_id)
    lines = _lines(source)
    lineno, f = _header(lines, 2, "embedding")
    n, d = _int(f[0], lineno, "count"), _int(f[1], lineno, "dimension")
    if n == 0:
        raise FormatError("empty embedding set", lineno)
    if n < 0 or d < 1:
        raise FormatError(f"bad embedding header {n} {d}", lineno)
    segments = []
    vectors = np.empty((n, d))
    for i in range(n):
        try:
            lineno, f = next(lines)
        except StopIteration:
            raise FormatError(f"expected {n} embedding rows, got {i}") from None
        if len(f) != d + 2:
            raise FormatError(f"embedding row needs {d + 2} fields, got {len(f)}", lineno)
        start, end = _ms(f[0], lineno, "start"), _ms(f[1], lineno, "end")
        if start < 0 or end <= start:
            raise FormatError(f"bad segment [{f[0]}, {f[1]})", lineno)
        segments.append(Segment(start, end))
        vectors[i] = [_float(x, lineno) for x in f[2:]]
    for lineno, _ in lines:
        raise FormatError(f"trailing data after {n} embedding rows", lineno)
    try:
        return EmbeddingSet(recording_id, tuple(segments), vectors)
    except ValueError as exc:
        raise FormatError(str(exc)) from None


def emit_embeddings(emb: EmbeddingSet) -> str:
    lines = [f"{emb.n} {emb.dim}\n"]
    for seg, vec in emb.entries:
        lines.append(f"{format_seconds(seg.start_ms)} {format_seconds(seg.end_ms)} "
                     + " ".join(_fmt(v) for v in vec) + "\n")
    return "".join(lines)


def parse_embeddings_binary(data: bytes, recording_id: str = "") -> EmbeddingSet:
    if len(data) < 12 or data[:4] != BINARY_MAGIC:
        raise FormatError("missing DKEB magic")
    n, d = struct.unpack("<II", data[4:12])
    if n == 0:
        raise FormatError("empty embedding set")
    if d == 0:
        raise FormatError("embedding dimension must be positive")
    expected = 12 + 8 * n * (d + 2)
    if len(data) != expected:
        raise FormatError(f"binary payload is {len(data)} bytes, expected {expected}")
    payload = np.frombuffer(data, dtype="<f8", offset=12).reshape(n, d + 2)
    if not np.all(np.isfinite(payload)):
        raise FormatError("non-finite value in binary payload")
    segments = []
    for i, (start, end) in enumerate(payload[:, :2]):
        s, e = to_ms(start), to_ms(end)
        if s < 0 or e <= s:
            raise FormatError(f"bad segment in row {i}")
        segments.append(Segment(s, e))
    try:
        return EmbeddingSet(recording_id, tuple(segments), payload[:, 2:].copy())
    except ValueError as exc:
        raise FormatError(str(exc)) from None


def emit_embeddings_binary(emb: EmbeddingSet) -> bytes:
    payload = np.empty((emb.n, emb.dim + 2), dtype="<f8")
    payload[:, 0] = [s.start_ms / 1000 for s in emb.segments]
    payload[:, 1] = [s.end_ms / 1000 for s in emb.segments]
    payload[:, 2:] = emb.vectors
    return BINARY_MAGIC + struct.pack("<II", emb.n, emb.dim) + payload.tobytes()


def load_embeddings(path, recording_id: Optional[str] = None) -> EmbeddingSet:
    """Read a text or binary embedding file, detected by the magic bytes."""
    from pathlib import Path

    path = Path(path)
    rec = recording_id if recording_id is not None else path.name.split(".")[0]
    data = path.read_bytes()
    if data[:4] == BINARY_MAGIC:
        return parse_embeddings_binary(data, rec)
    return parse_embeddings(data.decode("utf-8"), rec)


# ---------------------------------------------------------------------------
# frame features
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FrameFeatures:
    recording_id: str
    frames: np.ndarray
    frame_step_ms: int = 10
    frame_length_ms: int = 25

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=float)
        if frames.ndim != 2 or frames.shape[0] < 1 or frames.shape[1] < 1:
            raise ValueError(f"features must be a non-empty T x d matrix, got {frames.shape}")
        if not np.all(np.isfinite(frames)):
            raise ValueError("features contain NaN or Inf")
        if self.frame_step_ms <= 0 or self.frame_length_ms <= 0:
            raise ValueError("frame step and length must be positive")
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]

    def __eq__(self, other):
        if not isinstance(other, FrameFeatures):
            return NotImplemented
        return (self.recording_id == other.recording_id
                and self.frame_step_ms == other.frame_step_ms
                and self.frame_length_ms == other.frame_length_ms
                and self.frames.shape == other.frames.shape
                and bool(np.array_equal(self.frames, other.frames)))


def parse_features(source: Source, recording_id: str = "") -> FrameFeatures:
    lines = _lines(source)
    lineno, f = _header(lines, 4, "feature")
    t, d = _int(f[0], lineno, "frame count"), _int(f[1], lineno, "dimension")
    step, length = _ms(f[2], lineno, "frame step"), _ms(f[3], lineno, "frame length")
    if t < 1 or d < 1 or step <= 0 or length <= 0:
        raise FormatError("bad feature header", lineno)
    frames = _matrix_rows(lines, t, d, "feature")
    return FrameFeatures(recording_id, frames, step, length)


def emit_features(feats: FrameFeatures) -> str:
    lines = [f"{feats.n_frames} {feats.dim} {format_seconds(feats.frame_step_ms)} "
             f"{format_seconds(feats.frame_length_ms)}\n"]
    lines.extend(" ".join(_fmt(v) for v in row) + "\n" for row in feats.frames)
    return "".join(lines)


# ---------------------------------------------------------------------------
# score matrices
# ---------------------------------------------------------------------------

def parse_score_matrix(source: Source) -> ScoreMatrix:
    lines = _lines(source)
    lineno, f = _header(lines, 1, "score matrix")
    n = _int(f[0], lineno, "size")
    if n < 1:
        raise FormatError(f"bad score matrix size {n}", lineno)
    return ScoreMatrix(_matrix_rows(lines, n, n, "score matrix"))


def emit_score_matrix(matrix: ScoreMatrix) -> str:
    lines = [f"{matrix.n}\n"]
    lines.extend(" ".join(_fmt(v) for v in row) + "\n" for row in matrix.values)
    return "".join(lines)


def parse_matrix_block(source: Source, what: str = "matrix") -> np.ndarray:
    """Header ``n d`` followed by ``n`` rows of ``d`` values."""
    lines = _lines(source)
    lineno, f = _header(lines, 2, what)
    n, d = _int(f[0], lineno, "rows"), _int(f[1], lineno, "columns")
    if n < 1 or d < 1:
        raise FormatError(f"bad {what} header", lineno)
    return _matrix_rows(lines, n, d, what)


def emit_matrix_block(rows: np.ndarray) -> str:
    rows = np.atleast_2d(rows)
    lines = [f"{rows.shape[0]} {rows.shape[1]}\n"]
    lines.extend(" ".join(_fmt(v) for v in row) + "\n" for row in rows)
    return "".join(lines)
