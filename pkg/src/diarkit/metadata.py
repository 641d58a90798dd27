"""Corpus metadata: speech percentage, overlapped error, per-domain tables."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

from .core import Annotation, total_length


@dataclass(frozen=True)
class RecordingStats:
    recording_id: str
    domain: str
    n_speakers: int
    duration_ms: int
    speech_ms: int        # dur of the union of all speaker regions
    speaker_time_ms: int  # sum over speakers of their own region duration

    @property
    def duration(self) -> float:
        return self.duration_ms / 1000

    @property
    def speech_pct(self) -> float:
        return 100.0 * self.speech_ms / self.duration_ms

    @property
    def overlap_err(self) -> float:
        if self.speaker_time_ms == 0:
            return 0.0
        return 100.0 * (self.speaker_time_ms - self.speech_ms) / self.speaker_time_ms


def _speaker_time(ann: Annotation) -> int:
    # turns are merged per speaker on construction, so the plain sum is
    # the sum of per-speaker region durations
    return sum(t.duration_ms for t in ann.turns)


def speech_percentage(ann: Annotation) -> float:
    if ann.total_duration_ms <= 0:
        raise ValueError(f"{ann.recording_id}: zero total duration")
    return 100.0 * total_length(ann.speech_regions()) / ann.total_duration_ms


def overlapped_error(ann: Annotation) -> float:
    """Share of speaker time that a single-label system must get wrong."""
    speaker_time = _speaker_time(ann)
    if speaker_time == 0:
        raise ValueError(f"{ann.recording_id}: no speech")
    union = total_length(ann.speech_regions())
    return 100.0 * (speaker_time - union) / speaker_time


def recording_stats(ann: Annotation, domain: str = "") -> RecordingStats:
    if ann.total_duration_ms <= 0:
        raise ValueError(f"{ann.recording_id}: zero total duration")
    return RecordingStats(
        recording_id=ann.recording_id,
        domain=domain,
        n_speakers=len(ann.speakers),
        duration_ms=ann.total_duration_ms,
        speech_ms=total_length(ann.speech_regions()),
        speaker_time_ms=_speaker_time(ann),
    )


@dataclass(frozen=True)
class DomainRow:
    domain: str
    n_audios: int
    min_speakers: int
    max_speakers: int
    mean_duration: float   # seconds
    speech_pct: float
    overlap_err: float

    @property
    def speaker_range(self) -> str:
        if self.min_speakers == self.max_speakers:
            return str(self.min_speakers)
        return f"{self.min_speakers}~{self.max_speakers}"


def aggregate(stats: Iterable[RecordingStats], name: str, pooled: bool = True) -> DomainRow:
    """Aggregate per-recording stats.

    With ``pooled`` the percentages are ratios of summed durations;
    otherwise they are means of per-recording percentages.
    """
    stats = list(stats)
    if not stats:
        raise ValueError(f"no recordings for {name!r}")
    if pooled:
        duration = sum(s.duration_ms for s in stats)
        speech = sum(s.speech_ms for s in stats)
        speaker_time = sum(s.speaker_time_ms for s in stats)
        speech_pct = 100.0 * speech / duration
        overlap = 100.0 * (speaker_time - speech) / speaker_time if speaker_time else 0.0
    else:
        speech_pct = sum(s.speech_pct for s in stats) / len(stats)
        overlap = sum(s.overlap_err for s in stats) / len(stats)
    return DomainRow(
        domain=name,
        n_audios=len(stats),
        min_speakers=min(s.n_speakers for s in stats),
        max_speakers=max(s.n_speakers for s in stats),
        mean_duration=sum(s.duration_ms for s in stats) / len(stats) / 1000,
        speech_pct=speech_pct,
        overlap_err=overlap,
    )


def domain_report(annotations: Mapping[str, Annotation] | Iterable[Annotation],
                  domain_map: Mapping[str, str], pooled: bool = True) -> list[DomainRow]:
    """One row per domain (sorted by descending overlap error) plus an ``ALL`` row."""
    if isinstance(annotations, Mapping):
        annotations = annotations.values()
    stats = []
    for ann in annotations:
        if ann.recording_id not in domain_map:
            raise KeyError(f"recording {ann.recording_id!r} has no domain")
        stats.append(recording_stats(ann, domain_map[ann.recording_id]))
    return stats_report(stats, pooled)


def stats_report(stats: Iterable[RecordingStats], pooled: bool = True) -> list[DomainRow]:
    """Group precomputed stats by domain; same row order as :func:`domain_report`."""
    stats = list(stats)
    by_domain: dict[str, list[RecordingStats]] = {}
    for st in stats:
        by_domain.setdefault(st.domain, []).append(st)
    rows = [aggregate(v, k, pooled) for k, v in by_domain.items()]
    rows.sort(key=lambda r: (-r.overlap_err, r.domain))
    rows.append(aggregate(stats, "ALL", pooled))
    return rows


COLUMNS = ("domains", "n_audios", "n_speakers", "average duration",
           "speech percentage(%)", "overlapped error(%)")


def _fmt_duration(seconds: float) -> str:
    total = int(round(seconds))
    return f"{total // 60}min {total % 60}s"


def _cells(row: DomainRow) -> list[str]:
    return [row.domain, str(row.n_audios), row.speaker_range,
            _fmt_duration(row.mean_duration), f"{row.speech_pct:.2f}",
            f"{row.overlap_err:.2f}"]


def format_tsv(rows: Iterable[DomainRow]) -> str:
    lines = ["\t".join(COLUMNS)]
    lines += ["\t".join(_cells(r)) for r in rows]
    return "\n".join(lines) + "\n"


def format_text(rows: Iterable[DomainRow]) -> str:
    table = [list(COLUMNS)] + [_cells(r) for r in rows]
    widths = [max(len(r[i]) for r in table) for i in range(len(COLUMNS))]
    return "".join(
        "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths))) + "\n"
        for r in table)
