"""Strict diarization error rate and frame-level VAD accuracy."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import Annotation, Interval, intersect_intervals, merge_intervals
from .ingest import VadLabels


@dataclass(frozen=True)
class DerBreakdown:
    """Error components in milliseconds of speaker time."""

    missed_ms: int
    false_alarm_ms: int
    confusion_ms: int
    scored_speech_ms: int

    @property
    def correct_ms(self) -> int:
        return self.scored_speech_ms - self.missed_ms - self.confusion_ms

    @property
    def missed(self) -> float:
        return self.missed_ms / 1000

    @property
    def false_alarm(self) -> float:
        return self.false_alarm_ms / 1000

    @property
    def confusion(self) -> float:
        return self.confusion_ms / 1000

    @property
    def scored_speech(self) -> float:
        return self.scored_speech_ms / 1000

    @property
    def der(self) -> float:
        if self.scored_speech_ms == 0:
            raise ZeroDivisionError("no scored reference speech")
        return 100.0 * (self.missed_ms + self.false_alarm_ms + self.confusion_ms) / self.scored_speech_ms

    def __add__(self, other: "DerBreakdown") -> "DerBreakdown":
        return DerBreakdown(self.missed_ms + other.missed_ms,
                            self.false_alarm_ms + other.false_alarm_ms,
                            self.confusion_ms + other.confusion_ms,
                            self.scored_speech_ms + other.scored_speech_ms)


def _regions(ann: Annotation, uem: Optional[Sequence[Interval]]) -> dict[str, list[Interval]]:
    out = {}
    for spk, ivs in ann.speaker_regions().items():
        if uem is not None:
            ivs = intersect_intervals(ivs, uem)
        if ivs:
            out[spk] = ivs
    return out


def _activity(regions: dict[str, list[Interval]], bounds: np.ndarray) -> np.ndarray:
    """Boolean (n_speakers, n_pieces) activity on the elementary pieces."""
    act = np.zeros((len(regions), len(bounds) - 1), dtype=bool)
    for row, ivs in enumerate(regions.values()):
        for s, e in ivs:
            lo = np.searchsorted(bounds, s)
            hi = np.searchsorted(bounds, e)
            act[row, lo:hi] = True
    return act


def speaker_mapping(ref: Annotation, hyp: Annotation,
                    uem: Optional[Sequence[Interval]] = None) -> dict[str, str]:
    """Optimal one-to-one hyp -> ref mapping maximizing co-occurring time."""
    return der_details(ref, hyp, uem)[1]


def der_details(ref: Annotation, hyp: Annotation,
                uem: Optional[Sequence[Interval]] = None) -> tuple[DerBreakdown, dict[str, str]]:
    if uem is not None:
        uem = merge_intervals(uem)
    ref_regions = _regions(ref, uem)
    hyp_regions = _regions(hyp, uem)
    if not ref_regions:
        raise ValueError(f"{ref.recording_id}: no reference speech to score")
    points = {p for ivs in ref_regions.values() for iv in ivs for p in iv}
    points |= {p for ivs in hyp_regions.values() for iv in ivs for p in iv}
    bounds = np.array(sorted(points), dtype=np.int64)
    widths = np.diff(bounds)
    r_act = _activity(ref_regions, bounds)
    h_act = _activity(hyp_regions, bounds)
    n_ref = r_act.sum(axis=0)
    n_hyp = h_act.sum(axis=0)

    mapping: dict[str, str] = {}
    correct = 0
    if hyp_regions:
        cooc = (r_act * widths) @ h_act.T.astype(np.int64)
        rows, cols = linear_sum_assignment(cooc, maximize=True)
        ref_names, hyp_names = list(ref_regions), list(hyp_regions)
        for r, h in zip(rows, cols):
            if cooc[r, h] > 0:
                mapping[hyp_names[h]] = ref_names[r]
                correct += int(cooc[r, h])

    scored = int(np.sum(widths * n_ref))
    missed = int(np.sum(widths * np.maximum(n_ref - n_hyp, 0)))
    false_alarm = int(np.sum(widths * np.maximum(n_hyp - n_ref, 0)))
    confusion = int(np.sum(widths * np.minimum(n_ref, n_hyp))) - correct
    return DerBreakdown(missed, false_alarm, confusion, scored), mapping


def der(ref: Annotation, hyp: Annotation,
        uem: Optional[Sequence[Interval]] = None) -> DerBreakdown:
    """Zero-collar DER with overlapped speech scored.

    Every reference speaker-second counts; the hypothesis may be
    multi-label. ``uem`` restricts scoring to the given regions.
    """
    return der_details(ref, hyp, uem)[0]


def pooled_der(breakdowns: Iterable[DerBreakdown]) -> DerBreakdown:
    total = DerBreakdown(0, 0, 0, 0)
    for b in breakdowns:
        total = total + b
    return total


def vad_accuracy(ref: VadLabels, hyp: VadLabels) -> float:
    if ref.n_frames != hyp.n_frames:
        raise ValueError(f"frame count mismatch: {ref.n_frames} vs {hyp.n_frames}")
    if ref.frame_step_ms != hyp.frame_step_ms:
        raise ValueError("frame step mismatch")
    if ref.n_frames == 0:
        raise ValueError("no frames to compare")
    return 100.0 * float(np.mean(ref.labels == hyp.labels))

