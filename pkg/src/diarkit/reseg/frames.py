"""Frame-level speaker assignments and conversion to/from annotations."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from ..core import Annotation, Interval

SILENCE = -1


@dataclass(eq=False)
class FrameAssignment:
    """Per-frame speaker index, ``SILENCE`` (-1) for non-speech frames.

    ``posteriors`` (T x S) rows sum to one on speech frames and are zero
    elsewhere. ``elbo`` holds the variational bound after each update when
    the assignment came out of VB resegmentation.
    """

    labels: np.ndarray
    n_speakers: int
    speaker_names: Optional[tuple[str, ...]] = None
    posteriors: Optional[np.ndarray] = None
    n_iters: int = 0
    elbo: list = field(default_factory=list)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=int)
        if self.labels.ndim != 1:
            raise ValueError("frame labels must be one-dimensional")
        if self.labels.size and (self.labels.min() < SILENCE or self.labels.max() >= self.n_speakers):
            raise ValueError("frame label out of range")
        if self.speaker_names is not None and len(self.speaker_names) != self.n_speakers:
            raise ValueError("need one name per speaker")

    @property
    def n_frames(self) -> int:
        return len(self.labels)

    @property
    def speech_mask(self) -> np.ndarray:
        return self.labels != SILENCE

    def names(self) -> tuple[str, ...]:
        if self.speaker_names is not None:
            return self.speaker_names
        return tuple(f"spk{i}" for i in range(self.n_speakers))


def frame_midpoints(n_frames: int, step_ms: int) -> np.ndarray:
    return np.arange(n_frames, dtype=np.int64) * step_ms + step_ms // 2


def regions_to_mask(regions: Iterable[Interval], n_frames: int, step_ms: int) -> np.ndarray:
    mids = frame_midpoints(n_frames, step_ms)
    mask = np.zeros(n_frames, dtype=bool)
    for s, e in regions:
        mask[np.searchsorted(mids, s):np.searchsorted(mids, e)] = True
    return mask


def annotation_to_frames(ann: Annotation, n_frames: int, step_ms: int,
                         speakers: Optional[Sequence[str]] = None) -> FrameAssignment:
    """Label each frame with the speaker active at its midpoint.

    Where several speakers are active, the one listed first wins.
    """
    speakers = tuple(speakers) if speakers is not None else tuple(ann.speakers)
    regions = ann.speaker_regions()
    labels = np.full(n_frames, SILENCE, dtype=int)
    for idx in reversed(range(len(speakers))):
        mask = regions_to_mask(regions.get(speakers[idx], []), n_frames, step_ms)
        labels[mask] = idx
    return FrameAssignment(labels, len(speakers), speakers)


def frames_to_annotation(fa: FrameAssignment, recording_id: str, step_ms: int,
                         total_duration_ms: Optional[int] = None) -> Annotation:
    names = fa.names()
    regions: dict[str, list[Interval]] = {}
    labels = fa.labels
    if len(labels):
        change = np.flatnonzero(np.diff(labels)) + 1
        starts = np.concatenate([[0], change])
        ends = np.concatenate([change, [len(labels)]])
        for a, b in zip(starts, ends):
            lab = labels[a]
            if lab == SILENCE:
                continue
            s, e = int(a) * step_ms, int(b) * step_ms
            if total_duration_ms is not None:
                e = min(e, total_duration_ms)
            if e > s:
                regions.setdefault(names[lab], []).append((s, e))
    return Annotation.from_regions(recording_id, regions, total_duration_ms)
