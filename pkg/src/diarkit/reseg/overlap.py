"""Speaker labels for detected overlapped-speech regions."""

from __future__ import annotations

import logging
from typing import Iterable

from ..core import Annotation, Interval, SpeakerTurn, interval_intersection_length

log = logging.getLogger(__name__)


def assign_overlap_labels(diar: Annotation, overlap_regions: Iterable[Interval],
                          frame_step_ms: int = 10, extend_frames: int = 20) -> Annotation:
    """Give each overlap region every speaker found near it.

    Each region ``[a, b)`` is widened by ``extend_frames`` frames on both
    sides (clipped to the recording); all speakers with diarized speech in
    the widened region become simultaneous labels of ``[a, b)``. Nothing
    outside the overlap regions changes. When widened regions touch other
    overlap regions, labels added to one can reach the next, so the
    assignment is repeated until nothing changes; this makes the function
    idempotent.
    """
    pad = extend_frames * frame_step_ms
    end_limit = diar.total_duration_ms
    targets = []
    for a, b in overlap_regions:
        b = min(b, end_limit)
        if b > a:
            targets.append(((a, b), [(max(0, a - pad), min(end_limit, b + pad))]))
    out = diar
    warned = set()
    while True:
        regions = out.speaker_regions()
        extra = []
        for (a, b), ext in targets:
            speakers = [spk for spk, ivs in sorted(regions.items())
                        if interval_intersection_length(ivs, ext) > 0]
            if not speakers and (a, b) not in warned:
                warned.add((a, b))
                log.warning("%s: no speaker near overlap region [%d, %d) ms",
                            diar.recording_id, a, b)
            extra.extend(SpeakerTurn(a, b - a, spk, diar.recording_id) for spk in speakers)
        if not extra:
            return out
        updated = Annotation(diar.recording_id, out.turns + tuple(extra), diar.total_duration_ms)
        if updated == out:
            return out
        out = updated
