"""Synthetic conversations with known ground truth.

Timelines alternate speakers with log-normal turn lengths. Overlap is made
by pulling a turn's onset back into the previous turn, never by more than
45% of either turn, so at most two speakers are ever active at once and the
overlapped speaker time is exactly the sum of the pull-backs. Silence is
spread over the leading/trailing edges and the non-overlapping turn
transitions.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .core import Annotation, EmbeddingSet, Interval, Segment, SpeakerTurn, merge_intervals
from .ingest import FrameFeatures
from .reseg.frames import annotation_to_frames
from .segmenter import SegmenterConfig, assign_reference_label, uniform_segment

MIN_TURN_MS = 300
MAX_PULLBACK = 0.45


@dataclass(frozen=True)
class CorpusProfile:
    n_recordings: int = 4
    duration_range: tuple[float, float] = (60.0, 120.0)
    speaker_range: tuple[int, int] = (2, 4)
    speech_pct: float = 76.0
    overlap_pct: float = 10.8
    embedding_dim: int = 32
    between_spread: float = 1.0
    within_spread: float = 0.2
    feature_dim: int = 24
    feature_separation: float = 1.0
    frame_step: float = 0.010
    mean_turn: float = 3.0
    turn_sigma: float = 0.6
    domain: str = "synthetic"
    rng_seed: int = 0
    segmenter: SegmenterConfig = field(default_factory=SegmenterConfig)

    def __post_init__(self):
        lo, hi = self.duration_range
        if not 0 < lo <= hi:
            raise ValueError("duration range must be non-empty and positive")
        lo_s, hi_s = self.speaker_range
        if not 1 <= lo_s <= hi_s <= 10:
            raise ValueError("speaker range must lie within 1..10")
        if self.n_recordings < 1:
            raise ValueError("need at least one recording")
        if not 0 < self.speech_pct <= 100:
            raise ValueError("speech percentage must lie in (0, 100]")
        if not 0 <= self.overlap_pct < 100:
            raise ValueError("overlap percentage must lie in [0, 100)")
        if self.overlap_pct > self.speech_pct:
            raise ValueError("infeasible targets: overlap exceeds speech")
        if min(self.between_spread, self.within_spread, self.feature_separation) <= 0:
            raise ValueError("spreads must be positive")
        if self.embedding_dim < 1 or self.feature_dim < 1:
            raise ValueError("dimensions must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> "CorpusProfile":
        data = dict(data)
        for key in ("duration_range", "speaker_range"):
            if key in data:
                data[key] = tuple(data[key])
        if "segmenter" in data:
            data["segmenter"] = SegmenterConfig(**data["segmenter"])
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Recording:
    reference: Annotation
    embeddings: EmbeddingSet
    features: FrameFeatures
    segments: list[Segment]
    speaker_time_ms: int  # generator bookkeeping
    speech_ms: int


def recording_seed(seed: int, recording_id: str) -> int:
    return (seed * 1_000_003 + zlib.crc32(recording_id.encode())) % (2 ** 32)


def _durations(rng, target_ms: int, mean_turn: float, sigma: float) -> list[int]:
    out, total = [], 0
    median = np.log(mean_turn * 1000) - sigma ** 2 / 2
    while total < target_ms:
        d = max(MIN_TURN_MS, int(round(rng.lognormal(median, sigma))))
        d = min(d, target_ms - total) if target_ms - total >= MIN_TURN_MS else d
        out.append(d)
        total += d
    return out


def generate_timeline(rng: np.random.Generator, recording_id: str, n_speakers: int,
                      duration_ms: int, speech_pct: float, overlap_pct: float,
                      mean_turn: float = 3.0, turn_sigma: float = 0.6) -> tuple[Annotation, int, int]:
    """Return the annotation, total speaker time and union speech time (ms)."""
    r = speech_pct / 100
    o = overlap_pct / 100 if n_speakers > 1 else 0.0
    speaker_time_target = int(round(r * duration_ms / (1 - o)))
    durs = _durations(rng, max(speaker_time_target, MIN_TURN_MS), mean_turn, turn_sigma)
    m = len(durs)

    # pull-backs on a random subset of transitions
    need = int(round(o * sum(durs)))
    pull = [0] * m
    if need > 0:
        if m < 2:
            raise ValueError("infeasible targets: overlap needs at least two turns")
        caps = {i: int(MAX_PULLBACK * min(durs[i - 1], durs[i])) for i in range(1, m)}
        order = rng.permutation(np.arange(1, m))
        chosen, cap_sum = [], 0
        for i in order:
            chosen.append(int(i))
            cap_sum += caps[int(i)]
            if cap_sum * 0.6 >= need:
                break
        if cap_sum < need:
            raise ValueError("infeasible targets: overlap too large for the turn structure")
        frac = need / cap_sum
        for i in chosen:
            pull[i] = int(frac * caps[i])
        short = need - sum(pull)
        for i in chosen:
            if short == 0:
                break
            extra = min(caps[i] - pull[i], short)
            pull[i] += extra
            short -= extra

    speaker_time = sum(durs)
    speech = speaker_time - sum(pull)
    total = int(round(speech / r))
    silence = total - speech
    gap_slots = [i for i in range(1, m) if pull[i] == 0]
    weights = rng.dirichlet(np.ones(len(gap_slots) + 2))
    shares = np.floor(weights * silence).astype(int)
    shares[-1] += silence - shares.sum()
    lead = int(shares[0])
    gaps = dict(zip(gap_slots, (int(x) for x in shares[1:-1])))

    names = [f"S{i + 1:02d}" for i in range(n_speakers)]
    order = list(rng.permutation(n_speakers))
    turns, cursor, prev = [], lead, None
    for i, d in enumerate(durs):
        if i < n_speakers:
            spk = int(order[i])
        elif n_speakers > 1:
            spk = int(rng.choice([s for s in range(n_speakers) if s != prev]))
        else:
            spk = 0
        start = cursor - pull[i] + gaps.get(i, 0)
        turns.append(SpeakerTurn(start, d, names[spk], recording_id))
        cursor = start + d
        prev = spk
    ann = Annotation(recording_id, tuple(turns), total)
    return ann, speaker_time, speech


def overlap_regions(ann: Annotation) -> list[Interval]:
    """Regions where at least two speakers are active."""
    events = []
    for t in ann.turns:
        events.append((t.onset_ms, 1))
        events.append((t.end_ms, -1))
    events.sort()
    out, active, start = [], 0, None
    for pos, delta in events:
        before = active
        active += delta
        if before < 2 <= active:
            start = pos
        elif before >= 2 > active and pos > start:
            out.append((start, pos))
    return merge_intervals(out)


def speaker_feature_model(rng: np.random.Generator, dim: int, separation: float,
                          n_components: int = 4) -> tuple[np.ndarray, np.ndarray]:
    center = rng.normal(0.0, separation, dim)
    means = center + rng.normal(0.0, 0.5 * separation, (n_components, dim))
    return means, np.ones((n_components, dim))


def sample_frames(rng: np.random.Generator, model: tuple[np.ndarray, np.ndarray],
                  n: int) -> np.ndarray:
    means, variances = model
    comp = rng.integers(len(means), size=n)
    return means[comp] + rng.normal(size=(n, means.shape[1])) * np.sqrt(variances[comp])


def generate_recording(profile: CorpusProfile, recording_id: str,
                       n_speakers: Optional[int] = None) -> Recording:
    rng = np.random.default_rng(recording_seed(profile.rng_seed, recording_id))
    if n_speakers is None:
        n_speakers = int(rng.integers(profile.speaker_range[0], profile.speaker_range[1] + 1))
    duration_ms = int(round(rng.uniform(*profile.duration_range) * 1000))
    ann, speaker_time, speech = generate_timeline(
        rng, recording_id, n_speakers, duration_ms, profile.speech_pct,
        profile.overlap_pct, profile.mean_turn, profile.turn_sigma)

    segments = uniform_segment(ann.speech_regions(), profile.segmenter)
    centers = {spk: rng.normal(0.0, profile.between_spread, profile.embedding_dim)
               for spk in ann.speakers}
    labeled, vectors = [], []
    for seg in segments:
        spk = assign_reference_label(seg, ann, profile.segmenter)
        labeled.append(Segment(seg.start_ms, seg.end_ms, spk))
        vectors.append(centers[spk] + rng.normal(0.0, profile.within_spread, profile.embedding_dim))
    embeddings = EmbeddingSet(recording_id, tuple(Segment(s.start_ms, s.end_ms) for s in labeled),
                              np.round(np.array(vectors), 6))

    step_ms = int(round(profile.frame_step * 1000))
    n_frames = -(-ann.total_duration_ms // step_ms)
    fa = annotation_to_frames(ann, n_frames, step_ms)
    frames = rng.normal(0.0, 0.5, (n_frames, profile.feature_dim))
    for idx in range(fa.n_speakers):
        model = speaker_feature_model(rng, profile.feature_dim, profile.feature_separation)
        rows = np.flatnonzero(fa.labels == idx)
        frames[rows] = sample_frames(rng, model, len(rows))
    features = FrameFeatures(recording_id, np.round(frames, 4), step_ms)
    return Recording(ann, embeddings, features, labeled, speaker_time, speech)


def generate_corpus(profile: CorpusProfile) -> dict[str, Recording]:
    width = len(str(profile.n_recordings))
    return {rid: generate_recording(profile, rid)
            for rid in (f"rec{i:0{width}d}" for i in range(profile.n_recordings))}


def write_corpus(corpus: dict[str, Recording], out_dir, profile: Optional[CorpusProfile] = None) -> Path:
    """Write the corpus in the standard formats plus a manifest and a default config."""
    from .ingest import emit_embeddings, emit_features, emit_regions, emit_rttm, emit_uem

    out = Path(out_dir)
    for sub in ("rttm", "emb", "feats", "vad", "overlap"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    manifest = []
    uem = {}
    for rid, rec in corpus.items():
        (out / "rttm" / f"{rid}.rttm").write_text(emit_rttm(rec.reference))
        (out / "emb" / f"{rid}.emb").write_text(emit_embeddings(rec.embeddings))
        (out / "feats" / f"{rid}.feat").write_text(emit_features(rec.features))
        (out / "vad" / f"{rid}.lab").write_text(emit_regions({rid: rec.reference.speech_regions()}))
        (out / "overlap" / f"{rid}.ovl").write_text(emit_regions({rid: overlap_regions(rec.reference)}))
        uem[rid] = [(0, rec.reference.total_duration_ms)]
        manifest.append({
            "recording_id": rid,
            "domain": profile.domain if profile else "synthetic",
            "duration": rec.reference.total_duration,
            "reference": f"rttm/{rid}.rttm",
            "embeddings": f"emb/{rid}.emb",
            "features": f"feats/{rid}.feat",
            "vad": f"vad/{rid}.lab",
            "overlap": f"overlap/{rid}.ovl",
        })
    (out / "all.uem").write_text(emit_uem(uem))
    (out / "ref.rttm").write_text(emit_rttm(rec.reference for rec in corpus.values()))
    (out / "domains.tsv").write_text("".join(f"{m['recording_id']}\t{m['domain']}\n" for m in manifest))
    (out / "manifest.jsonl").write_text("".join(json.dumps(m, sort_keys=True) + "\n" for m in manifest))
    if profile is not None:
        (out / "profile.json").write_text(json.dumps(profile.to_dict(), indent=2, sort_keys=True) + "\n")
    return out
