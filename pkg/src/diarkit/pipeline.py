"""Batch orchestration: segment, score, cluster, resegment, assign overlap, score DER.

A run is driven by a JSON config plus a JSON-lines manifest with one
recording per line. Paths in the manifest are relative to the manifest's
directory. Every enabled stage writes its artifact under the output
directory, so any stage can be rerun in isolation from the CLI.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from .clustering import SpectralConfig, ahc, spectral_cluster
from .core import Annotation, ScoreMatrix, Segment, to_ms
from .ingest import (
    emit_rttm,
    emit_score_matrix,
    emit_segments,
    load_embeddings,
    parse_features,
    parse_regions,
    parse_rttm,
    parse_score_matrix,
    parse_segments,
    parse_uem,
)
from .metadata import RecordingStats, format_text, format_tsv, recording_stats, stats_report
from .metrics import DerBreakdown, der, pooled_der
from .reseg import (
    VbConfig,
    annotation_to_frames,
    assign_overlap_labels,
    frames_to_annotation,
    gmm_resegment,
    load_vb_model,
    regions_to_mask,
    vb_resegment,
)
from .scoring import build_score_matrix, fuse_score_matrices, read_plda, read_whitener, symmetrize
from .segmenter import SegmenterConfig, segments_to_annotation, uniform_segment

log = logging.getLogger(__name__)

STAGES = ("segment", "score", "cluster", "resegment", "overlap", "der", "metadata")


class ValidationError(ValueError):
    """Bad config, manifest or missing input; reported before any stage runs."""


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------

@dataclass
class ScoringConfig:
    backends: list = field(default_factory=lambda: ["cosine"])
    plda_model: Optional[str] = None
    whitener: Optional[str] = None
    length_norm: bool = True
    fusion_weights: Optional[list] = None


@dataclass
class ClusteringConfig:
    method: str = "spectral"
    threshold: float = 0.5
    spectral: dict = field(default_factory=dict)


@dataclass
class ResegConfig:
    method: str = "gmm"
    n_components: int = 8
    max_turns: int = 5
    vb_model: Optional[str] = None
    vb: dict = field(default_factory=dict)


@dataclass
class OverlapConfig:
    frame_step: float = 0.010
    extend_frames: int = 20


@dataclass
class PipelineConfig:
    stages: dict = field(default_factory=lambda: {s: True for s in STAGES})
    speech_source: str = "reference"
    segmenter: dict = field(default_factory=dict)
    scoring: ScoringConfig = field(default_factory=ScoringConfig)
    clustering: ClusteringConfig = field(default_factory=ClusteringConfig)
    resegment: ResegConfig = field(default_factory=ResegConfig)
    overlap: OverlapConfig = field(default_factory=OverlapConfig)
    output_dir: str = "out"
    rng_seed: int = 0
    # directory that relative model paths are resolved against
    base_dir: str = field(default=".", compare=False)

    def enabled(self, stage: str) -> bool:
        return bool(self.stages.get(stage, False))

    def segmenter_config(self) -> SegmenterConfig:
        return SegmenterConfig(**self.segmenter)

    def spectral_config(self, seed: int) -> SpectralConfig:
        return SpectralConfig(**{**self.clustering.spectral, "rng_seed": seed})

    def vb_config(self) -> VbConfig:
        return VbConfig(**self.resegment.vb)

    def path(self, value: Optional[str]) -> Optional[Path]:
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("base_dir")
        return out

    def hash(self) -> str:
        """Digest of every field that can change the results."""
        data = self.to_dict()
        data.pop("output_dir")
        for key in ("plda_model", "whitener"):
            if data["scoring"][key] is not None:
                data["scoring"][key] = _file_digest(self.path(data["scoring"][key]))
        if data["resegment"]["vb_model"] is not None:
            data["resegment"]["vb_model"] = _file_digest(self.path(data["resegment"]["vb_model"]))
        blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @classmethod
    def from_dict(cls, data: dict, base_dir=".") -> "PipelineConfig":
        data = dict(data)
        _check_keys(data, cls, "config")
        sub = {"scoring": ScoringConfig, "clustering": ClusteringConfig,
               "resegment": ResegConfig, "overlap": OverlapConfig}
        kwargs = {}
        for key, value in data.items():
            if key in sub:
                if not isinstance(value, dict):
                    raise ValidationError(f"config.{key} must be an object")
                _check_keys(value, sub[key], f"config.{key}")
                value = sub[key](**value)
            kwargs[key] = value
        cfg = cls(**kwargs, base_dir=str(base_dir))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(data, path.parent)

    def validate(self) -> None:
        stages = {s: True for s in STAGES}
        unknown = set(self.stages) - set(STAGES)
        if unknown:
            raise ValidationError(f"unknown stages {sorted(unknown)}")
        stages.update(self.stages)
        self.stages = stages
        if self.speech_source not in ("reference", "vad"):
            raise ValidationError("speech_source must be 'reference' or 'vad'")
        if self.clustering.method not in ("ahc", "spectral"):
            raise ValidationError("clustering.method must be 'ahc' or 'spectral'")
        if self.resegment.method not in ("gmm", "vb"):
            raise ValidationError("resegment.method must be 'gmm' or 'vb'")
        if not self.scoring.backends:
            raise ValidationError("scoring.backends must not be empty")
        for b in self.scoring.backends:
            if b not in ("cosine", "plda", "external"):
                raise ValidationError(f"unknown scoring backend {b!r}")
        try:
            self.segmenter_config()
            self.spectral_config(self.rng_seed)
            self.vb_config()
        except (TypeError, ValueError) as exc:
            raise ValidationError(str(exc)) from None
        needed = []
        if self.enabled("score") and "plda" in self.scoring.backends:
            if self.scoring.plda_model is None:
                raise ValidationError("plda backend needs scoring.plda_model")
            needed.append(self.scoring.plda_model)
        if self.scoring.whitener is not None:
            needed.append(self.scoring.whitener)
        if self.enabled("resegment") and self.resegment.method == "vb":
            if self.resegment.vb_model is None:
                raise ValidationError("vb resegmentation needs resegment.vb_model")
            needed.append(self.resegment.vb_model)
        for p in needed:
            if not self.path(p).exists():
                raise ValidationError(f"referenced file does not exist: {self.path(p)}")


def _check_keys(data: dict, cls, where: str) -> None:
    known = {f.name for f in fields(cls)} - {"base_dir"}
    unknown = set(data) - known
    if unknown:
        raise ValidationError(f"unknown keys in {where}: {sorted(unknown)}")


def _file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------

@dataclass
class ManifestEntry:
    recording_id: str
    domain: str = "unknown"
    duration: Optional[float] = None
    reference: Optional[str] = None
    hypothesis: Optional[str] = None
    embeddings: Optional[str] = None
    segments: Optional[str] = None
    scores: list = field(default_factory=list)
    features: Optional[str] = None
    vad: Optional[str] = None
    overlap: Optional[str] = None
    uem: Optional[str] = None


_PATH_KEYS = ("reference", "hypothesis", "embeddings", "segments", "features",
              "vad", "overlap", "uem")


def load_manifest(path) -> list[ManifestEntry]:
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise ValidationError(f"cannot read manifest {path}: {exc}") from None
    entries, seen = [], set()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        try:
            data = json.loads(line)
            _check_keys(data, ManifestEntry, f"manifest line {lineno}")
            entry = ManifestEntry(**data)
        except (json.JSONDecodeError, TypeError) as exc:
            raise ValidationError(f"manifest line {lineno}: {exc}") from None
        if entry.recording_id in seen:
            raise ValidationError(f"manifest line {lineno}: duplicate recording {entry.recording_id}")
        seen.add(entry.recording_id)
        for key in _PATH_KEYS:
            value = getattr(entry, key)
            if value is not None and not Path(value).is_absolute():
                setattr(entry, key, str(path.parent / value))
        entry.scores = [s if Path(s).is_absolute() else str(path.parent / s) for s in entry.scores]
        entries.append(entry)
    if not entries:
        raise ValidationError(f"manifest {path} lists no recordings")
    return entries


def preflight(cfg: PipelineConfig, entries: list[ManifestEntry]) -> None:
    """Check that every enabled stage has its inputs, naming recording and stage."""
    def need(entry, stage, *keys):
        for key in keys:
            value = getattr(entry, key)
            if not value:
                raise ValidationError(f"{entry.recording_id}: stage '{stage}' needs '{key}'")
            for p in (value if isinstance(value, list) else [value]):
                if not Path(p).exists():
                    raise ValidationError(f"{entry.recording_id}: stage '{stage}' input missing: {p}")

    for e in entries:
        speech_key = "reference" if cfg.speech_source == "reference" else "vad"
        if cfg.enabled("segment"):
            need(e, "segment", speech_key)
        if cfg.enabled("score"):
            if {"cosine", "plda"} & set(cfg.scoring.backends):
                need(e, "score", "embeddings")
            if "external" in cfg.scoring.backends:
                need(e, "score", "scores")
        if cfg.enabled("cluster"):
            if not cfg.enabled("score"):
                raise ValidationError(f"{e.recording_id}: stage 'cluster' needs stage 'score'")
            if not e.embeddings and not e.segments and not cfg.enabled("segment"):
                raise ValidationError(f"{e.recording_id}: stage 'cluster' needs segments")
        elif any(cfg.enabled(s) for s in ("resegment", "overlap", "der")):
            need(e, "cluster", "hypothesis")
        if cfg.enabled("resegment"):
            need(e, "resegment", "features", speech_key)
        if cfg.enabled("overlap"):
            need(e, "overlap", "overlap")
        if cfg.enabled("der") or cfg.enabled("metadata"):
            need(e, "der" if cfg.enabled("der") else "metadata", "reference")
        for key in ("uem",):
            if getattr(e, key):
                need(e, "der", key)


# ---------------------------------------------------------------------------
# per-recording processing
# ---------------------------------------------------------------------------

def recording_seed(seed: int, recording_id: str) -> int:
    return (seed * 1_000_003 + zlib.crc32(recording_id.encode())) % (2 ** 31)


@dataclass
class RecordingResult:
    recording_id: str
    hypothesis: Optional[Annotation]
    der: Optional[DerBreakdown]
    stats: Optional[RecordingStats]
    timings: dict


def _read_one(parsed: dict, rec: str, what: str, path):
    if rec not in parsed:
        raise ValidationError(f"{rec}: no entries for this recording in {what} file {path}")
    return parsed[rec]


def process_recording(cfg: PipelineConfig, entry: ManifestEntry) -> RecordingResult:
    rec = entry.recording_id
    out = Path(cfg.output_dir)
    seed = recording_seed(cfg.rng_seed, rec)
    timings = {}

    duration_ms = to_ms(entry.duration) if entry.duration is not None else None
    reference = None
    if entry.reference:
        ref_all = parse_rttm(Path(entry.reference).read_text())
        reference = ref_all.get(rec, Annotation(rec))
        if duration_ms is not None and reference.total_duration_ms <= duration_ms:
            reference = reference.with_duration(duration_ms)
        elif duration_ms is None:
            duration_ms = reference.total_duration_ms
    uem = None
    if entry.uem:
        uem = _read_one(parse_uem(Path(entry.uem).read_text()), rec, "UEM", entry.uem)

    def speech_regions():
        if cfg.speech_source == "reference":
            return reference.speech_regions()
        return parse_regions(Path(entry.vad).read_text()).get(rec, [])

    hyp = None
    if entry.hypothesis:
        hyp = parse_rttm(Path(entry.hypothesis).read_text()).get(rec, Annotation(rec))

    segments: Optional[list[Segment]] = None
    if cfg.enabled("segment"):
        t0 = time.perf_counter()
        segments = uniform_segment(speech_regions(), cfg.segmenter_config())
        _write(out / "segments" / f"{rec}.seg", emit_segments(rec, segments))
        timings["segment"] = time.perf_counter() - t0

    if cfg.enabled("score"):
        t0 = time.perf_counter()
        emb = load_embeddings(entry.embeddings, rec) if entry.embeddings else None
        if emb is not None:
            if segments is not None and [s.interval for s in segments] != [s.interval for s in emb.segments]:
                log.warning("%s: embedding segments differ from computed segments; "
                            "using the embedding segments", rec)
            segments = list(emb.segments)
        elif entry.segments:
            segments = _read_one(parse_segments(Path(entry.segments).read_text()), rec,
                                 "segment", entry.segments)
        whitener = read_whitener(cfg.path(cfg.scoring.whitener).read_text()) if cfg.scoring.whitener else None
        matrices = []
        for backend in cfg.scoring.backends:
            if backend == "cosine":
                matrices.append(build_score_matrix(emb, "cosine", whitener, cfg.scoring.length_norm))
            elif backend == "plda":
                model = read_plda(cfg.path(cfg.scoring.plda_model).read_text())
                matrices.append(build_score_matrix(emb, model, whitener, cfg.scoring.length_norm))
            else:
                for p in entry.scores:
                    matrices.append(parse_score_matrix(Path(p).read_text()))
        scores = matrices[0] if len(matrices) == 1 else fuse_score_matrices(
            matrices, cfg.scoring.fusion_weights)
        scores = symmetrize(scores)
        if segments is not None and scores.n != len(segments):
            raise ValidationError(f"{rec}: {scores.n}x{scores.n} scores for {len(segments)} segments")
        _write(out / "scores" / f"{rec}.scores", emit_score_matrix(scores))
        timings["score"] = time.perf_counter() - t0

        if cfg.enabled("cluster"):
            t0 = time.perf_counter()
            hyp = cluster_to_annotation(rec, segments, scores, cfg, seed, duration_ms)
            _write(out / "cluster" / f"{rec}.rttm", emit_rttm(hyp))
            timings["cluster"] = time.perf_counter() - t0

    if cfg.enabled("resegment") and hyp is not None:
        t0 = time.perf_counter()
        feats = parse_features(Path(entry.features).read_text(), rec)
        hyp = resegment_annotation(hyp, feats, speech_regions(), cfg, seed, duration_ms)
        _write(out / "resegment" / f"{rec}.rttm", emit_rttm(hyp))
        timings["resegment"] = time.perf_counter() - t0

    if cfg.enabled("overlap") and hyp is not None:
        t0 = time.perf_counter()
        regions = parse_regions(Path(entry.overlap).read_text()).get(rec, [])
        step_ms = to_ms(cfg.overlap.frame_step)
        hyp = assign_overlap_labels(hyp, regions, step_ms, cfg.overlap.extend_frames)
        _write(out / "overlap" / f"{rec}.rttm", emit_rttm(hyp))
        timings["overlap"] = time.perf_counter() - t0

    if hyp is not None:
        _write(out / "final" / f"{rec}.rttm", emit_rttm(hyp))

    breakdown = None
    if cfg.enabled("der"):
        t0 = time.perf_counter()
        breakdown = der(reference, hyp if hyp is not None else Annotation(rec), uem)
        timings["der"] = time.perf_counter() - t0

    stats = None
    if cfg.enabled("metadata") and reference is not None and reference.total_duration_ms > 0:
        stats = recording_stats(reference, entry.domain)
    return RecordingResult(rec, hyp, breakdown, stats, timings)


def cluster_to_annotation(rec: str, segments: list[Segment], scores: ScoreMatrix,
                          cfg: PipelineConfig, seed: int,
                          duration_ms: Optional[int] = None) -> Annotation:
    if cfg.clustering.method == "ahc":
        assignment = ahc(scores, cfg.clustering.threshold)
    else:
        assignment = spectral_cluster(scores, cfg.spectral_config(seed))
    labels = [f"spk{k}" for k in assignment.labels]
    return segments_to_annotation(rec, segments, labels, duration_ms)


def resegment_annotation(hyp: Annotation, feats, speech, cfg: PipelineConfig, seed: int,
                         duration_ms: Optional[int] = None) -> Annotation:
    step = feats.frame_step_ms
    init = annotation_to_frames(hyp, feats.n_frames, step)
    mask = regions_to_mask(speech, feats.n_frames, step)
    if cfg.resegment.method == "gmm":
        out = gmm_resegment(feats, init, mask, cfg.resegment.n_components,
                            cfg.resegment.max_turns, seed)
    else:
        model = load_vb_model(cfg.path(cfg.resegment.vb_model))
        out = vb_resegment(feats, init, model, cfg.vb_config(), mask)
    total = duration_ms if duration_ms is not None else hyp.total_duration_ms
    total = max(total, hyp.total_duration_ms)
    return frames_to_annotation(out, hyp.recording_id, step, total)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    hypotheses: dict
    der_by_recording: dict
    pooled: Optional[DerBreakdown]
    metadata: list
    report: dict


def run_pipeline(cfg: PipelineConfig, entries: list[ManifestEntry], jobs: int = 1) -> RunResult:
    preflight(cfg, entries)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    t_start = time.perf_counter()
    if jobs > 1 and len(entries) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(process_recording, [cfg] * len(entries), entries))
    else:
        results = [process_recording(cfg, e) for e in entries]

    hyps = {r.recording_id: r.hypothesis for r in results if r.hypothesis is not None}
    if hyps:
        _write(out / "hyp.rttm", emit_rttm(hyps[k] for k in sorted(hyps)))

    ders = {r.recording_id: r.der for r in results if r.der is not None}
    pooled = None
    if ders:
        pooled = pooled_der(ders.values())
        _write(out / "der.tsv", format_der_table(ders, pooled))

    rows = []
    stats = [r.stats for r in results if r.stats is not None]
    if stats:
        rows = stats_report(stats)
        _write(out / "metadata.tsv", format_tsv(rows))
        _write(out / "metadata.txt", format_text(rows))

    report = {
        "config_hash": cfg.hash(),
        "config": cfg.to_dict(),
        "recordings": len(entries),
        "wall_time": time.perf_counter() - t_start,
        "stage_times": {r.recording_id: r.timings for r in results},
        "der": None if pooled is None else _der_dict(pooled),
        "der_by_recording": {k: _der_dict(v) for k, v in ders.items()},
    }
    _write(out / "report.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
    return RunResult(hyps, ders, pooled, rows, report)


def _der_dict(b: DerBreakdown) -> dict:
    return {"der": b.der, "missed": b.missed, "false_alarm": b.false_alarm,
            "confusion": b.confusion, "scored_speech": b.scored_speech}


def format_der_table(ders: dict, pooled: DerBreakdown) -> str:
    lines = ["recording\tDER(%)\tmissed(s)\tfalse_alarm(s)\tconfusion(s)\tscored_speech(s)"]
    for name, b in list(ders.items()) + [("ALL", pooled)]:
        lines.append(f"{name}\t{b.der:.2f}\t{b.missed:.3f}\t{b.false_alarm:.3f}\t"
                     f"{b.confusion:.3f}\t{b.scored_speech:.3f}")
    return "\n".join(lines) + "\n"


__all__ = ["PipelineConfig", "ManifestEntry", "ValidationError", "load_manifest",
           "preflight", "process_recording", "run_pipeline", "RunResult"]
