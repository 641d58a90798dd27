"""Command-line entry point.

Every subcommand reads and writes the plain-text formats in :mod:`diarkit.ingest`,
so stages can be run one at a time or chained by ``run``. Exit status is 0 on
success, 2 on invalid input or configuration and 1 on any other failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .clustering import SpectralConfig, ahc, spectral_cluster
from .core import Annotation, to_ms
from .ingest import (
    FormatError,
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
    regions_to_vad,
)
from .metadata import domain_report, format_text, format_tsv
from .metrics import der, pooled_der, vad_accuracy
from .pipeline import (
    PipelineConfig,
    ValidationError,
    format_der_table,
    load_manifest,
    recording_seed,
    resegment_annotation,
    run_pipeline,
)
from .reseg import annotation_to_frames, assign_overlap_labels, save_vb_model, train_vb_model
from .scoring import build_score_matrix, fit_plda, fuse_score_matrices, read_plda, read_whitener, write_plda
from .segmenter import SegmenterConfig, assign_reference_label, segments_to_annotation, uniform_segment
from .synthgen import CorpusProfile, generate_corpus, write_corpus

log = logging.getLogger("diarkit")


def _output(args, text: str) -> None:
    if getattr(args, "out", None) in (None, "-"):
        sys.stdout.write(text)
    else:
        path = Path(args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)


def _read(path) -> str:
    return Path(path).read_text()


def _rttm(path) -> dict[str, Annotation]:
    return parse_rttm(_read(path))


def _single(mapping: dict, path, rec=None):
    if rec is not None:
        if rec not in mapping:
            raise ValidationError(f"{path}: no entries for recording {rec}")
        return rec, mapping[rec]
    if len(mapping) != 1:
        raise ValidationError(f"{path}: holds {len(mapping)} recordings; pick one with --recording")
    return next(iter(mapping.items()))


def _speech(args, rec=None):
    """Speech regions from --speech-rttm (oracle) or --vad (region file)."""
    if args.speech_rttm:
        rec, ann = _single(_rttm(args.speech_rttm), args.speech_rttm, rec)
        return rec, ann.speech_regions()
    if args.vad:
        return _single(parse_regions(_read(args.vad)), args.vad, rec)
    raise ValidationError("need --speech-rttm or --vad")


def _add_speech(p) -> None:
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--speech-rttm", help="reference RTTM used as oracle speech regions")
    g.add_argument("--vad", help="speech region file (<file> <onset> <dur>)")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_metadata(args) -> int:
    annotations = {}
    for path in args.rttm:
        annotations.update(_rttm(path))
    if args.uem:
        uem = parse_uem(_read(args.uem))
        for rec, ann in list(annotations.items()):
            if rec in uem:
                annotations[rec] = ann.with_duration(max(e for _, e in uem[rec]))
    if args.domains:
        domain_map = {}
        for line in _read(args.domains).splitlines():
            if line.strip():
                rec, dom = line.split()[:2]
                domain_map[rec] = dom
    else:
        domain_map = {rec: "-" for rec in annotations}
    try:
        rows = domain_report(annotations, domain_map, pooled=not args.mean_of_ratios)
    except KeyError as exc:
        raise ValidationError(str(exc.args[0])) from None
    _output(args, format_tsv(rows) if args.format == "tsv" else format_text(rows))
    return 0


def cmd_segment(args) -> int:
    rec, regions = _speech(args, args.recording)
    cfg = SegmenterConfig(args.window, args.step, args.central_fraction, not args.no_tail_align)
    _output(args, emit_segments(rec, uniform_segment(regions, cfg)))
    return 0


def cmd_score(args) -> int:
    emb = load_embeddings(args.embeddings, args.recording)
    backend = read_plda(_read(args.plda)) if args.backend == "plda" else "cosine"
    whitener = read_whitener(_read(args.whitener)) if args.whitener else None
    _output(args, emit_score_matrix(build_score_matrix(emb, backend, whitener, not args.no_length_norm)))
    return 0


def cmd_fuse(args) -> int:
    matrices = [parse_score_matrix(_read(p)) for p in args.scores]
    if args.weights is not None and len(args.weights) != len(matrices):
        raise ValidationError("need one weight per score matrix")
    _output(args, emit_score_matrix(fuse_score_matrices(matrices, args.weights)))
    return 0


def cmd_cluster(args) -> int:
    scores = parse_score_matrix(_read(args.scores))
    if args.segments:
        rec, segments = _single(parse_segments(_read(args.segments)), args.segments, args.recording)
    else:
        emb = load_embeddings(args.embeddings, args.recording)
        rec, segments = emb.recording_id, list(emb.segments)
    if scores.n != len(segments):
        raise ValidationError(f"{scores.n}x{scores.n} scores for {len(segments)} segments")
    if args.method == "ahc":
        assignment = ahc(scores, args.threshold)
    else:
        cfg = SpectralConfig(eig_threshold=args.eig_threshold, kmeans_restarts=args.restarts,
                             rng_seed=recording_seed(args.seed, rec))
        assignment = spectral_cluster(scores, cfg)
    labels = [f"spk{k}" for k in assignment.labels]
    _output(args, emit_rttm(segments_to_annotation(rec, segments, labels)))
    return 0


def cmd_resegment(args) -> int:
    rec, hyp = _single(_rttm(args.rttm), args.rttm, args.recording)
    _, speech = _speech(args, rec)
    feats = parse_features(_read(args.features), rec)
    data = {"resegment": {"method": args.method, "max_turns": args.max_turns,
                          "n_components": args.components}}
    if args.method == "vb":
        if not args.vb_model:
            raise ValidationError("vb resegmentation needs --vb-model")
        data["resegment"].update(vb_model=str(Path(args.vb_model).resolve()),
                                 vb={"max_iters": args.vb_iters, "downsample": args.downsample,
                                     "loop_prob": args.loop_prob, "stat_scale": args.stat_scale})
    cfg = PipelineConfig.from_dict(data)
    out = resegment_annotation(hyp, feats, speech, cfg, recording_seed(args.seed, rec))
    _output(args, emit_rttm(out))
    return 0


def cmd_overlap_assign(args) -> int:
    hyps = _rttm(args.rttm)
    regions = parse_regions(_read(args.overlap))
    step = to_ms(args.frame_step)
    out = [assign_overlap_labels(h, regions.get(rec, []), step, args.extend_frames)
           for rec, h in sorted(hyps.items())]
    _output(args, emit_rttm(out))
    return 0


def cmd_der(args) -> int:
    refs, hyps = _rttm(args.ref), _rttm(args.hyp)
    uem = parse_uem(_read(args.uem)) if args.uem else {}
    ders = {}
    for rec in sorted(refs):
        ders[rec] = der(refs[rec], hyps.get(rec, Annotation(rec)), uem.get(rec))
    extra = sorted(set(hyps) - set(refs))
    if extra:
        log.warning("hypothesis recordings without reference ignored: %s", ", ".join(extra))
    if not ders:
        raise ValidationError("reference holds no recordings")
    _output(args, format_der_table(ders, pooled_der(ders.values())))
    return 0


def cmd_vad_acc(args) -> int:
    ref, hyp = parse_regions(_read(args.ref)), parse_regions(_read(args.hyp))
    step = to_ms(args.frame_step)
    uem = parse_uem(_read(args.uem)) if args.uem else {}
    lines, correct, total = [], 0.0, 0
    for rec in sorted(ref):
        end = max([e for _, e in ref[rec] + hyp.get(rec, []) + uem.get(rec, [])] + [0])
        n = -(-end // step)
        if n == 0:
            continue
        acc = vad_accuracy(regions_to_vad(rec, ref[rec], step, n),
                           regions_to_vad(rec, hyp.get(rec, []), step, n))
        lines.append(f"{rec}\t{acc:.2f}")
        correct += acc * n
        total += n
    if not total:
        raise ValidationError("no frames to score")
    lines.append(f"ALL\t{correct / total:.2f}")
    _output(args, "recording\taccuracy(%)\n" + "\n".join(lines) + "\n")
    return 0


def cmd_run(args) -> int:
    if not args.config:
        raise ValidationError("run needs --config")
    cfg = PipelineConfig.load(args.config)
    if args.seed_given:
        cfg.rng_seed = args.seed
    if args.out:
        cfg.output_dir = args.out
    elif not Path(cfg.output_dir).is_absolute():
        cfg.output_dir = str(Path(cfg.base_dir) / cfg.output_dir)
    entries = load_manifest(args.manifest)
    result = run_pipeline(cfg, entries, jobs=args.jobs)
    if result.pooled is not None:
        print(f"DER {result.pooled.der:.2f}% over {len(result.der_by_recording)} recordings")
    print(f"outputs in {cfg.output_dir}")
    return 0


def cmd_synth(args) -> int:
    data = json.loads(_read(args.profile)) if args.profile else {}
    if args.seed_given:
        data["rng_seed"] = args.seed
    try:
        profile = CorpusProfile.from_dict(data)
    except TypeError as exc:
        raise ValidationError(f"bad profile: {exc}") from None
    out = write_corpus(generate_corpus(profile), args.out, profile)
    print(f"wrote {profile.n_recordings} recordings to {out}")
    return 0


def cmd_train_plda(args) -> int:
    refs = {}
    for path in args.rttm:
        refs.update(_rttm(path))
    cfg = SegmenterConfig()
    labeled = []
    for path in args.embeddings:
        emb = load_embeddings(path)
        if emb.recording_id not in refs:
            raise ValidationError(f"{path}: no reference for recording {emb.recording_id}")
        ref = refs[emb.recording_id]
        for seg, vec in zip(emb.segments, emb.vectors):
            spk = assign_reference_label(seg, ref, cfg)
            if spk is not None:
                labeled.append(((emb.recording_id, spk), vec))
    model = fit_plda(labeled)
    _output(args, write_plda(model))
    return 0


def cmd_train_vb(args) -> int:
    refs = {}
    for path in args.rttm:
        refs.update(_rttm(path))
    frames = []
    for path in args.features:
        feats = parse_features(_read(path), Path(path).name.split(".")[0])
        if feats.recording_id not in refs:
            raise ValidationError(f"{path}: no reference for recording {feats.recording_id}")
        fa = annotation_to_frames(refs[feats.recording_id], feats.n_frames, feats.frame_step_ms)
        frames += [feats.frames[fa.labels == k] for k in range(fa.n_speakers)]
    model = train_vb_model(frames, args.components, args.rank, args.seed)
    save_vb_model(model, args.out)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    def globals_(defaults: bool) -> argparse.ArgumentParser:
        # subcommands accept the global flags too; their defaults are
        # suppressed so they never clobber a value given before the subcommand
        g = argparse.ArgumentParser(add_help=False)
        d = (lambda v: v) if defaults else (lambda v: argparse.SUPPRESS)
        g.add_argument("--config", default=d(None), help="pipeline config (JSON)")
        g.add_argument("--jobs", type=int, default=d(1), help="parallel recordings")
        g.add_argument("--seed", type=int, default=d(None), help="base random seed")
        g.add_argument("-v", "--verbose", action="store_true", default=d(False))
        return g

    common = globals_(False)
    parser = argparse.ArgumentParser(prog="diarkit", parents=[globals_(True)],
                                     description="Speaker diarization back-end toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_, parents=[common])
        p.set_defaults(func=func)
        return p

    p = add("metadata", cmd_metadata, "speech percentage and overlapped error per domain")
    p.add_argument("rttm", nargs="+")
    p.add_argument("--domains", help="two-column file: recording domain")
    p.add_argument("--uem", help="recording extents; otherwise the last turn end")
    p.add_argument("--mean-of-ratios", action="store_true",
                   help="average per-recording percentages instead of pooling durations")
    p.add_argument("--format", choices=("tsv", "text"), default="text")
    p.add_argument("--out")

    p = add("segment", cmd_segment, "uniform sliding-window segmentation of speech regions")
    _add_speech(p)
    p.add_argument("--recording")
    p.add_argument("--window", type=float, default=1.5)
    p.add_argument("--step", type=float, default=0.75)
    p.add_argument("--central-fraction", type=float, default=0.5)
    p.add_argument("--no-tail-align", action="store_true")
    p.add_argument("--out")

    p = add("score", cmd_score, "pairwise segment score matrix")
    p.add_argument("embeddings")
    p.add_argument("--recording")
    p.add_argument("--backend", choices=("cosine", "plda"), default="cosine")
    p.add_argument("--plda")
    p.add_argument("--whitener")
    p.add_argument("--no-length-norm", action="store_true")
    p.add_argument("--out")

    p = add("fuse", cmd_fuse, "weighted mean of min-max normalized score matrices")
    p.add_argument("scores", nargs="+")
    p.add_argument("--weights", type=float, nargs="+")
    p.add_argument("--out")

    p = add("cluster", cmd_cluster, "cluster segments from a score matrix")
    p.add_argument("scores")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--segments")
    g.add_argument("--embeddings", help="take the segment list from an embedding file")
    p.add_argument("--recording")
    p.add_argument("--method", choices=("ahc", "spectral"), default="spectral")
    p.add_argument("--threshold", type=float, default=0.5, help="AHC stopping threshold")
    p.add_argument("--eig-threshold", type=float, default=0.5)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--out")

    p = add("resegment", cmd_resegment, "frame-level GMM or VB resegmentation")
    p.add_argument("rttm")
    p.add_argument("--features", required=True)
    _add_speech(p)
    p.add_argument("--recording")
    p.add_argument("--method", choices=("gmm", "vb"), default="gmm")
    p.add_argument("--components", type=int, default=8)
    p.add_argument("--max-turns", type=int, default=5)
    p.add_argument("--vb-model")
    p.add_argument("--vb-iters", type=int, default=1)
    p.add_argument("--downsample", type=int, default=3)
    p.add_argument("--loop-prob", type=float, default=0.99)
    p.add_argument("--stat-scale", type=float, default=0.3)
    p.add_argument("--out")

    p = add("overlap-assign", cmd_overlap_assign, "label overlap regions with nearby speakers")
    p.add_argument("rttm")
    p.add_argument("--overlap", required=True)
    p.add_argument("--frame-step", type=float, default=0.010)
    p.add_argument("--extend-frames", type=int, default=20)
    p.add_argument("--out")

    p = add("der", cmd_der, "strict diarization error rate")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--uem")
    p.add_argument("--out")

    p = add("vad-acc", cmd_vad_acc, "frame-level speech/non-speech accuracy")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--uem")
    p.add_argument("--frame-step", type=float, default=0.010)
    p.add_argument("--out")

    p = add("run", cmd_run, "run the configured stages over a manifest")
    p.add_argument("manifest")
    p.add_argument("--out", help="output directory (overrides the config)")

    p = add("synth", cmd_synth, "generate a synthetic corpus")
    p.add_argument("--profile")
    p.add_argument("--out", required=True)

    p = add("train-plda", cmd_train_plda, "fit a PLDA model on labeled embeddings")
    p.add_argument("--embeddings", nargs="+", required=True)
    p.add_argument("--rttm", nargs="+", required=True)
    p.add_argument("--out")

    p = add("train-vb", cmd_train_vb, "train a UBM and eigenvoice matrix for VB resegmentation")
    p.add_argument("--features", nargs="+", required=True)
    p.add_argument("--rttm", nargs="+", required=True)
    p.add_argument("--components", type=int, default=64)
    p.add_argument("--rank", type=int, default=10)
    p.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    args.seed_given = args.seed is not None
    if args.seed is None:
        args.seed = 0
    if args.jobs < 1:
        parser.error("--jobs must be positive")
    try:
        return args.func(args)
    except (ValidationError, FormatError) as exc:
        print(f"diarkit: error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"diarkit: error: {exc.strerror}: {exc.filename}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.debug("failure", exc_info=True)
        print(f"diarkit: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
