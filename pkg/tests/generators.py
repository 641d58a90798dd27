"""Random instances of every domain type, driven by a numpy Generator."""

from __future__ import annotations

import numpy as np

from diarkit.core import Annotation, EmbeddingSet, ScoreMatrix, Segment, SpeakerTurn
from diarkit.ingest import FrameFeatures, VadLabels


def random_annotation(rng, rec="rec", max_speakers=6, max_ms=120_000, max_turns=40,
                      extra_tail=True) -> Annotation:
    n_spk = int(rng.integers(1, max_speakers + 1))
    total = int(rng.integers(1_000, max_ms + 1))
    turns = []
    for _ in range(int(rng.integers(1, max_turns + 1))):
        onset = int(rng.integers(0, total - 1))
        dur = int(rng.integers(1, min(total - onset, 15_000) + 1))
        turns.append(SpeakerTurn(onset, dur, f"spk{int(rng.integers(n_spk))}", rec))
    ann = Annotation(rec, tuple(turns))
    if extra_tail:
        ann = ann.with_duration(min(max_ms, ann.total_duration_ms + int(rng.integers(0, 5_000))))
    return ann


def random_hypothesis(rng, ref: Annotation, max_speakers=6) -> Annotation:
    """Perturbed, relabeled copy of ``ref`` plus some random turns."""
    n_hyp = int(rng.integers(1, max_speakers + 1))
    names = {spk: f"h{int(rng.integers(n_hyp))}" for spk in ref.speakers}
    turns = []
    total = ref.total_duration_ms
    for t in ref.turns:
        if rng.random() < 0.1:
            continue
        shift = int(rng.integers(-300, 301))
        onset = min(max(0, t.onset_ms + shift), total - 1)
        end = min(total, max(onset + 1, t.end_ms + int(rng.integers(-300, 301))))
        turns.append(SpeakerTurn(onset, end - onset, names[t.speaker_id], ref.recording_id))
    for _ in range(int(rng.integers(0, 4))):
        onset = int(rng.integers(0, total - 1))
        dur = int(rng.integers(1, min(total - onset, 5_000) + 1))
        turns.append(SpeakerTurn(onset, dur, f"h{int(rng.integers(n_hyp))}", ref.recording_id))
    return Annotation(ref.recording_id, tuple(turns), total)


def random_regions(rng, max_ms=60_000, max_n=10):
    out = []
    for _ in range(int(rng.integers(0, max_n + 1))):
        s = int(rng.integers(0, max_ms))
        out.append((s, s + int(rng.integers(1, 5_000))))
    return out


def random_segments(rng, n=None):
    n = int(rng.integers(1, 20)) if n is None else n
    starts = np.sort(rng.integers(0, 100_000, n))
    return [Segment(int(s), int(s) + int(rng.integers(1, 3_000)),
                    None if rng.random() < 0.5 else f"L{int(rng.integers(5))}") for s in starts]


def random_floats(rng, shape):
    """Mix of scales, signs and awkward values (exact zeros, tiny, huge)."""
    x = rng.normal(size=shape) * 10.0 ** rng.integers(-8, 8, size=shape)
    x[rng.random(shape) < 0.05] = 0.0
    return x


def random_embeddings(rng, rec="rec") -> EmbeddingSet:
    n, d = int(rng.integers(1, 15)), int(rng.integers(1, 10))
    segs = [Segment(s.start_ms, s.end_ms) for s in random_segments(rng, n)]
    return EmbeddingSet(rec, tuple(segs), random_floats(rng, (n, d)))


def random_features(rng, rec="rec") -> FrameFeatures:
    t, d = int(rng.integers(1, 30)), int(rng.integers(1, 8))
    return FrameFeatures(rec, random_floats(rng, (t, d)), int(rng.integers(1, 50)),
                         int(rng.integers(1, 100)))


def random_score_matrix(rng) -> ScoreMatrix:
    n = int(rng.integers(1, 12))
    return ScoreMatrix(random_floats(rng, (n, n)))


def random_vad(rng, rec="rec") -> VadLabels:
    return VadLabels(rec, int(rng.integers(1, 30)), rng.integers(0, 2, int(rng.integers(1, 200))))


def planted_scores(rng, sizes, within=(0.8, 1.0), cross=(0.0, 0.2)) -> np.ndarray:
    """Symmetric block similarity matrix with a known partition."""
    labels = np.repeat(np.arange(len(sizes)), sizes)
    n = len(labels)
    s = rng.uniform(*cross, (n, n))
    same = labels[:, None] == labels[None, :]
    s[same] = rng.uniform(*within, int(same.sum()))
    s = np.triu(s, 1)
    s = s + s.T
    perm = rng.permutation(n)
    return s[np.ix_(perm, perm)], labels[perm]


# ---------------------------------------------------------------------------
# frame-level data for resegmentation
# ---------------------------------------------------------------------------

def speaker_path(rng, n_frames, n_speakers, mean_turn=200, min_turn=40):
    """Alternating speaker labels with random turn lengths; every speaker appears."""
    labels = np.empty(n_frames, dtype=int)
    pos, prev, k = 0, -1, 0
    order = rng.permutation(n_speakers)
    while pos < n_frames:
        length = max(min_turn, int(rng.exponential(mean_turn)))
        if k < n_speakers:
            spk = int(order[k])
        else:
            spk = int(rng.choice([s for s in range(n_speakers) if s != prev]))
        labels[pos:pos + length] = spk
        pos += length
        prev, k = spk, k + 1
    return labels


def corrupt_boundaries(rng, labels, fraction=0.05):
    """Move turn boundaries so that ``fraction`` of all frames take the
    neighbouring speaker's label."""
    out = labels.copy()
    change = np.flatnonzero(np.diff(labels)) + 1
    budget = int(round(fraction * len(labels)))
    if len(change) == 0 or budget == 0:
        return out
    shares = rng.multinomial(budget, np.ones(len(change)) / len(change))
    for b, k in zip(change, shares):
        if k == 0:
            continue
        if rng.random() < 0.5:  # previous speaker runs on
            hi = min(len(out), b + k)
            out[b:hi] = labels[b - 1]
        else:                    # next speaker starts early
            lo = max(0, b - k)
            out[lo:b] = labels[b]
    return out


def speaker_gmm_frames(rng, labels, dim=12, separation=3.0, n_components=4):
    """Frames from one diagonal GMM per speaker, speakers centred far apart."""
    n_spk = int(labels.max()) + 1
    frames = np.empty((len(labels), dim))
    for spk in range(n_spk):
        center = rng.normal(0.0, separation, dim)
        means = center + rng.normal(0.0, 0.5, (n_components, dim))
        rows = np.flatnonzero(labels == spk)
        comp = rng.integers(n_components, size=len(rows))
        frames[rows] = means[comp] + rng.normal(size=(len(rows), dim))
    return frames


def random_vb_model(rng, n_components=8, dim=10, rank=5, loading=0.5):
    from diarkit.reseg import Gmm, VbModel

    weights = rng.dirichlet(np.full(n_components, 5.0))
    means = rng.normal(0.0, 3.0, (n_components, dim))
    variances = rng.uniform(0.5, 1.5, (n_components, dim))
    t = rng.normal(0.0, loading, (n_components * dim, rank))
    return VbModel(Gmm(weights, means, variances), t)


def speaker_separation(model, z1, z2):
    """Expected per-frame log-likelihood ratio between two speakers (nats)."""
    ubm = model.ubm
    diff = model.speaker_means(z1) - model.speaker_means(z2)
    return 0.5 * float(np.sum(ubm.weights[:, None] * diff ** 2 / ubm.covariances))


def sample_from_vb_model(rng, model, labels, min_separation=0.0):
    """Frames from the eigenvoice model itself: z_s ~ N(0, I), then the
    speaker's GMM with means m_c + T_c z_s. Speaker factors are redrawn
    until every pair is at least ``min_separation`` nats apart."""
    n_spk = int(labels.max()) + 1
    ubm = model.ubm
    while True:
        zs = [rng.normal(size=model.z_dim) for _ in range(n_spk)]
        if all(speaker_separation(model, zs[a], zs[b]) >= min_separation
               for a in range(n_spk) for b in range(a + 1, n_spk)):
            break
    frames = np.empty((len(labels), ubm.dim))
    for spk in range(n_spk):
        means = model.speaker_means(zs[spk])
        rows = np.flatnonzero(labels == spk)
        comp = rng.choice(ubm.n_components, size=len(rows), p=ubm.weights)
        frames[rows] = means[comp] + rng.normal(size=(len(rows), ubm.dim)) * np.sqrt(ubm.covariances[comp])
    return frames
