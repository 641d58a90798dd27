"""Agglomerative (average linkage) and spectral clustering of score matrices."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.cluster import KMeans

from .core import ScoreMatrix
from .scoring import minmax_normalize

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClusterAssignment:
    labels: tuple[int, ...]
    k: int

    def __post_init__(self):
        if set(self.labels) != set(range(self.k)):
            raise ValueError("labels must cover exactly 0..k-1")

    @classmethod
    def from_labels(cls, labels: Sequence[int]) -> "ClusterAssignment":
        """Relabel clusters in order of first appearance."""
        mapping: dict[int, int] = {}
        out = []
        for lab in labels:
            out.append(mapping.setdefault(int(lab), len(mapping)))
        return cls(tuple(out), len(mapping))

    def partition(self) -> frozenset[frozenset[int]]:
        groups: dict[int, set[int]] = {}
        for i, lab in enumerate(self.labels):
            groups.setdefault(lab, set()).add(i)
        return frozenset(frozenset(g) for g in groups.values())


def _values(s) -> np.ndarray:
    return s.values if isinstance(s, ScoreMatrix) else np.asarray(s, dtype=float)


# ---------------------------------------------------------------------------
# AHC
# ---------------------------------------------------------------------------

def ahc(s, threshold: float) -> ClusterAssignment:
    """Greedy average-linkage merging until the best pair scores below ``threshold``.

    Clusters are identified by their smallest member index; among equal
    best scores the lexicographically smallest index pair is merged.
    """
    v = _values(s)
    n = v.shape[0]
    # sums[a, b] = total score between members of clusters a and b
    sums = v.astype(float).copy()
    sizes = np.ones(n)
    active = list(range(n))
    members = {i: [i] for i in range(n)}
    while len(active) > 1:
        idx = np.array(active)
        sub = sums[np.ix_(idx, idx)] / np.outer(sizes[idx], sizes[idx])
        sub[np.tril_indices(len(idx))] = -np.inf
        flat = int(np.argmax(sub))  # first maximum in row-major = smallest pair
        ia, ib = divmod(flat, len(idx))
        if sub[ia, ib] < threshold:
            break
        a, b = active[ia], active[ib]
        sums[a, :] += sums[b, :]
        sums[:, a] += sums[:, b]
        sizes[a] += sizes[b]
        members[a].extend(members.pop(b))
        active.remove(b)
    labels = np.empty(n, dtype=int)
    for lab, root in enumerate(active):
        labels[members[root]] = lab
    return ClusterAssignment.from_labels(labels)


# ---------------------------------------------------------------------------
# spectral clustering
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectralConfig:
    eig_threshold: float = 0.5
    kmeans_restarts: int = 10
    kmeans_max_iters: int = 300
    rng_seed: int = 0
    # "minmax" maps off-diagonal scores to [0, 1]; "clip" zeroes negatives;
    # "none" requires non-negative input
    affinity: str = "minmax"
    row_normalize: bool = False

    def __post_init__(self):
        if not 0 < self.eig_threshold <= 2:
            raise ValueError("eig_threshold must lie in (0, 2]")
        if self.kmeans_restarts < 1 or self.kmeans_max_iters < 1:
            raise ValueError("k-means restarts and iterations must be positive")
        if self.affinity not in ("minmax", "clip", "none"):
            raise ValueError(f"unknown affinity mode {self.affinity!r}")


def to_affinity(s, mode: str = "minmax") -> np.ndarray:
    """Non-negative symmetric affinity with a zero diagonal."""
    v = _values(s).astype(float)
    v = (v + v.T) / 2
    n = v.shape[0]
    off = ~np.eye(n, dtype=bool)
    out = np.zeros_like(v)
    if n > 1:
        if mode == "minmax":
            out[off] = minmax_normalize(v[off])
        elif mode == "clip":
            out[off] = np.clip(v[off], 0, None)
        else:
            out[off] = v[off]
    return out


def normalized_laplacian(s) -> np.ndarray:
    """``D^-1/2 (D - S) D^-1/2``; zero-degree rows get a zero ``D^-1/2`` entry."""
    a = _values(s).astype(float).copy()
    np.fill_diagonal(a, 0.0)
    if np.any(a < 0):
        raise ValueError("affinity matrix has negative entries")
    deg = a.sum(axis=1)
    lap = np.diag(deg) - a
    inv_sqrt = np.zeros_like(deg)
    nz = deg > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
    out = inv_sqrt[:, None] * lap * inv_sqrt[None, :]
    return (out + out.T) / 2


def spectral_cluster(s, cfg: SpectralConfig = SpectralConfig()) -> ClusterAssignment:
    v = _values(s)
    n = v.shape[0]
    if n == 1:
        return ClusterAssignment((0,), 1)
    lap = normalized_laplacian(to_affinity(v, cfg.affinity))
    try:
        evals, evecs = np.linalg.eigh(lap)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"eigendecomposition failed: {exc}") from exc
    k = int(np.count_nonzero(evals < cfg.eig_threshold))
    k = min(max(k, 1), n)
    log.info("spectral: smallest eigenvalues %s -> k=%d", np.round(evals[:k + 2], 4), k)
    if k == 1:
        return ClusterAssignment((0,) * n, 1)
    p = evecs[:, :k]
    if cfg.row_normalize:
        norms = np.linalg.norm(p, axis=1, keepdims=True)
        p = p / np.where(norms > 0, norms, 1.0)
    km = KMeans(n_clusters=k, init="k-means++", n_init=cfg.kmeans_restarts,
                max_iter=cfg.kmeans_max_iters, random_state=cfg.rng_seed)
    labels = km.fit_predict(p)
    return ClusterAssignment.from_labels(labels)
