"""Pairwise similarity backends: cosine, two-covariance PLDA, fusion."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Hashable, Iterable, Optional, Sequence, Union

import numpy as np

from .core import EmbeddingSet, ScoreMatrix
from .ingest import emit_matrix_block, parse_matrix_block


# ---------------------------------------------------------------------------
# whitening
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Whitener:
    mean: np.ndarray
    transform: np.ndarray

    def __call__(self, vectors, length_norm: bool = False) -> np.ndarray:
        return apply_whitener(self, vectors, length_norm)


def fit_whitener(vectors, regularize: bool = False) -> Whitener:
    """Fit ``x -> W (x - mean)`` with ``W`` the inverse principal square root
    of the sample covariance.

    A rank-deficient covariance is an error unless ``regularize`` adds a
    ridge of ``1e-6 * trace / d``.
    """
    x = np.atleast_2d(np.asarray(vectors, dtype=float))
    n, d = x.shape
    if n < 2:
        raise ValueError("need at least two vectors to fit a whitener")
    mean = x.mean(axis=0)
    cov = np.cov(x, rowvar=False, bias=True).reshape(d, d)
    if regularize:
        cov = cov + 1e-6 * np.trace(cov) / d * np.eye(d)
    evals, evecs = np.linalg.eigh(cov)
    scale = max(evals.max(), np.finfo(float).tiny)
    if evals.min() <= 1e-12 * scale:
        raise ValueError("degenerate covariance; pass regularize=True")
    transform = (evecs / np.sqrt(evals)) @ evecs.T
    return Whitener(mean, transform)


def length_normalize(vectors) -> np.ndarray:
    x = np.asarray(vectors, dtype=float)
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("cannot length-normalize a zero vector")
    return x / norms


def apply_whitener(whitener: Whitener, vectors, length_norm: bool = False) -> np.ndarray:
    x = np.asarray(vectors, dtype=float)
    out = (x - whitener.mean) @ whitener.transform.T
    return length_normalize(out) if length_norm else out


def write_whitener(whitener: Whitener) -> str:
    return emit_matrix_block(np.vstack([whitener.mean, whitener.transform]))


def read_whitener(source) -> Whitener:
    rows = parse_matrix_block(source, "whitener")
    d = rows.shape[1]
    if rows.shape[0] != d + 1:
        raise ValueError(f"whitener needs {d + 1} rows, got {rows.shape[0]}")
    return Whitener(rows[0], rows[1:])


# ---------------------------------------------------------------------------
# PLDA
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PldaModel:
    """Two-covariance model: ``x = mean + y + e`` with speaker variable
    ``y ~ N(0, between_cov)`` and noise ``e ~ N(0, within_cov)``."""

    mean: np.ndarray
    between_cov: np.ndarray
    within_cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        d = mean.shape[0]
        b = np.asarray(self.between_cov, dtype=float).reshape(d, d)
        w = np.asarray(self.within_cov, dtype=float).reshape(d, d)
        for name, m in (("between", b), ("within", w)):
            if not np.allclose(m, m.T, atol=1e-10 * max(1.0, np.abs(m).max())):
                raise ValueError(f"{name}-speaker covariance is not symmetric")
        if np.linalg.eigvalsh(w).min() <= 0:
            raise ValueError("within-speaker covariance must be positive definite")
        if np.linalg.eigvalsh(b).min() < -1e-10 * max(1.0, np.abs(b).max()):
            raise ValueError("between-speaker covariance must be positive semi-definite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "between_cov", (b + b.T) / 2)
        object.__setattr__(self, "within_cov", (w + w.T) / 2)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def scoring_terms(self):
        """Constant, self term and cross term of the closed-form LLR.

        ``llr(x, y) = c + (x'Qx + y'Qy)/2 + x'Py`` on mean-centered inputs.
        """
        d = self.dim
        total = self.between_cov + self.within_cov
        joint = np.block([[total, self.between_cov], [self.between_cov, total]])
        joint_inv = np.linalg.inv(joint)
        total_inv = np.linalg.inv(total)
        a11, a12 = joint_inv[:d, :d], joint_inv[:d, d:]
        q = total_inv - a11
        p = -a12
        const = -0.5 * np.linalg.slogdet(joint)[1] + np.linalg.slogdet(total)[1]
        return const, (q + q.T) / 2, (p + p.T) / 2

    def affine(self, matrix, offset) -> "PldaModel":
        """The same model expressed in coordinates ``A x + b``."""
        a = np.atleast_2d(np.asarray(matrix, dtype=float))
        return PldaModel(a @ self.mean + offset, a @ self.between_cov @ a.T,
                         a @ self.within_cov @ a.T)


def fit_plda(labeled: Iterable[tuple[Hashable, Sequence[float]]]) -> PldaModel:
    """Moment estimate of the two-covariance model.

    The within covariance is the pooled within-class scatter; the between
    covariance is the scatter of class means minus ``within / avg class
    size``, eigenvalue-clipped at 0. The within covariance is floored at a
    small multiple of the identity so degenerate classes stay usable.
    """
    groups: dict[Hashable, list] = {}
    for spk, vec in labeled:
        groups.setdefault(spk, []).append(np.asarray(vec, dtype=float))
    if len(groups) < 2:
        raise ValueError("PLDA needs at least two speakers")
    for spk, vecs in groups.items():
        if len(vecs) < 2:
            raise ValueError(f"speaker {spk!r} has fewer than two vectors")
    data = np.vstack([np.vstack(v) for v in groups.values()])
    n, d = data.shape
    mean = data.mean(axis=0)
    class_means = np.vstack([np.mean(v, axis=0) for v in groups.values()])
    within = np.zeros((d, d))
    for vecs, mu in zip(groups.values(), class_means):
        diff = np.vstack(vecs) - mu
        within += diff.T @ diff
    within /= n
    centered = class_means - class_means.mean(axis=0)
    between = centered.T @ centered / len(groups)
    between -= within / (n / len(groups))

    evals, evecs = np.linalg.eigh((between + between.T) / 2)
    between = (evecs * np.clip(evals, 0, None)) @ evecs.T
    total_scale = np.trace(np.cov(data, rowvar=False, bias=True).reshape(d, d)) / d
    floor = 1e-6 * max(total_scale, 1e-12)
    evals, evecs = np.linalg.eigh((within + within.T) / 2)
    within = (evecs * np.maximum(evals, floor)) @ evecs.T
    return PldaModel(mean, between, within)


def plda_score(model: PldaModel, x_i, x_j) -> float:
    x_i = np.asarray(x_i, dtype=float)
    x_j = np.asarray(x_j, dtype=float)
    if x_i.shape != (model.dim,) or x_j.shape != (model.dim,):
        raise ValueError(f"expected {model.dim}-dimensional vectors, got "
                         f"{x_i.shape} and {x_j.shape}")
    const, q, p = model.scoring_terms()
    a, b = x_i - model.mean, x_j - model.mean
    return float(const + 0.5 * (a @ q @ a + b @ q @ b) + a @ p @ b)


def plda_score_matrix(model: PldaModel, vectors) -> np.ndarray:
    x = np.asarray(vectors, dtype=float)
    if x.ndim != 2 or x.shape[1] != model.dim:
        raise ValueError(f"expected n x {model.dim} vectors, got {x.shape}")
    const, q, p = model.scoring_terms()
    c = x - model.mean
    self_terms = 0.5 * np.einsum("ij,jk,ik->i", c, q, c)
    cross = c @ p @ c.T
    out = const + self_terms[:, None] + self_terms[None, :] + cross
    return (out + out.T) / 2


def write_plda(model: PldaModel) -> str:
    """Mean row, then the between rows, then the within rows."""
    return emit_matrix_block(np.vstack([model.mean, model.between_cov, model.within_cov]))


def read_plda(source) -> PldaModel:
    rows = parse_matrix_block(source, "PLDA model")
    d = rows.shape[1]
    if rows.shape[0] != 2 * d + 1:
        raise ValueError(f"PLDA model needs {2 * d + 1} rows, got {rows.shape[0]}")
    return PldaModel(rows[0], rows[1:d + 1], rows[d + 1:])


# ---------------------------------------------------------------------------
# cosine, matrices
# ---------------------------------------------------------------------------

def cosine_score(x_i, x_j) -> float:
    a = np.asarray(x_i, dtype=float)
    b = np.asarray(x_j, dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cosine score of a zero vector")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def cosine_score_matrix(vectors) -> np.ndarray:
    unit = length_normalize(vectors)
    out = np.clip(unit @ unit.T, -1.0, 1.0)
    out = (out + out.T) / 2
    np.fill_diagonal(out, 1.0)
    return out


Backend = Union[str, PldaModel, ScoreMatrix, Callable[[np.ndarray, np.ndarray], float]]


def build_score_matrix(embeddings: EmbeddingSet, backend: Backend = "cosine",
                       whitener: Optional[Whitener] = None,
                       length_norm: bool = True) -> ScoreMatrix:
    """Similarity matrix over all segment pairs of one recording.

    ``backend`` is ``"cosine"``, a :class:`PldaModel`, an external
    :class:`ScoreMatrix` (returned untouched after a size check) or any
    pairwise callable. A whitener, when given, is applied first, followed
    by length normalization unless ``length_norm`` is false.
    """
    if isinstance(backend, ScoreMatrix):
        if backend.n != embeddings.n:
            raise ValueError(f"external matrix is {backend.n}x{backend.n}, "
                             f"expected {embeddings.n}")
        return backend
    x = embeddings.vectors
    if whitener is not None:
        x = apply_whitener(whitener, x, length_norm)
    if isinstance(backend, PldaModel):
        return ScoreMatrix(plda_score_matrix(backend, x))
    if backend == "cosine":
        return ScoreMatrix(cosine_score_matrix(x))
    if callable(backend):
        n = len(x)
        out = np.empty((n, n))
        for i in range(n):
            for j in range(n):
                out[i, j] = backend(x[i], x[j])
        return ScoreMatrix(out)
    raise ValueError(f"unknown scoring backend {backend!r}")


def minmax_normalize(values) -> np.ndarray:
    """Map to [0, 1]; a constant matrix is only clipped into [0, 1]."""
    v = np.asarray(values, dtype=float)
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.clip(v, 0.0, 1.0)
    return (v - lo) / (hi - lo)


def fuse_score_matrices(matrices: Sequence[ScoreMatrix], weights: Optional[Sequence[float]] = None,
                        normalize: bool = True) -> ScoreMatrix:
    if not matrices:
        raise ValueError("nothing to fuse")
    n = matrices[0].n
    for m in matrices:
        if m.n != n:
            raise ValueError(f"cannot fuse {m.n}x{m.n} with {n}x{n}")
    if weights is None:
        weights = np.full(len(matrices), 1.0 / len(matrices))
    else:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (len(matrices),) or np.any(weights < 0) or weights.sum() <= 0:
            raise ValueError("need one non-negative weight per matrix")
        weights = weights / weights.sum()
    out = np.zeros((n, n))
    for w, m in zip(weights, matrices):
        out += w * (minmax_normalize(m.values) if normalize else m.values)
    return ScoreMatrix(out)


def symmetrize(matrix: ScoreMatrix) -> ScoreMatrix:
    v = matrix.values
    return ScoreMatrix((v + v.T) / 2)
