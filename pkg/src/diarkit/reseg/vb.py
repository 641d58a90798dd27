"""Variational Bayes HMM resegmentation with eigenvoice speaker priors.

Each speaker ``s`` has GMM means ``m_c + T_c z_s`` with ``z_s ~ N(0, I)``
sharing the UBM weights and variances. Frames follow an ergodic HMM over
speakers. The posterior is approximated by ``q(path) prod_s q(z_s)`` with
Gaussian ``q(z_s)``, and the two factors are updated in turn, each update
maximizing the evidence lower bound.

Frame likelihoods use the usual fixed UBM component alignment: for frame
``t`` and responsibilities ``g_tc`` under the UBM,

    l_t(z) = sum_c g_tc [log w_c + log N(x_t; m_c + T_c z, S_c) - log g_tc]

which lower-bounds ``log p(x_t | z)`` and is scaled by ``stat_scale``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from ..ingest import FrameFeatures
from .frames import SILENCE, FrameAssignment
from .gmm import Gmm, fit_gmm

log = logging.getLogger(__name__)


@dataclass(eq=False)
class VbModel:
    ubm: Gmm
    T: np.ndarray  # (C*d, R), component-major rows

    def __post_init__(self):
        self.T = np.asarray(self.T, dtype=float)
        c, d = self.ubm.means.shape
        if self.T.ndim != 2 or self.T.shape[0] != c * d:
            raise ValueError(f"T must have {c * d} rows, got shape {self.T.shape}")
        if not np.all(np.isfinite(self.T)):
            raise ValueError("T has non-finite entries")
        if np.any(np.linalg.norm(self.T, axis=0) == 0):
            raise ValueError("T has an all-zero column")

    @property
    def z_dim(self) -> int:
        return self.T.shape[1]

    def component_loadings(self) -> np.ndarray:
        """``T`` reshaped to (C, d, R)."""
        c, d = self.ubm.means.shape
        return self.T.reshape(c, d, self.z_dim)

    def speaker_means(self, z) -> np.ndarray:
        return self.ubm.means + (self.T @ np.asarray(z, dtype=float)).reshape(self.ubm.means.shape)


@dataclass(frozen=True)
class VbConfig:
    max_iters: int = 1
    downsample: int = 3
    loop_prob: float = 0.99
    stat_scale: float = 0.3

    def __post_init__(self):
        if not 0 < self.loop_prob < 1:
            raise ValueError("loop_prob must lie in (0, 1)")
        if self.downsample < 1:
            raise ValueError("downsample must be at least 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.stat_scale <= 0:
            raise ValueError("stat_scale must be positive")


def transition_matrix(n_speakers: int, loop_prob: float) -> np.ndarray:
    if n_speakers == 1:
        return np.ones((1, 1))
    off = (1.0 - loop_prob) / (n_speakers - 1)
    tr = np.full((n_speakers, n_speakers), off)
    np.fill_diagonal(tr, loop_prob)
    return tr


def forward_backward(log_emit: np.ndarray, log_trans: np.ndarray, log_init: np.ndarray):
    """Posterior marginals of an HMM in the log domain.

    Returns ``(gamma, xi, log_z)`` with ``gamma`` (N, S) node marginals,
    ``xi`` (N-1, S, S) pair marginals and ``log_z`` the log evidence.
    """
    n, s = log_emit.shape
    alpha = np.empty((n, s))
    beta = np.zeros((n, s))
    alpha[0] = log_init + log_emit[0]
    for t in range(1, n):
        alpha[t] = log_emit[t] + logsumexp(alpha[t - 1][:, None] + log_trans, axis=0)
    for t in range(n - 2, -1, -1):
        beta[t] = logsumexp(log_trans + (log_emit[t + 1] + beta[t + 1])[None, :], axis=1)
    log_z = float(logsumexp(alpha[-1]))
    gamma = np.exp(alpha + beta - log_z)
    gamma /= gamma.sum(axis=1, keepdims=True)
    if n > 1:
        xi = np.exp(alpha[:-1, :, None] + log_trans[None] + (log_emit[1:] + beta[1:])[:, None, :] - log_z)
    else:
        xi = np.zeros((0, s, s))
    return gamma, xi, log_z


def _xlogx(p: np.ndarray) -> np.ndarray:
    out = np.zeros_like(p)
    nz = p > 0
    out[nz] = p[nz] * np.log(p[nz])
    return out


def path_entropy(gamma: np.ndarray, xi: np.ndarray) -> float:
    """Entropy of a Markov-chain distribution given its node and pair marginals."""
    h = -float(_xlogx(gamma[0]).sum())
    if len(xi):
        nz = xi > 0
        prev = np.broadcast_to(gamma[:-1, :, None], xi.shape)
        h -= float(np.sum(xi[nz] * np.log(xi[nz] / prev[nz])))
    return h


class _Stats:
    """Sufficient statistics of the (downsampled) speech frames."""

    def __init__(self, x: np.ndarray, model: VbModel, stat_scale: float):
        ubm = model.ubm
        comp = ubm.component_logpdf(x)
        self.ll = logsumexp(comp, axis=1)
        self.gamma = np.exp(comp - self.ll[:, None])
        tc = model.component_loadings()                       # (C, d, R)
        a = tc / ubm.covariances[:, :, None]                  # S_c^-1 T_c
        proj = np.einsum("nd,cdr->ncr", x, a) - np.einsum("cd,cdr->cr", ubm.means, a)[None]
        self.rho = np.einsum("nc,ncr->nr", self.gamma, proj)  # (N, R)
        self.prec = np.einsum("cdr,cds->crs", tc, a)          # T_c' S_c^-1 T_c
        self.scale = stat_scale
        self.rank = model.z_dim
        if not (np.all(np.isfinite(self.ll)) and np.all(np.isfinite(self.rho))):
            raise ValueError("non-finite statistics; check features against the UBM")

    def update_z(self, q: np.ndarray):
        """Optimal Gaussian q(z_s) for fixed speaker responsibilities."""
        counts = q.T @ self.gamma                                         # (S, C)
        lam = np.eye(self.rank)[None] + self.scale * np.einsum("sc,crt->srt", counts, self.prec)
        rhs = self.scale * (q.T @ self.rho)                               # (S, R)
        cov = np.linalg.inv(lam)
        mean = np.einsum("srt,st->sr", cov, rhs)
        return mean, cov

    def emissions(self, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
        """Expected scaled frame log-likelihood under each speaker, (N, S)."""
        quad = (np.einsum("sr,crt,st->cs", mean, self.prec, mean)
                + np.einsum("crt,str->cs", self.prec, cov))
        return self.scale * (self.ll[:, None] + self.rho @ mean.T - 0.5 * self.gamma @ quad)


def kl_to_prior(mean: np.ndarray, cov: np.ndarray) -> float:
    """Sum over speakers of KL(N(mean_s, cov_s) || N(0, I))."""
    rank = mean.shape[1]
    total = 0.0
    for m, c in zip(mean, cov):
        total += 0.5 * (np.trace(c) + m @ m - rank - np.linalg.slogdet(c)[1])
    return float(total)


def latent_entropy(cov: np.ndarray) -> float:
    rank = cov.shape[-1]
    return float(sum(0.5 * (rank * (1 + np.log(2 * np.pi)) + np.linalg.slogdet(c)[1]) for c in cov))


def elbo(gamma, xi, emit, log_trans, log_init, mean, cov) -> float:
    """Evidence lower bound for a Markov q(path) and Gaussian q(z)."""
    value = float(np.sum(gamma * emit))
    value += float(gamma[0] @ log_init)
    if len(xi):
        value += float(np.sum(xi.sum(axis=0) * log_trans))
    value += path_entropy(gamma, xi)
    value -= kl_to_prior(mean, cov)
    return value


def _expand(positions: int, ds: int, n_down: int) -> np.ndarray:
    """Nearest downsampled index for every original speech position."""
    idx = np.floor(np.arange(positions) / ds + 0.5).astype(int)
    return np.minimum(idx, n_down - 1)


def vb_resegment(features: FrameFeatures, init: FrameAssignment, model: VbModel,
                 cfg: VbConfig = VbConfig(),
                 speech_mask: Optional[np.ndarray] = None) -> FrameAssignment:
    """Refine a frame assignment by VB inference over speakers and eigenvoice factors.

    Speech frames (``speech_mask``, default the frames labeled in
    ``init``) are downsampled by keeping every ``cfg.downsample``-th one;
    results are expanded back by nearest downsampled frame. The returned
    assignment carries the ELBO after the initial state and after every
    update in ``elbo``.
    """
    if features.n_frames != init.n_frames:
        raise ValueError(f"{features.n_frames} feature frames but {init.n_frames} labels")
    if features.dim != model.ubm.dim:
        raise ValueError(f"features are {features.dim}-dimensional, UBM is {model.ubm.dim}")
    n_spk = init.n_speakers
    if n_spk < 2:
        log.warning("single speaker; VB resegmentation skipped")
        return init
    mask = init.speech_mask if speech_mask is None else np.asarray(speech_mask, dtype=bool)
    idx = np.flatnonzero(mask)
    if len(idx) == 0:
        return init
    keep = idx[::cfg.downsample]
    stats = _Stats(features.frames[keep], model, cfg.stat_scale)

    init_labels = init.labels[keep]
    q = np.full((len(keep), n_spk), 1.0 / n_spk)
    labeled = init_labels != SILENCE
    q[labeled] = 0.0
    q[labeled, init_labels[labeled]] = 1.0
    xi = q[:-1, :, None] * q[1:, None, :]

    log_trans = np.log(transition_matrix(n_spk, cfg.loop_prob))
    log_init = np.full(n_spk, -np.log(n_spk))
    mean = np.zeros((n_spk, stats.rank))
    cov = np.tile(np.eye(stats.rank), (n_spk, 1, 1))
    trace = [elbo(q, xi, stats.emissions(mean, cov), log_trans, log_init, mean, cov)]
    for it in range(cfg.max_iters):
        mean, cov = stats.update_z(q)
        emit = stats.emissions(mean, cov)
        trace.append(elbo(q, xi, emit, log_trans, log_init, mean, cov))
        q, xi, log_z = forward_backward(emit, log_trans, log_init)
        trace.append(elbo(q, xi, emit, log_trans, log_init, mean, cov))
        log.debug("vb iter %d: elbo %s (log Z %.3f)", it + 1, trace[-3:], log_z)

    full_q = q[_expand(len(idx), cfg.downsample, len(keep))]
    posteriors = np.zeros((init.n_frames, n_spk))
    posteriors[idx] = full_q
    labels = np.full(init.n_frames, SILENCE, dtype=int)
    labels[idx] = np.argmax(full_q, axis=1)
    return FrameAssignment(labels, n_spk, init.speaker_names, posteriors, cfg.max_iters, trace)


# ---------------------------------------------------------------------------
# training and storage
# ---------------------------------------------------------------------------

def train_vb_model(frames_by_speaker: Sequence[np.ndarray], n_components: int = 64,
                   rank: int = 10, rng_seed: int = 0, relevance: float = 16.0) -> VbModel:
    """UBM by EM on pooled frames, then ``T`` from the principal directions
    of per-speaker MAP mean offsets (variance-normalized)."""
    if rank > len(frames_by_speaker):
        raise ValueError(f"rank {rank} needs at least {rank} training speakers")
    ubm = fit_gmm(np.vstack(frames_by_speaker), n_components, rng_seed)
    sd = np.sqrt(ubm.covariances)
    offsets = []
    for x in frames_by_speaker:
        comp = ubm.component_logpdf(x)
        g = np.exp(comp - logsumexp(comp, axis=1, keepdims=True))
        n_c = g.sum(axis=0)
        f_c = g.T @ x
        off = (f_c - n_c[:, None] * ubm.means) / (n_c[:, None] + relevance)
        offsets.append((off / sd).ravel())
    o = np.array(offsets)
    evals, evecs = np.linalg.eigh(o.T @ o / len(o))
    order = np.argsort(evals)[::-1][:rank]
    t_norm = evecs[:, order] * np.sqrt(np.maximum(evals[order], 1e-12))
    t = t_norm * sd.ravel()[:, None]
    return VbModel(ubm, t)


def save_vb_model(model: VbModel, path) -> None:
    with open(path, "wb") as fh:
        np.savez(fh, weights=model.ubm.weights, means=model.ubm.means,
                 variances=model.ubm.covariances, T=model.T)


def load_vb_model(path) -> VbModel:
    with np.load(Path(path)) as data:
        ubm = Gmm(data["weights"], data["means"], data["variances"])
        return VbModel(ubm, data["T"])
