"""Diagonal-covariance GMMs and GMM resegmentation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from ..ingest import FrameFeatures
from .frames import SILENCE, FrameAssignment

log = logging.getLogger(__name__)

VAR_FLOOR = 1e-6


@dataclass(eq=False)
class Gmm:
    weights: np.ndarray      # (C,)
    means: np.ndarray        # (C, d)
    covariances: np.ndarray  # (C, d) diagonal variances
    loglik_trace: list = field(default_factory=list)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.means = np.atleast_2d(np.asarray(self.means, dtype=float))
        self.covariances = np.atleast_2d(np.asarray(self.covariances, dtype=float))
        c, d = self.means.shape
        if self.weights.shape != (c,) or self.covariances.shape != (c, d):
            raise ValueError("inconsistent GMM parameter shapes")
        if abs(self.weights.sum() - 1) > 1e-10 or np.any(self.weights < 0):
            raise ValueError("GMM weights must lie on the simplex")
        if np.any(self.covariances < VAR_FLOOR * (1 - 1e-9)):
            raise ValueError(f"GMM variances must be at least {VAR_FLOOR}")

    @property
    def n_components(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def component_logpdf(self, x) -> np.ndarray:
        """``log w_c + log N(x_t; mu_c, diag(var_c))`` as a (T, C) array."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        prec = 1.0 / self.covariances
        quad = ((x ** 2) @ prec.T
                - 2.0 * x @ (self.means * prec).T
                + np.sum(self.means ** 2 * prec, axis=1))
        norm = np.sum(np.log(2 * np.pi * self.covariances), axis=1)
        with np.errstate(divide="ignore"):
            logw = np.log(self.weights)
        return logw - 0.5 * (quad + norm)

    def loglik(self, x) -> np.ndarray:
        """Per-frame log-likelihood."""
        return _logsumexp_rows(self.component_logpdf(x))


def _logsumexp_rows(a: np.ndarray) -> np.ndarray:
    # scipy's logsumexp is general but slow for the (T, C) arrays of EM
    m = a.max(axis=1)
    m = np.where(np.isfinite(m), m, 0.0)
    return m + np.log(np.exp(a - m[:, None]).sum(axis=1))


def gmm_loglik(gmm: Gmm, x) -> np.ndarray:
    return gmm.loglik(x)


def _kmeanspp_means(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [x[rng.integers(len(x))]]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(len(x))
        else:
            idx = rng.choice(len(x), p=d2 / total)
        centers.append(x[idx])
        d2 = np.minimum(d2, np.sum((x - x[idx]) ** 2, axis=1))
    return np.array(centers)


def fit_gmm(frames, n_components: int = 8, rng_seed: int = 0, max_iters: int = 100,
            tol: float = 1e-4, var_floor: float = VAR_FLOOR) -> Gmm:
    """EM for a diagonal GMM.

    Stops when the mean per-frame log-likelihood improves by less than
    ``tol`` or after ``max_iters`` M-steps. ``loglik_trace`` records the
    mean log-likelihood before the first and after every M-step.
    """
    x = np.atleast_2d(np.asarray(frames, dtype=float))
    n, d = x.shape
    if n == 0:
        raise ValueError("cannot fit a GMM to zero frames")
    if n < n_components:
        log.warning("only %d frames for %d components; using %d", n, n_components, n)
        n_components = n
    rng = np.random.default_rng(rng_seed)
    means = _kmeanspp_means(x, n_components, rng)
    variances = np.tile(np.maximum(x.var(axis=0), var_floor), (n_components, 1))
    gmm = Gmm(np.full(n_components, 1.0 / n_components), means, variances)

    trace = []
    for it in range(max_iters + 1):
        comp = gmm.component_logpdf(x)
        ll = _logsumexp_rows(comp)
        trace.append(float(ll.mean()))
        if len(trace) >= 2:
            gain = trace[-1] - trace[-2]
            if gain < -1e-9 * max(1.0, abs(trace[-2])):
                log.warning("EM log-likelihood decreased by %g", -gain)
            if gain < tol:
                break
        if it == max_iters:
            break
        resp = np.exp(comp - ll[:, None])
        counts = resp.sum(axis=0)
        live = counts > 0
        weights = counts / n
        means = gmm.means.copy()
        variances = gmm.covariances.copy()
        means[live] = (resp[:, live].T @ x) / counts[live, None]
        for c in np.flatnonzero(live):
            diff = x - means[c]
            variances[c] = resp[:, c] @ (diff ** 2) / counts[c]
        variances = np.maximum(variances, var_floor)
        gmm = Gmm(weights / weights.sum(), means, variances)
    gmm.loglik_trace = trace
    return gmm


def gmm_resegment(features: FrameFeatures, init: FrameAssignment,
                  speech_mask: Optional[np.ndarray] = None, n_components: int = 8,
                  max_turns: int = 5, rng_seed: int = 0) -> FrameAssignment:
    """Refit one GMM per speaker and move every speech frame to the speaker
    whose GMM scores it highest; repeat until stable or ``max_turns``.

    Frames outside ``speech_mask`` (default: frames labeled in ``init``)
    are never touched. Speakers left without frames drop out.
    """
    if features.n_frames != init.n_frames:
        raise ValueError(f"{features.n_frames} feature frames but {init.n_frames} labels")
    mask = init.speech_mask if speech_mask is None else np.asarray(speech_mask, dtype=bool)
    labels = init.labels.copy()
    present = sorted(set(labels[mask & (labels != SILENCE)].tolist()))
    if len(present) < 2:
        log.warning("fewer than two speakers; resegmentation skipped")
        return FrameAssignment(labels, init.n_speakers, init.speaker_names, init.posteriors, 0)

    x = features.frames
    idx = np.flatnonzero(mask)
    xs = x[idx]
    posteriors = None
    turns = 0
    for turns in range(1, max_turns + 1):
        speakers = sorted(set(labels[idx].tolist()) - {SILENCE})
        scores = np.empty((len(idx), len(speakers)))
        for col, spk in enumerate(speakers):
            own = labels[idx] == spk
            gmm = fit_gmm(xs[own], n_components, rng_seed + spk)
            scores[:, col] = gmm.loglik(xs)
        new = np.asarray(speakers)[np.argmax(scores, axis=1)]
        posteriors = np.zeros((len(labels), init.n_speakers))
        posteriors[np.ix_(idx, speakers)] = np.exp(scores - logsumexp(scores, axis=1, keepdims=True))
        changed = int(np.count_nonzero(new != labels[idx]))
        labels[idx] = new
        log.debug("gmm reseg turn %d: %d frames changed", turns, changed)
        if changed == 0:
            break
    return FrameAssignment(labels, init.n_speakers, init.speaker_names, posteriors, turns)
