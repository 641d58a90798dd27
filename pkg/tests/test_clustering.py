import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from diarkit.clustering import (
    ClusterAssignment,
    SpectralConfig,
    ahc,
    normalized_laplacian,
    spectral_cluster,
    to_affinity,
)
from diarkit.core import ScoreMatrix

from generators import planted_scores
from oracles import brute_ahc, partition_of


def test_ahc_examples():
    s = np.full((3, 3), 0.1)
    s[0, 1] = s[1, 0] = 0.9
    assert ahc(s, 0.5).partition() == partition_of([0, 0, 1])
    assert ahc(s, 1.0).k == 3
    assert ahc(s, 0.1).k == 1


def test_ahc_average_linkage_oracle():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(1, 10))
        s = rng.uniform(-1, 1, (n, n))
        s = (s + s.T) / 2
        t = rng.uniform(-0.5, 0.5)
        assert ahc(ScoreMatrix(s), t).partition() == brute_ahc(s, t)


def test_ahc_tie_break_smallest_pair():
    s = np.zeros((4, 4))
    s[0, 1] = s[1, 0] = s[2, 3] = s[3, 2] = 1.0
    s[1, 2] = s[2, 1] = 1.0
    # pairs (0,1), (1,2), (2,3) all tie; (0,1) merges first, then (2,3) at 1.0
    assert ahc(s, 0.9).partition() == partition_of([0, 0, 1, 1])


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 9), st.floats(0.1, 10), st.integers(0, 2 ** 31 - 1))
def test_ahc_scale_invariance(n, c, seed):
    rng = np.random.default_rng(seed)
    s = rng.uniform(0, 1, (n, n))
    s = (s + s.T) / 2
    assert ahc(s, 0.5).partition() == ahc(c * s, 0.5 * c).partition()


def test_laplacian_examples():
    lap = normalized_laplacian(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert np.allclose(lap, [[1, -1], [-1, 1]])
    assert np.allclose(np.linalg.eigvalsh(lap), [0, 2])
    assert np.array_equal(normalized_laplacian(np.zeros((3, 3))), np.zeros((3, 3)))
    with pytest.raises(ValueError):
        normalized_laplacian(np.array([[0.0, -1.0], [-1.0, 0.0]]))


@pytest.mark.parametrize("c", [1, 2, 3, 5])
def test_components_give_zero_eigenvalues(c):
    rng = np.random.default_rng(c)
    sizes = rng.integers(2, 6, c)
    s, _ = planted_scores(rng, sizes, cross=(0.0, 0.0))
    evals = np.linalg.eigvalsh(normalized_laplacian(s))
    assert np.sum(np.abs(evals) < 1e-9) == c


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 25), st.integers(0, 2 ** 31 - 1))
def test_laplacian_spectrum_in_range(n, seed):
    rng = np.random.default_rng(seed)
    s = rng.normal(size=(n, n)) * 10 ** rng.uniform(-3, 3)
    evals = np.linalg.eigvalsh(normalized_laplacian(to_affinity(s)))
    assert evals.min() >= -1e-8 and evals.max() <= 2 + 1e-8


def test_spectral_two_cliques_vs_enumeration():
    s = np.zeros((6, 6))
    s[:3, :3] = 1
    s[3:, 3:] = 1
    np.fill_diagonal(s, 0)
    got = spectral_cluster(s, SpectralConfig(eig_threshold=0.5))
    assert got.k == 2
    # best 2-partition by cut weight, enumerated
    best = min((frozenset([frozenset(c), frozenset(set(range(6)) - set(c))])
                for r in range(1, 4) for c in itertools.combinations(range(6), r)),
               key=lambda p: sum(s[i, j] for a in p for i in a for j in set(range(6)) - a))
    assert got.partition() == best


def test_spectral_trivial_cases():
    assert spectral_cluster(np.ones((5, 5))).k == 1
    assert spectral_cluster(np.array([[3.0]])).labels == (0,)


def test_spectral_cross_zero_blocks_default_threshold():
    rng = np.random.default_rng(1)
    for trial in range(20):
        sizes = rng.integers(2, 8, int(rng.integers(2, 7)))
        s, truth = planted_scores(rng, sizes, cross=(0.0, 0.0))
        got = spectral_cluster(s, SpectralConfig(affinity="none", rng_seed=trial))
        assert got.partition() == partition_of(truth)


def test_spectral_is_seed_deterministic():
    rng = np.random.default_rng(2)
    s, _ = planted_scores(rng, [5, 5, 5])
    cfg = SpectralConfig(eig_threshold=0.9, rng_seed=3)
    assert spectral_cluster(s, cfg) == spectral_cluster(s, cfg)


def test_config_and_assignment_validation():
    with pytest.raises(ValueError):
        SpectralConfig(eig_threshold=0)
    with pytest.raises(ValueError):
        SpectralConfig(eig_threshold=2.5)
    assert ClusterAssignment.from_labels([5, 5, 2, 7]).labels == (0, 0, 1, 2)
    with pytest.raises(ValueError):
        ClusterAssignment((0, 2), 2)
