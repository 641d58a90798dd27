import numpy as np
import pytest

from diarkit.core import EmbeddingSet, ScoreMatrix, Segment
from diarkit.scoring import (
    PldaModel,
    apply_whitener,
    build_score_matrix,
    cosine_score,
    fit_plda,
    fit_whitener,
    fuse_score_matrices,
    minmax_normalize,
    plda_score,
    plda_score_matrix,
    read_plda,
    read_whitener,
    symmetrize,
    write_plda,
    write_whitener,
)

from oracles import plda_llr_density


def random_spd(rng, d, scale=1.0):
    a = rng.normal(size=(d, d))
    return scale * (a @ a.T + 0.5 * np.eye(d))


def random_model(rng, d):
    return PldaModel(rng.normal(size=d), random_spd(rng, d), random_spd(rng, d))


# --- whitening ------------------------------------------------------------------

def test_white_data_gives_identity_transform():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(5000, 3))
    x = (x - x.mean(0)) @ np.linalg.inv(np.linalg.cholesky(np.cov(x.T, bias=True))).T
    w = fit_whitener(x)
    assert np.allclose(w.transform, np.eye(3), atol=1e-8)


def test_diag_4_1_covariance():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(20_000, 2)) * [2.0, 1.0]
    w = fit_whitener(x)
    assert np.allclose(np.abs(np.linalg.eigvalsh(w.transform)), [0.5, 1.0], atol=0.03)
    y = apply_whitener(w, x)
    assert np.allclose(np.cov(y.T, bias=True), np.eye(2), atol=1e-8)
    assert np.allclose(w.transform, w.transform.T)  # principal root


def test_whitener_errors_and_ridge():
    with pytest.raises(ValueError):
        fit_whitener(np.ones((1, 3)))
    flat = np.column_stack([np.arange(10.0), np.zeros(10)])
    with pytest.raises(ValueError):
        fit_whitener(flat)
    w = fit_whitener(flat, regularize=True)
    assert np.all(np.isfinite(w.transform))


def test_whitener_length_norm_and_io():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(50, 4))
    w = fit_whitener(x)
    y = apply_whitener(w, x, length_norm=True)
    assert np.allclose(np.linalg.norm(y, axis=1), 1.0)
    w2 = read_whitener(write_whitener(w))
    assert np.array_equal(w2.mean, w.mean) and np.array_equal(w2.transform, w.transform)


# --- PLDA -----------------------------------------------------------------------

def test_one_dimensional_analytic_score():
    model = PldaModel([0.0], [[1.0]], [[1.0]])
    assert plda_score(model, [0.0], [0.0]) == pytest.approx(-0.5 * np.log(0.75), abs=1e-10)


def test_score_matches_density_oracle():
    rng = np.random.default_rng(3)
    for _ in range(30):
        d = int(rng.integers(1, 6))
        m = random_model(rng, d)
        x1, x2 = rng.normal(size=d), rng.normal(size=d)
        expected = plda_llr_density(m.mean, m.between_cov, m.within_cov, x1, x2)
        assert plda_score(m, x1, x2) == pytest.approx(expected, abs=1e-9)
        assert plda_score(m, x1, x2) == pytest.approx(plda_score(m, x2, x1), abs=1e-12)


def test_zero_between_covariance_scores_zero():
    rng = np.random.default_rng(4)
    m = PldaModel(np.zeros(3), np.zeros((3, 3)), random_spd(rng, 3))
    x = rng.normal(size=(6, 3))
    assert np.allclose(plda_score_matrix(m, x), 0.0, atol=1e-12)


def test_affine_invariance():
    rng = np.random.default_rng(5)
    for _ in range(20):
        d = int(rng.integers(1, 5))
        m = random_model(rng, d)
        a = rng.normal(size=(d, d)) + 2 * np.eye(d)
        b = rng.normal(size=d)
        x1, x2 = rng.normal(size=d), rng.normal(size=d)
        moved = plda_score(m.affine(a, b), a @ x1 + b, a @ x2 + b)
        assert moved == pytest.approx(plda_score(m, x1, x2), abs=1e-8)


def test_matrix_equals_pairwise_loop():
    rng = np.random.default_rng(6)
    m = random_model(rng, 3)
    x = rng.normal(size=(7, 3))
    mat = plda_score_matrix(m, x)
    loop = np.array([[plda_score(m, a, b) for b in x] for a in x])
    assert np.allclose(mat, loop, atol=1e-10)


def test_dimension_mismatch():
    m = PldaModel(np.zeros(2), np.eye(2), np.eye(2))
    with pytest.raises(ValueError):
        plda_score(m, np.zeros(3), np.zeros(2))


def test_fit_plda_rank_one_between():
    rng = np.random.default_rng(7)
    d = 4
    mu = np.zeros(d)
    mu[0] = 1.0
    data = [("a", mu + rng.normal(0, 0.1, d)) for _ in range(500)]
    data += [("b", -mu + rng.normal(0, 0.1, d)) for _ in range(500)]
    m = fit_plda(data)
    evals = np.linalg.eigvalsh(m.between_cov)
    assert evals[-1] == pytest.approx(1.0, rel=0.1)
    assert np.all(evals[:-1] < 0.01)
    assert np.allclose(m.within_cov, 0.01 * np.eye(d), atol=0.003)


def test_fit_plda_degenerate_and_errors():
    data = [("a", [1.0, 0.0])] * 3 + [("b", [0.0, 1.0])] * 3
    m = fit_plda(data)
    assert np.all(np.linalg.eigvalsh(m.within_cov) > 0)
    assert np.linalg.eigvalsh(m.within_cov).max() < 1e-5
    with pytest.raises(ValueError):
        fit_plda([("a", [1.0]), ("a", [2.0])])
    with pytest.raises(ValueError):
        fit_plda([("a", [1.0]), ("a", [2.0]), ("b", [0.0])])


def test_plda_io_round_trip():
    rng = np.random.default_rng(8)
    m = random_model(rng, 3)
    m2 = read_plda(write_plda(m))
    assert np.array_equal(m2.mean, m.mean)
    assert np.array_equal(m2.between_cov, m.between_cov)
    assert np.array_equal(m2.within_cov, m.within_cov)


# --- cosine, matrices, fusion ----------------------------------------------------

def test_cosine_examples():
    assert cosine_score([1, 2], [1, 2]) == pytest.approx(1.0)
    assert cosine_score([1, 0], [0, 3]) == pytest.approx(0.0)
    assert cosine_score([1, 2], [-1, -2]) == pytest.approx(-1.0)
    with pytest.raises(ValueError):
        cosine_score([0, 0], [1, 0])


def emb(x):
    x = np.atleast_2d(x)
    return EmbeddingSet("r", tuple(Segment(i, i + 1) for i in range(len(x))), x)


def test_build_score_matrix_backends():
    rng = np.random.default_rng(9)
    e = emb(rng.normal(size=(5, 3)))
    cos = build_score_matrix(e)
    assert np.allclose(np.diag(cos.values), 1.0) and cos.is_symmetric()
    assert build_score_matrix(emb([[1.0, 2.0]])).n == 1
    ext = ScoreMatrix(rng.normal(size=(5, 5)))
    assert build_score_matrix(e, ext) is ext
    dot = build_score_matrix(e, lambda a, b: float(a @ b))
    assert np.allclose(dot.values, e.vectors @ e.vectors.T)
    with pytest.raises(ValueError):
        build_score_matrix(e, ScoreMatrix(np.eye(2)))


def test_fusion_examples():
    rng = np.random.default_rng(10)
    m = ScoreMatrix(rng.normal(size=(4, 4)))
    assert np.allclose(fuse_score_matrices([m, m]).values, minmax_normalize(m.values))
    zero, one = ScoreMatrix(np.zeros((3, 3))), ScoreMatrix(np.ones((3, 3)))
    assert np.allclose(fuse_score_matrices([zero, one]).values, 0.5)
    ms = [ScoreMatrix(rng.normal(size=(5, 5)) * 10 ** i) for i in range(3)]
    norm = [(x.values - x.values.min()) / (x.values.max() - x.values.min()) for x in ms]
    assert np.allclose(fuse_score_matrices(ms).values, sum(norm) / 3)
    weighted = fuse_score_matrices(ms, [1, 0, 3])
    assert np.allclose(weighted.values, 0.25 * norm[0] + 0.75 * norm[2])
    with pytest.raises(ValueError):
        fuse_score_matrices([zero, ScoreMatrix(np.zeros((2, 2)))])


def test_symmetrize():
    assert np.array_equal(symmetrize(ScoreMatrix([[0, 1], [0, 0]])).values, [[0, 0.5], [0.5, 0]])
    rng = np.random.default_rng(11)
    assert symmetrize(ScoreMatrix(rng.normal(size=(6, 6)))).is_symmetric()
    sym = ScoreMatrix([[1.0, 2.0], [2.0, 3.0]])
    assert symmetrize(sym) == sym
