import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.signal import hilbert

from stimd.baselines import (
    dominant_frequency,
    fastica_factorize,
    sign_normalize,
    suggest_guesses,
    svd_factorize,
    truncation_error,
)
from stimd.errors import NoConvergence
from stimd.signals import SignalMatrix
from stimd.synth import align_and_score, generate_example, rotation

T = np.linspace(0, 1, 1000)


def test_svd_rank_one_exact():
    rng = np.random.default_rng(0)
    X = np.outer(rng.standard_normal(4), rng.standard_normal(200))
    f = svd_factorize(X, 1)
    assert np.linalg.norm(f.reconstruct() - X) < 1e-10 * np.linalg.norm(X)


def test_svd_full_rank_exact():
    X = np.random.default_rng(1).standard_normal((5, 100))
    f = svd_factorize(X, 5)
    assert np.linalg.norm(f.reconstruct() - X) < 1e-10 * np.linalg.norm(X)


@settings(max_examples=30)
@given(st.integers(0, 10_000), st.integers(2, 8), st.integers(1, 7))
def test_svd_truncation_identity(seed, m, r):
    r = min(r, m - 1)
    X = np.random.default_rng(seed).standard_normal((m, 60))
    f = svd_factorize(X, r)
    s = f.singular_values
    assert abs(truncation_error(X, f) - s[r] / s[0]) < 1e-8
    assert np.all(np.diff(s) <= 0)
    G = f.spatial.T @ f.spatial
    assert np.max(np.abs(G - np.diag(np.diag(G)))) < 1e-8 * max(1.0, np.max(np.abs(G)))


def test_svd_modes_stay_mixed_on_two_dimensional_example():
    ex = generate_example("ex2d", 0.1, 7)
    f = svd_factorize(ex.X, 2)
    assert np.max(align_and_score(f.temporal, ex.sources).correlations) < 0.99


def test_svd_rank_validation():
    with pytest.raises(ValueError):
        svd_factorize(np.ones((2, 10)), 3)
    with pytest.raises(ValueError):
        svd_factorize(np.ones((2, 10)), 0)


def _uniform_mixture(seed=0, n=2000):
    S = np.random.default_rng(seed).uniform(-1, 1, (2, n))
    return S, rotation(0.7) @ S


def test_fastica_recovers_uniform_sources():
    S, X = _uniform_mixture()
    f = fastica_factorize(X, 2)
    assert np.all(align_and_score(f.temporal, S).correlations > 0.95)
    assert f.converged


def test_fastica_matches_reference_implementation():
    sklearn = pytest.importorskip("sklearn.decomposition")
    S, X = _uniform_mixture(3)
    ours = fastica_factorize(X, 2).temporal
    ref = sklearn.FastICA(2, random_state=0, whiten="unit-variance").fit_transform(X.T).T
    assert np.all(align_and_score(ours, ref).correlations > 0.99)


def test_fastica_unmixing_orthonormal_and_reconstructs():
    S, X = _uniform_mixture(5)
    f = fastica_factorize(X, 2)
    np.testing.assert_allclose(f.unmixing @ f.unmixing.T, np.eye(2), atol=1e-6)
    assert np.linalg.norm(f.reconstruct() - X) < 1e-8 * np.linalg.norm(X)
    np.testing.assert_allclose(f.temporal.var(axis=1), 1.0, atol=1e-8)


def test_fastica_non_gaussian_source_first():
    rng = np.random.default_rng(0)
    G = np.vstack([rng.standard_normal(2000), rng.uniform(-1, 1, 2000)])
    f = fastica_factorize(rotation(0.4) @ G, 2)
    assert abs(np.corrcoef(f.temporal[0], G[1])[0, 1]) > 0.99


def test_fastica_modes_carry_spurious_amplitude_modulation():
    ex = generate_example("ex2d", 0.1, 7)
    f = fastica_factorize(ex.X, 2)
    rep = align_and_score(f.temporal, ex.sources)
    inner = slice(50, -50)
    for j in range(2):
        est = f.temporal[rep.permutation[j]]
        est = est / np.linalg.norm(est) * np.linalg.norm(ex.sources[j])
        assert np.var(np.abs(hilbert(est))[inner]) > np.var(np.abs(hilbert(ex.sources[j]))[inner])


def test_fastica_determinism_and_validation():
    S, X = _uniform_mixture()
    a, b = fastica_factorize(X, 2, seed=4), fastica_factorize(X, 2, seed=4)
    assert np.array_equal(a.temporal, b.temporal)
    with pytest.raises(ValueError):
        fastica_factorize(X, 3)
    with pytest.raises(ValueError):
        fastica_factorize(np.vstack([X, np.zeros(X.shape[1])]), 2)
    with pytest.raises(ValueError):
        fastica_factorize(np.vstack([X[0], 2 * X[0]]), 2)
    with pytest.raises(NoConvergence):
        fastica_factorize(X, 2, max_iter=1, tol=1e-300, strict=True)


def test_sign_normalize():
    sp = np.array([[1.0, -3.0], [-2.0, 1.0]])
    tm = np.array([[1.0, 2.0], [3.0, 4.0]])
    s2, t2 = sign_normalize(sp, tm)
    np.testing.assert_array_equal(s2, [[-1.0, 3.0], [2.0, -1.0]])
    np.testing.assert_allclose(s2 @ t2, sp @ tm)


def test_dominant_frequency_tone_bins():
    t = np.arange(1000) * 1e-3
    assert dominant_frequency(np.cos(2 * np.pi * 5 * t), 1e-3) == 5.0
    assert dominant_frequency(np.zeros(100), 1e-3) == 0.0


def test_suggest_guesses_three_dimensional_example():
    ex = generate_example("ex3d")
    g = suggest_guesses(ex.X, 3)
    np.testing.assert_allclose(g.frequencies, [10, 30, 45], atol=2)
    assert np.all(np.diff(g.frequencies) >= 0)
    np.testing.assert_allclose(g.phases[1], 2 * np.pi * g.frequencies[1] * ex.t)


def test_suggest_guesses_pure_tone_exact_bin():
    t = np.arange(1000) * 1e-3
    g = suggest_guesses(SignalMatrix(np.cos(2 * np.pi * 5 * t)[None], 1e-3), 1)
    assert g.frequencies.tolist() == [5.0] and g.duplicates == []


def test_suggest_guesses_flags_duplicates():
    X = np.vstack([np.cos(2 * np.pi * 9 * T), np.cos(2 * np.pi * 9 * T + 1.0), np.cos(2 * np.pi * 20 * T)])
    g = suggest_guesses(SignalMatrix(X, T[1]), 3)
    assert g.duplicates == [(0, 1)]
    assert g.frequencies[0] == g.frequencies[1] < g.frequencies[2]


def test_suggest_guesses_rank_deficient_pads_with_duplicates():
    b = np.array([0.6, 0.8])
    g = suggest_guesses(SignalMatrix(np.outer(b, np.cos(2 * np.pi * 12 * T)), T[1]), 2)
    assert g.rank == 1 and g.duplicates == [(0, 1)]
    with pytest.raises(ValueError):
        suggest_guesses(SignalMatrix(np.ones((2, 100))), 1)
    with pytest.raises(ValueError):
        suggest_guesses(SignalMatrix(np.outer(b, np.cos(2 * np.pi * 12 * T)), T[1]), 3)


@settings(max_examples=15)
@given(st.integers(0, 1000))
def test_suggest_guesses_sorted(seed):
    ex = generate_example("ex4d", 0.1, seed)
    f = suggest_guesses(ex.X, 4, seed=seed).frequencies
    assert np.all(np.diff(f) >= 0)
