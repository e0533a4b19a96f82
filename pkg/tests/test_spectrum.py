import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import rel
from stimd.errors import LengthMismatch
from stimd.nmp import imf_from_phase
from stimd.spectrum import SpectrumGrid, _bin_index, hilbert_spectrum, instantaneous_frequency, uniform_edges
from stimd.theta_space import normalize_phase

T = np.linspace(0, 1, 1000)


def _imf(theta, a=1.0, t=T):
    return imf_from_phase(np.broadcast_to(np.asarray(a, dtype=float), t.shape).copy(), normalize_phase(theta, t))


def test_instantaneous_frequency_tone():
    np.testing.assert_allclose(instantaneous_frequency(_imf(2 * np.pi * 5 * T)), 5.0, atol=1e-9)


def test_instantaneous_frequency_chirp():
    f = instantaneous_frequency(_imf(20 * np.pi * (T + 0.4) ** 2))
    assert rel(f[1:-1], 20 * (T[1:-1] + 0.4)) < 1e-6


def test_single_tone_one_row():
    sp = hilbert_spectrum([_imf(2 * np.pi * 5 * T)], uniform_edges(0, 1, 10), uniform_edges(0.25, 20.25, 40))
    rows = np.nonzero(sp.intensity.sum(axis=1))[0]
    assert rows.tolist() == [9]
    assert sp.total == pytest.approx(1000.0) and sp.dropped_count == 0


def test_two_tones_mass_ratio():
    sp = hilbert_spectrum([_imf(2 * np.pi * 5 * T, 1.0), _imf(2 * np.pi * 14 * T, 2.0)],
                          uniform_edges(0, 1, 5), uniform_edges(0.5, 20.5, 20))
    mass = sp.intensity.sum(axis=1)
    assert np.count_nonzero(mass) == 2
    assert mass[13] / mass[4] == pytest.approx(2.0)


def test_chirp_ridge_monotone():
    sp = hilbert_spectrum([_imf(20 * np.pi * (T + 0.4) ** 2)], uniform_edges(0, 1, 20), uniform_edges(0, 40, 80))
    ridge = np.argmax(sp.intensity, axis=0)
    assert np.all(np.diff(ridge) >= 0) and ridge[-1] > ridge[0]


@given(st.floats(2, 40), st.floats(0.1, 3), st.floats(0, 30), st.integers(1, 60))
def test_mass_conservation(f, amp, fmax, fbins):
    imfs = [_imf(2 * np.pi * f * T + np.sin(2 * np.pi * T), amp), _imf(2 * np.pi * 3 * T, 0.5 * amp)]
    sp = hilbert_spectrum(imfs, uniform_edges(0.1, 0.9, 7), uniform_edges(0, fmax + 1, fbins))
    total = sum(float(m.a.sum()) for m in imfs)
    assert sp.total + sp.dropped == pytest.approx(total, rel=1e-12)
    assert np.all(sp.intensity >= 0)


@given(st.floats(-50, 50))
def test_time_shift_invariance(shift):
    th = 2 * np.pi * 8 * T + np.sin(2 * np.pi * T)
    t_edges, f_edges = uniform_edges(0, 1, 8), uniform_edges(0, 20, 40)
    base = hilbert_spectrum([_imf(th)], t_edges, f_edges)
    moved = hilbert_spectrum([_imf(th, t=T + shift)], t_edges + shift, f_edges)
    np.testing.assert_allclose(moved.intensity, base.intensity, atol=1e-9)


def test_bin_edges_left_closed_last_included():
    edges = np.array([0.0, 10.0, 20.0])
    x = np.array([-1e-9, 0.0, 9.999, 10.0, 19.99, 20.0, 20.0 + 1e-9, np.nan])
    assert _bin_index(x, edges).tolist() == [-1, 0, 0, 1, 1, 1, -1, -1]


def test_out_of_range_dropped_and_counted():
    sp = hilbert_spectrum([_imf(2 * np.pi * 30 * T, 2.0)], uniform_edges(0, 1, 4), uniform_edges(0, 20, 10))
    assert sp.total == 0 and sp.dropped_count == 1000 and sp.dropped == pytest.approx(2000)


def test_grid_mismatch_and_validation():
    a = _imf(2 * np.pi * 5 * T)
    b = _imf(2 * np.pi * 5 * T[:500], t=T[:500])
    with pytest.raises(LengthMismatch):
        hilbert_spectrum([a, b], uniform_edges(0, 1, 2), uniform_edges(0, 10, 2))
    with pytest.raises(ValueError):
        SpectrumGrid(np.array([0.0, 0.0]), np.array([0.0, 1.0]), np.zeros((1, 1)))
    with pytest.raises(ValueError):
        SpectrumGrid(np.array([0.0, 1.0]), np.array([0.0, 1.0]), np.zeros((2, 1)))
    with pytest.raises(ValueError):
        uniform_edges(1, 0, 3)


def test_serialization(tmp_path):
    sp = hilbert_spectrum([_imf(2 * np.pi * 5 * T)], uniform_edges(0, 1, 2), uniform_edges(0, 10, 2))
    path = tmp_path / "s.csv"
    sp.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t_bin,f_bin,intensity" and len(lines) == 1 + 4
    assert lines[1].split(",")[:2] == ["0", "0"]
    doc = json.loads(sp.to_json())
    np.testing.assert_array_equal(doc["intensity"], sp.intensity)
    assert doc["dropped_count"] == 0
