import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from stimd.cli import EXIT_ERROR, EXIT_OK, main, parse_guesses, parse_range
from stimd.errors import ShapeMismatch
from stimd.io import read_matrix_csv, read_signal_csv, write_json, write_matrix_csv, write_signal_csv
from stimd.signals import SignalMatrix
from stimd.synth import align_and_score

T = np.linspace(0, 1, 1000)
DT = T[1]

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=50)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(4, 30)), elements=finite),
       st.floats(-1e6, 1e6), st.floats(1e-9, 1e3))
def test_signal_csv_round_trip_is_exact(tmp_path_factory, data, t0, dt):
    path = tmp_path_factory.mktemp("csv") / "x.csv"
    write_signal_csv(path, SignalMatrix(data, dt, t0))
    back = read_signal_csv(path)
    assert np.array_equal(back.data, data)
    assert back.dt == dt and back.t0 == t0


def test_csv_headers_and_errors(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("# 0.5,0.01\n1,2,3,4\n5,6,7,8\n")
    X = read_signal_csv(p)
    assert X.t0 == 0.5 and X.dt == 0.01 and X.data.shape == (2, 4)
    assert read_signal_csv(p, dt=2.0).dt == 2.0
    p.write_text("1,2,3,4\n")
    assert read_signal_csv(p).dt == 1.0
    p.write_text("1,2,3,4\n1,2,3\n")
    with pytest.raises(ShapeMismatch):
        read_matrix_csv(p)
    p.write_text("# t0=0,dt=1\n")
    with pytest.raises(ShapeMismatch):
        read_matrix_csv(p)
    p.write_text("1,2,x,4\n")
    with pytest.raises(ValueError, match=":1:"):
        read_matrix_csv(p)


def test_json_is_deterministic(tmp_path):
    write_json(tmp_path / "a.json", {"b": 1, "a": [1.5, None]})
    assert (tmp_path / "a.json").read_text() == '{\n  "a": [\n    1.5,\n    null\n  ],\n  "b": 1\n}\n'


def test_argument_parsers():
    assert parse_guesses("5,14") == [[5.0, 0.0], [14.0, 0.0]]
    assert parse_guesses("10:-1.5708,100") == [[10.0, -1.5708], [100.0, 0.0]]
    assert parse_range("1:25:1") == [float(v) for v in range(1, 26)]
    assert parse_range("2:4") == [2.0, 3.0, 4.0]


def _run(*argv):
    return main([str(a) for a in argv])


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "timing.json"}


def test_decompose_ex2d(tmp_path):
    out = tmp_path / "ex2d"
    assert _run("decompose", "--example", "ex2d", "--noise", 0.1, "--seed", 7, "--guesses", "5,14",
                "--output-dir", out) == EXIT_OK
    for name in ("B.csv", "S.csv", "residual.csv", "theta.csv", "amplitude.csv", "result.json"):
        assert (out / name).exists()
    rec = json.loads((out / "result.json").read_text())
    assert rec["residual_fraction"] < 0.2
    assert rec["exit_code"] == 0 and rec["converged"] is True
    assert len(rec["modes"]) == 2 and all("objective" in m for m in rec["modes"])
    assert min(rec["truth"]["correlations"]) > 0.99
    assert "output_dir" not in rec["config"]


def test_decompose_rank_one_auto_guess(tmp_path):
    s = np.cos(2 * np.pi * 12 * T + 2 * np.sin(np.pi * T))
    write_matrix_csv(tmp_path / "X.csv", np.outer([0.6, -0.8], s), (0.0, DT))
    out = tmp_path / "r1"
    code = _run("decompose", "--input", tmp_path / "X.csv", "--auto-guess", "--modes", 2, "--seed", 1,
                "--output-dir", out)
    assert code in (0, 2)
    rec = json.loads((out / "result.json").read_text())
    assert rec["residual_fraction_after"][0] < 1e-3
    assert rec["auto_guess"]["rank"] == 1 and rec["auto_guess"]["duplicates"] == [[0, 1]]
    assert rec["config"]["input_sha256"]


def test_decompose_six_channel_two_rhythms(tmp_path):
    rng = np.random.default_rng(0)
    slow = (1 + 0.3 * np.cos(np.pi * T)) * np.sin(20 * np.pi * T)
    fast = 0.4 * np.cos(200 * np.pi * T + 0.5 * np.sin(6 * np.pi * T))
    X = rng.standard_normal((6, 2)) @ np.vstack([slow, fast]) + 0.02 * rng.standard_normal((6, 1000))
    write_matrix_csv(tmp_path / "hc.csv", X, (0.0, DT))
    out = tmp_path / "hc"
    assert _run("decompose", "--input", tmp_path / "hc.csv", "--guesses", "10:-1.5708,100", "--modes", 2,
                "--output-dir", out) == EXIT_OK
    B, _ = read_matrix_csv(out / "B.csv")
    S, header = read_matrix_csv(out / "S.csv")
    assert B.shape == (6, 2) and header == (0.0, DT)
    rep = align_and_score(S, np.vstack([slow, fast]))
    assert rep.permutation.tolist() == [0, 1] and np.all(rep.correlations > 0.99)
    # The reconstruction misfit is what the run reports as its residual fraction.
    rec = json.loads((out / "result.json").read_text())
    assert np.linalg.norm(X - B @ S) / np.linalg.norm(X) == pytest.approx(rec["residual_fraction"], rel=1e-9)


@pytest.fixture(scope="module")
def ex3d_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("ex3d")
    assert _run("decompose", "--example", "ex3d", "--guesses", "10,30,45", "--output-dir", out / "dec") == 0
    return out


def test_predict_ex3d(ex3d_run):
    out = ex3d_run / "pred"
    assert _run("predict", "--result-dir", ex3d_run / "dec", "--horizon", 1.0, "--output-dir", out) == EXIT_OK
    rec = json.loads((out / "result.json").read_text())
    assert max(rec["truth"]["per_mode_rel_error"]) < 0.1
    P, header = read_matrix_csv(out / "prediction.csv")
    assert P.shape == (3, 1000) and header[0] == pytest.approx(1.0)


def test_predict_rejects_zero_horizon(ex3d_run, capsys):
    assert _run("predict", "--result-dir", ex3d_run / "dec", "--horizon", 0.0, "--output-dir",
                ex3d_run / "bad") == EXIT_ERROR
    assert "horizon" in capsys.readouterr().err


def test_predict_pure_tone(tmp_path):
    write_matrix_csv(tmp_path / "tone.csv", np.outer([1.0, 0.5], np.cos(2 * np.pi * 7 * T)), (0.0, DT))
    assert _run("decompose", "--input", tmp_path / "tone.csv", "--guesses", "7", "--output-dir", tmp_path / "d") == 0
    assert _run("predict", "--result-dir", tmp_path / "d", "--horizon", 1.0, "--output-dir", tmp_path / "p") == 0
    P, (t0, dt) = read_matrix_csv(tmp_path / "p" / "prediction.csv")
    t = t0 + dt * np.arange(P.shape[1])
    amp = np.linalg.norm([1.0, 0.5])
    assert np.linalg.norm(P[0] - amp * np.cos(2 * np.pi * 7 * t)) / np.linalg.norm(P[0]) < 1e-4
    assert _run("spectrum", "--result-dir", tmp_path / "d", "--f-bins", 100, "--f-max", 50.25,
                "--output-dir", tmp_path / "s") == 0
    grid = np.array(json.loads((tmp_path / "s" / "spectrum.json").read_text())["intensity"])
    assert np.count_nonzero(grid.sum(axis=1)) == 1


def test_spectrum_ex2d_tracks(tmp_path):
    assert _run("decompose", "--example", "ex2d", "--guesses", "5,14", "--output-dir", tmp_path / "d") == 0
    assert _run("spectrum", "--result-dir", tmp_path / "d", "--t-bins", 10, "--f-bins", 50, "--f-max", 50,
                "--output-dir", tmp_path / "s") == 0
    doc = json.loads((tmp_path / "s" / "spectrum.json").read_text())
    lines = (tmp_path / "s" / "spectrum.csv").read_text().splitlines()
    assert lines[0] == "t_bin,f_bin,intensity" and len(lines) == 1 + 500
    modes = []
    for row in read_matrix_csv(tmp_path / "d" / "theta.csv")[0]:
        modes.append(np.gradient(row, T) / (2 * np.pi))
    flat, chirp = sorted(modes, key=lambda f: np.ptp(f[50:-50]))
    assert np.ptp(flat[50:-50]) < 1.0 and abs(np.median(flat) - 5) < 0.5
    ridge = [np.median(chirp[k:k + 100]) for k in range(0, 1000, 100)]
    assert np.all(np.diff(ridge) > 0)
    assert sum(map(sum, doc["intensity"])) > 0


def test_spectrum_two_detector_chirp(tmp_path):
    t = np.linspace(0, 1, 2000)
    c = np.cos(2 * np.pi * (40 * t + 80 * t ** 2)) * (0.5 + 0.5 * t)
    noise = 0.05 * np.random.default_rng(0).standard_normal((2, 2000))
    write_matrix_csv(tmp_path / "strain.csv", np.vstack([c, 0.8 * c]) + noise, (0.0, t[1]))
    assert _run("decompose", "--input", tmp_path / "strain.csv", "--guesses", "50,128",
                "--output-dir", tmp_path / "d") in (0, 2)
    assert _run("spectrum", "--result-dir", tmp_path / "d", "--t-bins", 10, "--f-bins", 60, "--f-max", 300,
                "--output-dir", tmp_path / "s") == 0
    grid = np.array(json.loads((tmp_path / "s" / "spectrum.json").read_text())["intensity"])
    ridge = np.argmax(grid, axis=0)
    assert np.all(np.diff(ridge) >= 0) and ridge[-1] > ridge[0]


def test_missing_result_is_error(tmp_path, capsys):
    assert _run("spectrum", "--result-dir", tmp_path / "nothing", "--output-dir", tmp_path / "s") == EXIT_ERROR
    assert "error" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["decompose", "--example", "ex2d", "--output-dir", "x"],
    ["decompose", "--example", "ex2d", "--guesses", "5,14", "--modes", "3", "--output-dir", "x"],
    ["decompose", "--example", "ex2d", "--guesses", "5,14", "--lambda-final", "0.9", "--output-dir", "x"],
    ["decompose", "--example", "ex2d", "--auto-guess", "--output-dir", "x"],
    ["decompose", "--example", "nope", "--guesses", "5", "--output-dir", "x"],
    ["decompose", "--guesses", "5", "--output-dir", "x"],
    ["bench", "noise", "--trials", "0", "--output-dir", "x"],
    ["spectrum", "--result-dir", "x", "--t-bins", "0", "--output-dir", "x"],
    [],
])
def test_usage_errors_exit_one(tmp_path, monkeypatch, argv):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == EXIT_ERROR


def test_bad_input_shape_exit_one(tmp_path):
    (tmp_path / "bad.csv").write_text("1,2,3,4\n1,2\n")
    assert _run("decompose", "--input", tmp_path / "bad.csv", "--guesses", "1", "--output-dir", tmp_path / "o") == 1


def test_unconverged_exit_two(tmp_path):
    code = _run("decompose", "--example", "ex3d", "--guesses", "10,30,45", "--max-inner-iters", 1,
                "--output-dir", tmp_path / "o")
    rec = json.loads((tmp_path / "o" / "result.json").read_text())
    assert code == 2 and rec["exit_code"] == 2 and rec["converged"] is False


def test_replay_byte_identical(tmp_path, ex3d_run):
    cases = [
        ["decompose", "--example", "ex2d", "--noise", 0.1, "--seed", 7, "--guesses", "5,14"],
        ["predict", "--result-dir", ex3d_run / "dec", "--horizon", 0.5],
        ["spectrum", "--result-dir", ex3d_run / "dec"],
        ["bench", "baselines", "--seed", 2],
        ["bench", "sensitivity", "--range", "7:15:8"],
    ]
    for i, argv in enumerate(cases):
        first, second = tmp_path / f"a{i}", tmp_path / f"b{i}"
        code = _run(*argv, "--output-dir", first)
        assert _run("replay", first / "result.json", "--output-dir", second) == code
        assert _files(first) == _files(second)


def test_replay_detects_changed_input(tmp_path):
    write_matrix_csv(tmp_path / "X.csv", np.outer([1.0, 0.5], np.cos(2 * np.pi * 7 * T)), (0.0, DT))
    assert _run("decompose", "--input", tmp_path / "X.csv", "--guesses", "7", "--output-dir", tmp_path / "a") == 0
    write_matrix_csv(tmp_path / "X.csv", np.outer([1.0, 0.4], np.cos(2 * np.pi * 7 * T)), (0.0, DT))
    assert _run("replay", tmp_path / "a" / "result.json", "--output-dir", tmp_path / "b") == EXIT_ERROR


def test_bench_noise_row_count(tmp_path):
    out = tmp_path / "noise"
    assert _run("bench", "noise", "--example", "ex3d", "--sigmas", "0.01,0.1,0.3", "--trials", 20, "--seed", 3,
                "--output-dir", out) == 0
    lines = (out / "noise.csv").read_text().splitlines()
    assert lines[0] == "sigma,trial,mode,rel_error,failed"
    assert len(lines) - 1 == 3 * 20 * 3
    assert (out / "timing.json").exists()


def test_bench_sensitivity_grid(tmp_path):
    # The default range is the full 1..25 Hz grid; a coarse range keeps the run short.
    assert parse_range("1:25:1") == [float(v) for v in range(1, 26)]
    out = tmp_path / "sens"
    assert _run("bench", "sensitivity", "--example", "sens_a", "--range", "1:25:6", "--output-dir", out) == 0
    lines = (out / "sensitivity.csv").read_text().splitlines()
    assert lines[0] == "f1,f2,error" and len(lines) - 1 == 5 * 5
    rec = json.loads((out / "result.json").read_text())
    assert rec["cells"] == 25 and rec["config"]["f_range"] == [1.0, 7.0, 13.0, 19.0, 25.0]


def test_bench_baselines_stimd_best(tmp_path):
    out = tmp_path / "base"
    assert _run("bench", "baselines", "--example", "ex2d", "--noise", 0.1, "--output-dir", out) == 0
    rec = json.loads((out / "result.json").read_text())
    assert rec["stimd_best"] is True
    lines = (out / "baselines.csv").read_text().splitlines()
    assert lines[0] == "method,mode,rel_error" and len(lines) - 1 == 3 * 2


def test_bench_runtime(tmp_path):
    out = tmp_path / "rt"
    assert _run("bench", "runtime", "--samples", "500", "--channels", "2,3", "--output-dir", out) == 0
    assert len((out / "runtime.csv").read_text().splitlines()) == 1 + 2
    timing = json.loads((out / "timing.json").read_text())
    assert len(timing["cells"]) == 2
