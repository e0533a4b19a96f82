"""Synthetic mixtures, alignment scoring, and seeded benchmark sweeps."""

from __future__ import annotations

import itertools
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy.optimize import linear_sum_assignment

from .decomposition import StimdConfig, stimd_decompose
from .errors import ShapeMismatch, StimdError, UnknownExample
from .signals import SignalMatrix

__all__ = [
    "EXAMPLES",
    "SyntheticExample",
    "AlignmentReport",
    "rotation",
    "ex3d_mixing",
    "ex4d_mixing",
    "generate_example",
    "source_signals",
    "default_grid",
    "linear_guesses",
    "align_and_score",
    "summed_error",
    "cell_seed",
    "worker_count",
    "noise_sweep",
    "sensitivity_scan",
]

EXAMPLES = ("ex2d", "ex3d", "ex4d", "sens_a", "sens_b")

# Central carrier frequencies in Hz, ascending.
CENTRAL_FREQUENCIES = {
    "ex2d": (5.0, 14.0),
    "ex3d": (10.0, 30.0, 45.0),
    "ex4d": (10.0, 15.0, 30.0, 40.0),
    "sens_a": (7.0, 15.0),
    "sens_b": (5.0, 14.0),
}

EX4D_SEED = 42


def default_grid(n: int = 1000, t_start: float = 0.0, t_stop: float = 1.0):
    """(t0, dt, n) for n samples on [t_start, t_stop], endpoints included."""
    return (t_start, (t_stop - t_start) / (n - 1), n)


def rotation(phi: float) -> np.ndarray:
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[c, -s], [s, c]])


def ex3d_mixing(phi1: float = 0.6, phi2: float = 0.7) -> np.ndarray:
    c1, s1, c2, s2 = np.cos(phi1), np.sin(phi1), np.cos(phi2), np.sin(phi2)
    return np.array([[c1 * s2, -s1, c1 * c2],
                     [s1 * s2, c1, s1 * c2],
                     [c2, 0.0, -s2]])


def _ex4d_mixing_fresh(seed: int = EX4D_SEED) -> np.ndarray:
    B = np.random.default_rng(seed).standard_normal((8, 4))
    return B / np.linalg.norm(B, axis=0)


def ex4d_mixing() -> np.ndarray:
    """The committed 8-by-4 mixing matrix of the four-mode example."""
    text = resources.files("stimd").joinpath("data/ex4d_mixing.csv").read_text()
    return np.loadtxt(text.splitlines(), delimiter=",", comments="#")


def _sources(name: str, t: np.ndarray) -> np.ndarray:
    pi = np.pi
    if name in ("ex2d", "sens_b"):
        return np.stack([np.sin(10 * pi * t), np.sin(20 * pi * (t + 0.4) ** 2)])
    if name == "ex3d":
        return np.stack([np.cos(20 * pi * t - 5 * np.sin(pi * t)),
                         np.cos(60 * pi * t + 2 * np.sin(4 * pi * t)),
                         np.cos(90 * pi * t + 3 * np.sin(8 * pi * t))])
    if name == "ex4d":
        return np.stack([np.cos(20 * pi * t - 5 * np.sin(pi * t)),
                         np.cos(30 * pi * t + np.sin(4 * pi * t)),
                         np.cos(60 * pi * t + 3 * np.sin(5 * pi * t)),
                         np.cos(80 * pi * t + 4 * np.sin(5 * pi * t))])
    if name == "sens_a":
        return np.stack([np.sin(14 * pi * t - 5 * np.sin(pi * t)),
                         np.cos(30 * pi * t + 4 * np.sin(2 * pi * t))])
    raise UnknownExample(name)


def source_signals(name: str, t) -> np.ndarray:
    """Analytic sources of a named example at arbitrary times.

    Raises
    ------
    UnknownExample
    """
    if name not in EXAMPLES:
        raise UnknownExample(f"unknown example {name!r}; choose from {', '.join(EXAMPLES)}")
    return _sources(name, np.asarray(t, dtype=float))


def _mixing(name: str) -> np.ndarray:
    if name in ("ex2d", "sens_a", "sens_b"):
        return rotation(0.7)
    if name == "ex3d":
        return ex3d_mixing()
    if name == "ex4d":
        return ex4d_mixing()
    raise UnknownExample(name)


@dataclass(frozen=True)
class SyntheticExample:
    """A known mixture ``X = B S + N``.

    Attributes
    ----------
    name : str
    sources : ndarray, shape (r, n)
    mixing : ndarray, shape (m, r)
    noise_sigma : float
    seed : int
    grid : tuple
        ``(t0, dt, n)``.
    X : SignalMatrix
    """

    name: str
    sources: np.ndarray
    mixing: np.ndarray
    noise_sigma: float
    seed: int
    grid: tuple
    X: SignalMatrix = field(repr=False)

    @property
    def t(self) -> np.ndarray:
        return self.X.t

    @property
    def central_frequencies(self) -> tuple:
        return CENTRAL_FREQUENCIES[self.name]

    def guesses(self, freqs=None) -> list:
        return linear_guesses(self.central_frequencies if freqs is None else freqs, self.t)


def linear_guesses(freqs, t) -> list:
    """Linear phases ``2 pi f t`` (an ``(f, offset)`` pair adds a constant)."""
    out = []
    for f in freqs:
        f, off = (f if isinstance(f, tuple) else (f, 0.0))
        out.append(2.0 * np.pi * f * np.asarray(t) + off)
    return out


def generate_example(name: str, sigma: float = 0.0, seed: int = 0, grid=None) -> SyntheticExample:
    """Build a named synthetic example with seeded Gaussian noise of std ``sigma``.

    Raises
    ------
    UnknownExample
    """
    if name not in EXAMPLES:
        raise UnknownExample(f"unknown example {name!r}; choose from {', '.join(EXAMPLES)}")
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    t0, dt, n = grid or default_grid()
    t = t0 + dt * np.arange(n)
    S = _sources(name, t)
    B = _mixing(name)
    data = B @ S
    if sigma > 0:
        data = data + sigma * np.random.default_rng(seed).standard_normal(data.shape)
    return SyntheticExample(name=name, sources=S, mixing=B, noise_sigma=float(sigma), seed=int(seed),
                            grid=(t0, dt, n), X=SignalMatrix(data, dt, t0))


@dataclass(frozen=True)
class AlignmentReport:
    """Best matching of estimated modes to true modes.

    Attributes
    ----------
    permutation : ndarray
        ``permutation[j]`` is the estimated mode matched to true mode j.
    signs : ndarray
        Sign applied to each matched estimate.
    per_mode_rel_error : ndarray
        ``||sign * s_hat - s|| / ||s||`` per true mode.
    mixing_error : float
        Frobenius error of the aligned mixing matrix, NaN when not given.
    correlations : ndarray
        Absolute correlation of each matched pair.
    """

    permutation: np.ndarray
    signs: np.ndarray
    per_mode_rel_error: np.ndarray
    mixing_error: float
    correlations: np.ndarray


def _unit_rows(S):
    nrm = np.linalg.norm(S, axis=1, keepdims=True)
    return np.divide(S, nrm, out=np.zeros_like(S), where=nrm > 0)


def align_and_score(S_hat, S_true, B_hat=None, B_true=None) -> AlignmentReport:
    """Align estimated modes to the truth by permutation and sign.

    The permutation maximizes the summed absolute correlation, exhaustively
    for up to six modes and by linear assignment above that.

    Raises
    ------
    ShapeMismatch
    """
    S_hat = np.atleast_2d(np.asarray(S_hat, dtype=float))
    S_true = np.atleast_2d(np.asarray(S_true, dtype=float))
    if S_hat.shape != S_true.shape:
        raise ShapeMismatch(f"estimated modes {S_hat.shape} vs true modes {S_true.shape}")
    r = S_true.shape[0]
    C = _unit_rows(S_hat) @ _unit_rows(S_true).T
    A = np.abs(C)
    if r <= 6:
        best = max(itertools.permutations(range(r)), key=lambda p: sum(A[p[j], j] for j in range(r)))
        perm = np.array(best)
    else:
        rows, cols = linear_sum_assignment(-A)
        perm = np.empty(r, dtype=int)
        perm[cols] = rows
    signs = np.array([1.0 if C[perm[j], j] >= 0 else -1.0 for j in range(r)])
    aligned = S_hat[perm] * signs[:, None]
    norms = np.linalg.norm(S_true, axis=1)
    err = np.linalg.norm(aligned - S_true, axis=1) / np.where(norms > 0, norms, 1.0)
    mix_err = float("nan")
    if B_hat is not None and B_true is not None:
        B_hat = np.asarray(B_hat, dtype=float)
        B_true = np.asarray(B_true, dtype=float)
        if B_hat.shape != B_true.shape:
            raise ShapeMismatch(f"mixing {B_hat.shape} vs {B_true.shape}")
        mix_err = float(np.linalg.norm(B_hat[:, perm] * signs - B_true))
    return AlignmentReport(permutation=perm, signs=signs, per_mode_rel_error=err, mixing_error=mix_err,
                           correlations=np.array([A[perm[j], j] for j in range(r)]))


def summed_error(S_hat, S_true) -> float:
    """Aligned ``sum ||s_hat - s||^2 / sum ||s||^2`` over all modes."""
    rep = align_and_score(S_hat, S_true)
    S_true = np.atleast_2d(S_true)
    e2 = np.sum((rep.per_mode_rel_error * np.linalg.norm(S_true, axis=1)) ** 2)
    return float(e2 / np.sum(S_true ** 2))


def cell_seed(seed: int, *indices: int) -> int:
    """Independent integer seed for one sweep cell."""
    return int(np.random.SeedSequence([int(seed), *map(int, indices)]).generate_state(1)[0])


def worker_count(requested: int | None = None) -> int:
    """Workers for sweeps, capped by the STIMD_THREADS environment variable."""
    n = requested or os.cpu_count() or 1
    cap = os.environ.get("STIMD_THREADS")
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            pass
    return max(1, n)


def _map(fn, jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, jobs, chunksize=1))


def _noise_cell(job):
    name, sigma, i, k, seed, freqs, cfg = job
    noise_seed = cell_seed(seed, i, k)
    ex = generate_example(name, sigma, noise_seed)
    try:
        res = stimd_decompose(ex.X, ex.guesses(freqs), cfg)
        errs = align_and_score(res.S, ex.sources).per_mode_rel_error
        return [(sigma, k, j, float(e), False) for j, e in enumerate(errs)]
    except (StimdError, ValueError, np.linalg.LinAlgError):
        return [(sigma, k, j, float("nan"), True) for j in range(ex.sources.shape[0])]


def noise_sweep(example: str, sigmas, trials: int, seed: int = 0, freqs=None, cfg: StimdConfig | None = None,
                workers: int | None = 1) -> list:
    """Per-mode aligned errors over seeded noise realizations.

    Returns
    -------
    list of tuple
        Rows ``(sigma, trial, mode, rel_error, failed)``. Failed trials carry
        NaN errors and do not stop the sweep.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if example not in EXAMPLES:
        raise UnknownExample(example)
    cfg = cfg or StimdConfig()
    jobs = [(example, float(s), i, k, seed, freqs, cfg) for i, s in enumerate(sigmas) for k in range(trials)]
    rows = []
    for cell in _map(_noise_cell, jobs, worker_count(workers)):
        rows.extend(cell)
    return rows


def _sens_cell(job):
    name, sigma, seed, f1, f2, cfg = job
    ex = generate_example(name, sigma, seed)
    try:
        res = stimd_decompose(ex.X, ex.guesses((f1, f2)), cfg)
        return (f1, f2, summed_error(res.S, ex.sources))
    except (StimdError, ValueError, np.linalg.LinAlgError):
        return (f1, f2, 1.0)


def sensitivity_scan(example: str, f1_range, f2_range, sigma: float = 0.0, seed: int = 0,
                     cfg: StimdConfig | None = None, workers: int | None = 1) -> list:
    """Summed aligned error for each pair of linear guesses ``(f1, f2)``.

    Returns
    -------
    list of tuple
        Rows ``(f1, f2, error)``; failed cells record error 1.
    """
    f1_range, f2_range = list(f1_range), list(f2_range)
    if not f1_range or not f2_range:
        raise ValueError("frequency ranges must be non-empty")
    cfg = cfg or StimdConfig()
    jobs = [(example, sigma, seed, float(a), float(b), cfg) for a in f1_range for b in f2_range]
    return _map(_sens_cell, jobs, worker_count(workers))
