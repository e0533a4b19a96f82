"""Instantaneous frequency and Hilbert spectra of extracted modes."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatch
from .nmp import ImfComponent

__all__ = ["SpectrumGrid", "instantaneous_frequency", "hilbert_spectrum", "uniform_edges"]


@dataclass(frozen=True)
class SpectrumGrid:
    """Amplitude deposited on a time-frequency grid.

    Attributes
    ----------
    t_bins : ndarray
        Time-bin edges in seconds, strictly increasing.
    f_bins : ndarray
        Frequency-bin edges in Hz, strictly increasing.
    intensity : ndarray, shape (len(f_bins) - 1, len(t_bins) - 1)
        Summed amplitude per bin, non-negative.
    dropped : float
        Amplitude of samples that fell outside the grid.
    dropped_count : int
        Number of such samples.
    """

    t_bins: np.ndarray
    f_bins: np.ndarray
    intensity: np.ndarray
    dropped: float = 0.0
    dropped_count: int = 0

    def __post_init__(self):
        for name in ("t_bins", "f_bins"):
            e = getattr(self, name)
            if e.ndim != 1 or e.shape[0] < 2 or np.any(np.diff(e) <= 0):
                raise ValueError(f"{name} must be strictly increasing with at least two edges")
        if self.intensity.shape != (self.f_bins.shape[0] - 1, self.t_bins.shape[0] - 1):
            raise ValueError("intensity shape does not match the bin edges")

    @property
    def total(self) -> float:
        return float(self.intensity.sum())

    def to_rows(self):
        """Yield ``(t_left, f_left, intensity)`` for every bin, time-major."""
        for j, t in enumerate(self.t_bins[:-1]):
            for i, f in enumerate(self.f_bins[:-1]):
                yield float(t), float(f), float(self.intensity[i, j])

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("t_bin,f_bin,intensity\n")
            for t, f, v in self.to_rows():
                fh.write(f"{t:.17g},{f:.17g},{v:.17g}\n")

    def to_json(self) -> str:
        return json.dumps({"t_bins": self.t_bins.tolist(), "f_bins": self.f_bins.tolist(),
                           "intensity": self.intensity.tolist(), "dropped": self.dropped,
                           "dropped_count": self.dropped_count}, sort_keys=True)


def uniform_edges(lo: float, hi: float, bins: int) -> np.ndarray:
    """``bins + 1`` equally spaced edges on ``[lo, hi]``."""
    if bins < 1 or not hi > lo:
        raise ValueError("need bins >= 1 and hi > lo")
    return np.linspace(lo, hi, bins + 1)


def instantaneous_frequency(imf: ImfComponent) -> np.ndarray:
    """``theta'(t) / 2 pi`` in Hz by central differences, one-sided at the ends."""
    return np.gradient(imf.theta.theta, imf.theta.t) / (2.0 * np.pi)


def _bin_index(x: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Left-closed bin index, with the last edge closing the final bin; -1 outside."""
    idx = np.searchsorted(edges, x, side="right") - 1
    idx[x == edges[-1]] = edges.shape[0] - 2
    idx[(x < edges[0]) | (x > edges[-1]) | ~np.isfinite(x)] = -1
    return idx


def hilbert_spectrum(imfs, t_bins, f_bins) -> SpectrumGrid:
    """Deposit each mode's amplitude at its instantaneous frequency.

    Every sample adds ``a(t)`` to the bin containing ``(t, omega(t) / 2 pi)``.
    Bins are left-closed, except that the last edge is included in the last
    bin. Samples outside the grid are dropped and counted.

    Parameters
    ----------
    imfs : sequence of ImfComponent
        Modes sharing one time grid.
    t_bins, f_bins : array_like
        Bin edges in seconds and Hz.
    """
    t_bins = np.asarray(t_bins, dtype=float)
    f_bins = np.asarray(f_bins, dtype=float)
    intensity = np.zeros((max(f_bins.shape[0] - 1, 0), max(t_bins.shape[0] - 1, 0)))
    imfs = list(imfs)
    dropped, count = 0.0, 0
    if imfs:
        t = imfs[0].t
        for imf in imfs[1:]:
            if imf.t.shape != t.shape or not np.array_equal(imf.t, t):
                raise LengthMismatch("all modes must share the time grid")
        ti = _bin_index(t, t_bins) if t_bins.shape[0] >= 2 else np.full(t.shape, -1)
        for imf in imfs:
            fi = _bin_index(instantaneous_frequency(imf), f_bins) if f_bins.shape[0] >= 2 else ti * 0 - 1
            ok = (ti >= 0) & (fi >= 0)
            np.add.at(intensity, (fi[ok], ti[ok]), imf.a[ok])
            dropped += float(imf.a[~ok].sum())
            count += int(np.count_nonzero(~ok))
    return SpectrumGrid(t_bins=t_bins, f_bins=f_bins, intensity=intensity, dropped=dropped, dropped_count=count)
