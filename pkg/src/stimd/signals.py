"""Multichannel sampled signals."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch

__all__ = ["SignalMatrix"]


@dataclass(frozen=True)
class SignalMatrix:
    """m channels sampled at n uniform times.

    Attributes
    ----------
    data : ndarray, shape (m, n)
    dt : float
        Sample spacing in seconds.
    t0 : float
        Time of the first sample in seconds.
    """

    data: np.ndarray
    dt: float = 1.0
    t0: float = 0.0

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim == 1:
            data = data[None, :]
        if data.ndim != 2:
            raise ShapeMismatch(f"signal matrix must be 2-D, got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 4:
            raise ShapeMismatch(f"need at least 1 channel and 4 samples, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("signal matrix contains non-finite entries")
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "t0", float(self.t0))

    @classmethod
    def on_interval(cls, data, t_start: float = 0.0, t_stop: float = 1.0) -> "SignalMatrix":
        """Samples spanning ``[t_start, t_stop]`` with both endpoints included."""
        data = np.asarray(data, dtype=float)
        n = data.shape[-1]
        return cls(data, dt=(t_stop - t_start) / (n - 1), t0=t_start)

    @property
    def m(self) -> int:
        return self.data.shape[0]

    @property
    def n(self) -> int:
        return self.data.shape[1]

    @property
    def t(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n)

    def with_data(self, data) -> "SignalMatrix":
        return SignalMatrix(data, self.dt, self.t0)

    def frobenius(self) -> float:
        return float(np.linalg.norm(self.data))
