"""Phase-space coordinates and the low-pass projection onto V(theta, lambda).

A phase function theta(t) maps time onto a normalized coordinate
``theta_bar = (theta - theta[0]) / (theta[-1] - theta[0])`` on [0, 1]. The
adaptive basis

    V(theta, lambda) = span{1, cos(k theta / 2L), sin(k theta / 2L) : k <= 2 lambda floor(L)}

becomes, in theta_bar, the set of half-frequency modes ``cos(k pi theta_bar)``
and ``sin(k pi theta_bar)``. Projection is carried out with a type-I DCT,
which is the DFT of the even extension of a signal on a uniform theta_bar grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dct, idct
from scipy.interpolate import CubicSpline, make_interp_spline

from .errors import DegeneratePhase, LengthMismatch, NonMonotonePhase

__all__ = [
    "PhaseFunction",
    "ThetaSpaceConfig",
    "EnvelopePair",
    "normalize_phase",
    "cutoff_index",
    "floor_waves",
    "theta_grid",
    "resample_points_for",
    "to_theta_coordinates",
    "from_theta_coordinates",
    "project_to_V",
    "project_on_phase",
    "envelope_solve",
]

_FLOOR_EPS = 1e-9
_KNOT_TOL = 1e-12
_SPAN_RTOL = 1e-9


def floor_waves(l_theta: float) -> int:
    """Integer wave count, tolerant to rounding just below an integer."""
    return int(np.floor(l_theta + _FLOOR_EPS))


def cutoff_index(l_floor: int, lam: float) -> int:
    """Highest retained half-frequency index ``floor(2 lambda floor(L))``."""
    return int(np.floor(2.0 * lam * l_floor + _FLOOR_EPS))


@dataclass(frozen=True)
class PhaseFunction:
    """Sampled monotone phase with its normalized form.

    Attributes
    ----------
    t : ndarray
        Uniform time grid in seconds.
    theta : ndarray
        Phase samples in radians, non-decreasing.
    theta_bar : ndarray
        Normalized phase on [0, 1].
    l_theta : float
        Real wave count ``(theta[-1] - theta[0]) / 2 pi``.
    """

    t: np.ndarray
    theta: np.ndarray
    theta_bar: np.ndarray
    l_theta: float

    @property
    def l_floor(self) -> int:
        """Integer wave count used for the basis cutoff."""
        return floor_waves(self.l_theta)

    @property
    def n(self) -> int:
        return self.theta.shape[0]

    def rate(self) -> np.ndarray:
        """Phase rate d theta / dt by central differences."""
        return np.gradient(self.theta, self.t)


def normalize_phase(theta, t=None, *, min_waves: float = 1.0) -> PhaseFunction:
    """Build a :class:`PhaseFunction` from phase samples.

    Parameters
    ----------
    theta : array_like
        Phase samples, at least four, non-decreasing.
    t : array_like, optional
        Time grid. Defaults to sample indices.
    min_waves : float
        Minimum span in full waves; one by default.

    Returns
    -------
    PhaseFunction

    Raises
    ------
    NonMonotonePhase
        If any step decreases by more than 1e-12 (relative to the phase scale).
    DegeneratePhase
        If the phase spans less than ``min_waves`` full waves, up to a
        relative tolerance of 1e-9.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1 or theta.shape[0] < 4:
        raise DegeneratePhase("phase needs at least 4 samples")
    if not np.all(np.isfinite(theta)):
        raise NonMonotonePhase("phase contains non-finite samples")
    t = np.arange(theta.shape[0], dtype=float) if t is None else np.asarray(t, dtype=float)
    if t.shape != theta.shape:
        raise LengthMismatch(f"time grid has {t.shape[0]} samples, phase has {theta.shape[0]}")
    tol = 1e-12 * max(1.0, float(np.max(np.abs(theta))))
    steps = np.diff(theta)
    if np.any(steps < -tol):
        j = int(np.argmin(steps))
        raise NonMonotonePhase(f"phase decreases by {-steps[j]:.3g} at sample {j}")
    span = float(theta[-1] - theta[0])
    # A relative slack lets a phase of exactly one wave survive grid rounding.
    if span < 2.0 * np.pi * min_waves * (1.0 - _SPAN_RTOL):
        raise DegeneratePhase(f"phase spans {span / (2 * np.pi):.4g} waves")
    theta_bar = np.clip((theta - theta[0]) / span, 0.0, 1.0)
    theta_bar[0], theta_bar[-1] = 0.0, 1.0
    return PhaseFunction(t=t, theta=theta, theta_bar=theta_bar, l_theta=span / (2.0 * np.pi))


@dataclass(frozen=True)
class ThetaSpaceConfig:
    """Resampling and filtering settings for theta-space operations.

    Attributes
    ----------
    lam : float
        Smoothness parameter lambda in [0, 1/2].
    resample_points : int or None
        Number of uniform theta_bar samples. ``None`` selects the next power
        of two at or above four times the input length.
    interpolation : {"not-a-knot", "natural", "linear"}
        Method for t <-> theta_bar resampling.
    envelope : {"sharp", "raised_cosine"}
        Cutoff shape used by :func:`envelope_solve`.
    refine : int
        Maximum correction sweeps for the sharp envelope solve.
    refine_tol : float
        Relative update size that ends the correction sweeps.
    """

    lam: float = 0.5
    resample_points: int | None = None
    interpolation: str = "not-a-knot"
    envelope: str = "sharp"
    refine: int = 8
    refine_tol: float = 1e-10

    def __post_init__(self):
        if not 0.0 <= self.lam <= 0.5:
            raise ValueError(f"lambda must lie in [0, 1/2], got {self.lam}")
        if self.resample_points is not None and self.resample_points < 4:
            raise ValueError("resample_points must be at least 4")
        if self.interpolation not in ("not-a-knot", "natural", "linear"):
            raise ValueError(f"unknown interpolation {self.interpolation!r}")
        if self.envelope not in ("sharp", "raised_cosine"):
            raise ValueError(f"unknown envelope cutoff {self.envelope!r}")
        if self.refine < 0:
            raise ValueError("refine must be non-negative")


@dataclass(frozen=True)
class EnvelopePair:
    """In-phase and quadrature envelopes on the time grid."""

    a: np.ndarray
    b: np.ndarray
    cutoff: int = field(default=0)

    @property
    def amplitude(self) -> np.ndarray:
        return np.hypot(self.a, self.b)


def resample_points_for(n: int, cfg: ThetaSpaceConfig) -> int:
    if cfg.resample_points is not None:
        if cfg.resample_points < n:
            raise ValueError(f"resample_points={cfg.resample_points} is below the input length {n}")
        return int(cfg.resample_points)
    return 1 << int(np.ceil(np.log2(4 * n)))


def theta_grid(npoints: int) -> np.ndarray:
    """Uniform theta_bar grid on [0, 1], endpoints included."""
    return np.linspace(0.0, 1.0, npoints)


def _strict_knots(u: np.ndarray) -> np.ndarray:
    """Indices of a strictly increasing subsequence of a non-decreasing ``u``."""
    keep = np.concatenate(([True], np.diff(u) > _KNOT_TOL))
    if not keep[-1]:
        last = np.flatnonzero(keep)[-1]
        if last > 0:
            keep[last] = False
        keep[-1] = True
    return np.flatnonzero(keep)


def _interp(x: np.ndarray, y: np.ndarray, xq: np.ndarray, method: str) -> np.ndarray:
    if method == "linear":
        if y.ndim == 1:
            return np.interp(xq, x, y)
        return np.stack([np.interp(xq, x, y[:, j]) for j in range(y.shape[1])], axis=1)
    if x.shape[0] < 4:
        return make_interp_spline(x, y, k=1, axis=0)(xq)
    return CubicSpline(x, y, axis=0, bc_type=method)(xq)


def to_theta_coordinates(x, phase: PhaseFunction, cfg: ThetaSpaceConfig | None = None,
                         npoints: int | None = None) -> np.ndarray:
    """Resample time-grid samples onto a uniform theta_bar grid.

    Parameters
    ----------
    x : array_like
        Samples on ``phase.t``; a trailing axis of channels is allowed.
    phase : PhaseFunction
    cfg : ThetaSpaceConfig, optional
    npoints : int, optional
        Overrides the configured number of theta_bar samples.

    Returns
    -------
    ndarray
        Values on ``theta_grid(npoints)``.
    """
    cfg = cfg or ThetaSpaceConfig()
    x = np.asarray(x, dtype=float)
    if x.shape[0] != phase.n:
        raise LengthMismatch(f"signal has {x.shape[0]} samples, phase has {phase.n}")
    npoints = npoints or resample_points_for(phase.n, cfg)
    idx = _strict_knots(phase.theta_bar)
    return _interp(phase.theta_bar[idx], x[idx], theta_grid(npoints), cfg.interpolation)


def from_theta_coordinates(f, phase: PhaseFunction, cfg: ThetaSpaceConfig | None = None) -> np.ndarray:
    """Evaluate uniform theta_bar samples back on the time grid of ``phase``."""
    cfg = cfg or ThetaSpaceConfig()
    f = np.asarray(f)
    g = theta_grid(f.shape[0])
    if np.iscomplexobj(f):
        re = _interp(g, f.real, phase.theta_bar, cfg.interpolation)
        im = _interp(g, f.imag, phase.theta_bar, cfg.interpolation)
        return re + 1j * im
    return _interp(g, f, phase.theta_bar, cfg.interpolation)


def _dct_project(f: np.ndarray, K: int, taper: np.ndarray | None = None) -> np.ndarray:
    c = dct(f, type=1, axis=0)
    c[K + 1:] = 0.0
    if taper is not None:
        c[: K + 1] *= taper.reshape((-1,) + (1,) * (c.ndim - 1))
    return idct(c, type=1, axis=0)


def project_to_V(f, l_theta_floor: int, lam: float) -> np.ndarray:
    """Orthogonal projection of theta_bar samples onto V(theta, lambda).

    Parameters
    ----------
    f : array_like
        Samples on a uniform theta_bar grid (endpoints included), real or
        complex, with an optional trailing channel axis.
    l_theta_floor : int
        Integer wave count ``floor(L_theta)``, at least one.
    lam : float
        Smoothness parameter in [0, 1/2].

    Returns
    -------
    ndarray
        Projection retaining half-frequency indices ``k <= 2 lambda floor(L)``.

    Notes
    -----
    The cut is sharp, so the map is exactly idempotent and has unit gain on
    every retained mode including the edge index. Coefficients are those of
    the even extension of ``f``, so the retained space is spanned by
    ``cos(k pi theta_bar)``; the matching sine modes are represented through
    that extension.
    """
    if not 0.0 <= lam <= 0.5:
        raise ValueError(f"lambda must lie in [0, 1/2], got {lam}")
    if l_theta_floor < 1:
        raise ValueError("l_theta_floor must be at least 1")
    f = np.asarray(f)
    if not np.iscomplexobj(f):
        f = f.astype(float)
    return _dct_project(f, cutoff_index(l_theta_floor, lam))


def project_on_phase(x, phase: PhaseFunction, lam: float, cfg: ThetaSpaceConfig | None = None) -> np.ndarray:
    """Project time-grid samples onto V(theta, lambda) and return them on the time grid."""
    cfg = cfg or ThetaSpaceConfig()
    xg = to_theta_coordinates(x, phase, cfg)
    return from_theta_coordinates(project_to_V(xg, max(phase.l_floor, 1), lam), phase, cfg)


def raised_cosine_taper(K: int) -> np.ndarray:
    """Gains ``(1 + cos(pi k / (K + 1))) / 2`` for ``k = 0..K``."""
    k = np.arange(K + 1)
    return 0.5 * (1.0 + np.cos(np.pi * k / (K + 1)))


def envelope_solve(x, phase: PhaseFunction, lam: float, cfg: ThetaSpaceConfig | None = None) -> EnvelopePair:
    """Least-squares envelopes ``x ~ a cos(theta) + b sin(theta)`` with a, b in V.

    The signal is resampled to theta_bar, demodulated by ``exp(-i theta)``
    (a shift of the theta-space spectrum by L_theta), low-passed, and
    interpolated back to the time grid. With the sharp cutoff a few
    correction sweeps remove the image term left by the single pass, which
    drives the result to the constrained least-squares solution.

    Parameters
    ----------
    x : array_like
        Signal on ``phase.t``.
    phase : PhaseFunction
    lam : float
        Smoothness parameter in [0, 1/2].
    cfg : ThetaSpaceConfig, optional

    Returns
    -------
    EnvelopePair
    """
    cfg = cfg or ThetaSpaceConfig()
    if not 0.0 <= lam <= 0.5:
        raise ValueError(f"lambda must lie in [0, 1/2], got {lam}")
    x = np.asarray(x, dtype=float)
    if x.shape[0] != phase.n:
        raise LengthMismatch(f"signal has {x.shape[0]} samples, phase has {phase.n}")
    N = resample_points_for(phase.n, cfg)
    K = cutoff_index(max(phase.l_floor, 1), lam)
    xg = to_theta_coordinates(x, phase, cfg, N)
    psi = phase.theta[0] + 2.0 * np.pi * phase.l_theta * theta_grid(N)
    demod = np.exp(-1j * psi)

    if cfg.envelope == "raised_cosine":
        e = 2.0 * _dct_project(xg * demod, K, raised_cosine_taper(K))
    else:
        e = 2.0 * _dct_project(xg * demod, K)
        scale = np.linalg.norm(e)
        for _ in range(cfg.refine):
            r = xg - np.real(e * np.conj(demod))
            de = 2.0 * _dct_project(r * demod, K)
            e = e + de
            if np.linalg.norm(de) <= cfg.refine_tol * max(scale, np.finfo(float).tiny):
                break
    ab = from_theta_coordinates(np.stack([e.real, -e.imag], axis=1), phase, cfg)
    return EnvelopePair(a=ab[:, 0], b=ab[:, 1], cutoff=K)
