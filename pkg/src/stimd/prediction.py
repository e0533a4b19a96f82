"""Future-state prediction from the phase dynamics of a mode.

A mode's rate is modelled as a function of its own phase,
``theta'(theta) = alpha0 + sum_k beta_k cos(k theta / 2L) + gamma_k sin(k theta / 2L)``,
and the implicit equation ``d theta / dt = theta'(theta)`` is integrated with
classical RK4. Beyond the fitted phase span the series is evaluated on the
mirror fold of the span, which is periodic with period ``4 pi L`` like the
half-frequency basis itself.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import NonPositiveRate
from .nmp import ImfComponent, imf_from_phase
from .theta_space import (
    ThetaSpaceConfig,
    cutoff_index,
    normalize_phase,
    resample_points_for,
    theta_grid,
    to_theta_coordinates,
)

__all__ = ["PhaseDynamicsModel", "fit_phase_dynamics", "predict", "rk4_integrate", "fold"]

_RATE_FLOOR = 1e-9
_CLIP_FRACTION = 0.01
_SINE_RIDGE = 1e-6


def fold(u) -> np.ndarray:
    """Reflect normalized phase into [0, 1] (a triangle wave of period 2)."""
    u = np.mod(np.asarray(u, dtype=float), 2.0)
    return np.where(u > 1.0, 2.0 - u, u)


def _basis(u: np.ndarray, K: int) -> np.ndarray:
    k = np.arange(1, K + 1)
    arg = np.pi * np.outer(u, k)
    return np.hstack([np.ones((u.shape[0], 1)), np.cos(arg), np.sin(arg)])


def _absolute(coef: np.ndarray, K: int, theta0: float, l_theta: float):
    """Convert coefficients in ``k pi theta_bar`` to the absolute ``k theta / 2L`` form."""
    c, s = coef[1:K + 1], coef[K + 1:]
    shift = np.arange(1, K + 1) * theta0 / (2.0 * l_theta)
    beta = c * np.cos(shift) - s * np.sin(shift)
    gamma = c * np.sin(shift) + s * np.cos(shift)
    return float(coef[0]), beta, gamma


@dataclass(frozen=True)
class PhaseDynamicsModel:
    """Fitted rate and amplitude series of one mode.

    Attributes
    ----------
    alpha0 : float
        Mean rate term in rad/s.
    beta, gamma : ndarray
        Cosine and sine coefficients of ``k theta / 2L``, in rad/s.
    l_theta : float
        Wave count of the fitted span.
    amplitude_coeffs : tuple of (float, ndarray, ndarray)
        The same expansion for the amplitude ``a(theta)``.
    theta_start, theta_end : float
        Phase at the first and last fitted samples.
    t_start, t_end : float
        Time of the first and last fitted samples.
    dt : float
        Sample spacing of the fitted mode.
    rate_residual : float
        Relative RMS misfit of the rate series at the fitted samples.
    fit_residual : float
        Open-loop signal misfit: relative l2 error of
        ``a_model(theta) cos(theta + e)`` against the fitted mode, where ``e``
        integrates the modelled rate along the fitted phase minus the actual
        phase advance.
    """

    alpha0: float
    beta: np.ndarray
    gamma: np.ndarray
    l_theta: float
    amplitude_coeffs: tuple
    theta_start: float
    theta_end: float
    t_start: float
    t_end: float
    dt: float
    rate_residual: float = 0.0
    fit_residual: float = 0.0

    @property
    def order(self) -> int:
        return len(self.beta)

    def _series(self, coeffs, theta) -> np.ndarray:
        a0, b, g = coeffs
        u = fold((np.asarray(theta, dtype=float) - self.theta_start) / (self.theta_end - self.theta_start))
        # Fold in normalized phase, then return to the absolute phase frame.
        th = self.theta_start + u * (self.theta_end - self.theta_start)
        k = np.arange(1, len(b) + 1)
        arg = np.multiply.outer(th, k) / (2.0 * self.l_theta)
        return a0 + np.cos(arg) @ b + np.sin(arg) @ g

    def rate(self, theta) -> np.ndarray:
        """Modelled ``theta'(theta)`` in rad/s."""
        return self._series((self.alpha0, self.beta, self.gamma), theta)

    def amplitude(self, theta) -> np.ndarray:
        """Modelled amplitude ``a(theta)``, floored at zero."""
        return np.maximum(self._series(self.amplitude_coeffs, theta), 0.0)


def _fit_series(values_on_grid: np.ndarray, K: int) -> np.ndarray:
    """Least squares in the half-frequency cosine and sine modes.

    Cosines and sines together are redundant on one span, so the sine block
    carries a small ridge penalty. The cosine block alone is well
    conditioned, which keeps ``alpha0`` near the mean rate and makes pure
    tones come out with zero harmonics; the sines only absorb what the even
    cosine series cannot, such as nonzero end slopes of the rate.
    """
    N = values_on_grid.shape[0]
    A = _basis(theta_grid(N), K)
    penalty = np.zeros((2 * K + 1, 2 * K + 1))
    penalty[K + 1:, K + 1:] = np.sqrt(_SINE_RIDGE * N) * np.eye(K)
    coef, *_ = np.linalg.lstsq(np.vstack([A, penalty]), np.r_[values_on_grid, np.zeros(2 * K + 1)], rcond=None)
    return coef


def fit_phase_dynamics(imf: ImfComponent, cfg: ThetaSpaceConfig | None = None) -> PhaseDynamicsModel:
    """Fit the rate and amplitude of ``imf`` as series in its own phase.

    The rate ``d theta / dt`` is taken by central differences, resampled to
    a uniform normalized-phase grid, and fitted by least squares in the
    half-frequency cosine and sine modes up to index ``floor(L)``. The
    amplitude is fitted the same way.

    Raises
    ------
    NonPositiveRate
        If the fitted rate is not positive everywhere on the fit grid.
    ValueError
        If the mode spans fewer than two waves.
    """
    cfg = cfg or ThetaSpaceConfig()
    phase = imf.theta
    if phase.l_theta < 2.0:
        raise ValueError(f"need at least 2 waves to fit phase dynamics, got {phase.l_theta:.3g}")
    K = cutoff_index(phase.l_floor, 0.5)
    N = resample_points_for(phase.n, cfg)
    rate_t = np.gradient(phase.theta, phase.t)
    rate_g = to_theta_coordinates(rate_t, phase, cfg, N)
    amp_g = to_theta_coordinates(imf.a, phase, cfg, N)
    rc = _fit_series(rate_g, K)
    ac = _fit_series(amp_g, K)
    fitted = _basis(theta_grid(N), K) @ rc
    if np.any(fitted <= 0):
        raise NonPositiveRate(f"fitted rate reaches {fitted.min():.4g} rad/s")
    th0, th1 = float(phase.theta[0]), float(phase.theta[-1])
    alpha0, beta, gamma = _absolute(rc, K, th0, phase.l_theta)
    model = PhaseDynamicsModel(alpha0=alpha0, beta=beta, gamma=gamma, l_theta=phase.l_theta,
                               amplitude_coeffs=_absolute(ac, K, th0, phase.l_theta), theta_start=th0,
                               theta_end=th1, t_start=float(phase.t[0]), t_end=float(phase.t[-1]),
                               dt=float(phase.t[1] - phase.t[0]))
    rate_model = model.rate(phase.theta)
    rate_misfit = float(np.sqrt(np.mean((rate_model - rate_t) ** 2) / np.mean(rate_t ** 2)))
    drift = cumulative_trapezoid(rate_model, phase.t, initial=0.0) - (phase.theta - phase.theta[0])
    s_open = model.amplitude(phase.theta) * np.cos(phase.theta + drift)
    norm = max(float(np.linalg.norm(imf.s)), np.finfo(float).tiny)
    misfit = float(np.linalg.norm(s_open - imf.s)) / norm
    return replace(model, rate_residual=rate_misfit, fit_residual=misfit)


def rk4_integrate(rate, theta0: float, t: np.ndarray) -> np.ndarray:
    """Integrate ``d theta / dt = rate(theta)`` over the grid ``t`` with classical RK4."""
    theta = np.empty(t.shape[0])
    theta[0] = theta0
    for j in range(t.shape[0] - 1):
        h = t[j + 1] - t[j]
        y = theta[j]
        k1 = rate(y)
        k2 = rate(y + 0.5 * h * k1)
        k3 = rate(y + 0.5 * h * k2)
        k4 = rate(y + h * k3)
        theta[j + 1] = y + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
    return theta


@dataclass(frozen=True)
class Prediction:
    imf: ImfComponent
    clipped: bool


def predict(model: PhaseDynamicsModel, horizon: float, dt: float | None = None, origin: str = "end",
            return_info: bool = False):
    """Continue a fitted mode over ``horizon`` seconds.

    Parameters
    ----------
    model : PhaseDynamicsModel
    horizon : float
        Length of the prediction window, positive.
    dt : float, optional
        Integration and output step; defaults to the fitted sample spacing.
    origin : {"end", "start"}
        Integrate from the last fitted sample (forecast) or from the first
        (replay of the fitted span).
    return_info : bool
        Also report whether the rate floor of ``0.01 alpha0`` was applied.

    Returns
    -------
    ImfComponent or Prediction
        The predicted mode on ``t0 + dt * arange(round(horizon / dt) + 1)``.

    Raises
    ------
    NonPositiveRate
        If the modelled rate falls below 1e-9 rad/s during integration.
    """
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    dt = model.dt if dt is None else float(dt)
    if not dt > 0:
        raise ValueError("dt must be positive")
    if origin == "end":
        t0, th0 = model.t_end, model.theta_end
    elif origin == "start":
        t0, th0 = model.t_start, model.theta_start
    else:
        raise ValueError(f"origin must be 'end' or 'start', got {origin!r}")
    steps = max(1, int(round(horizon / dt)))
    t = t0 + dt * np.arange(steps + 1)
    floor = _CLIP_FRACTION * abs(model.alpha0)
    clipped = False

    def rate(theta):
        nonlocal clipped
        r = float(model.rate(np.array([theta]))[0])
        if r < _RATE_FLOOR:
            raise NonPositiveRate(f"modelled rate {r:.4g} rad/s at theta={theta:.6g}")
        if r < floor:
            clipped = True
            return floor
        return r

    theta = rk4_integrate(rate, th0, t)
    phase = normalize_phase(theta, t, min_waves=1e-12)
    imf = imf_from_phase(model.amplitude(theta), phase)
    return Prediction(imf, clipped) if return_info else imf
