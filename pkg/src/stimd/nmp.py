"""Nonlinear matching pursuit: extract one IMF from a scalar signal.

Starting from a phase guess, the envelopes ``a, b`` of
``x ~ a cos(theta) + b sin(theta)`` are solved in V(theta, eta), the phase
error ``arctan(b / a)`` is differentiated, smoothed in the same space,
integrated and subtracted from theta. The smoothness ``eta`` is raised from
zero to ``lambda_final`` so that early stages fit the carrier and later stages
admit amplitude and frequency modulation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import DegeneratePhase, InvalidGuess, LengthMismatch, NonMonotonePhase, PhaseCollapse
from .theta_space import (
    PhaseFunction,
    ThetaSpaceConfig,
    envelope_solve,
    normalize_phase,
    project_on_phase,
)

__all__ = ["NmpConfig", "ImfComponent", "nmp_extract", "line_search", "eta_schedule", "imf_from_phase"]

# Fraction of the exact feasible step kept by the line search, so the
# updated phase stays strictly increasing wherever it was before.
_STEP_MARGIN = 1e-3


@dataclass(frozen=True)
class NmpConfig:
    """Settings for :func:`nmp_extract`.

    Attributes
    ----------
    lambda_final : float
        Final smoothness of the envelope space, at most 1/2.
    eta_step : float
        Increment of the continuation parameter.
    inner_tol : float
        Relative phase change that ends an inner loop.
    max_inner_iters : int
        Iteration cap per continuation stage.
    noise_slack : float
        Residual norm below which the continuation stops early; 0 disables.
    max_stall : int
        Consecutive zero steps tolerated before raising PhaseCollapse.
    eta_starts : tuple of float
        Starting values of the continuation. Each start runs a separate
        pass from the same guess and the pass with the smallest final
        residual is returned. Starting above zero recovers carriers whose
        frequency modulation is too deep for the low-pass phase estimate
        at small eta.
    theta : ThetaSpaceConfig
        Resampling and projection settings.
    """

    lambda_final: float = 0.5
    eta_step: float = 0.1
    inner_tol: float = 1e-6
    max_inner_iters: int = 200
    noise_slack: float = 0.0
    max_stall: int = 5
    eta_starts: tuple = (0.0, 0.2)
    theta: ThetaSpaceConfig = field(default_factory=ThetaSpaceConfig)

    def __post_init__(self):
        if not 0.0 < self.eta_step <= self.lambda_final <= 0.5:
            raise ValueError("require 0 < eta_step <= lambda_final <= 1/2")
        if self.inner_tol <= 0:
            raise ValueError("inner_tol must be positive")
        if self.max_inner_iters < 1:
            raise ValueError("max_inner_iters must be at least 1")
        if self.noise_slack < 0:
            raise ValueError("noise_slack must be non-negative")
        if self.max_stall < 1:
            raise ValueError("max_stall must be at least 1")
        if not self.eta_starts or any(not 0.0 <= e <= self.lambda_final for e in self.eta_starts):
            raise ValueError("eta_starts must be non-empty values in [0, lambda_final]")


@dataclass(frozen=True)
class ImfComponent:
    """One intrinsic mode ``s = a cos(theta)``.

    Attributes
    ----------
    a : ndarray
        Non-negative amplitude samples.
    theta : PhaseFunction
    s : ndarray
        Signal samples.
    converged : bool
    iterations : int
        Total inner iterations across all stages.
    stage_residuals : tuple of float
        Fit residual norm at the end of each continuation stage.
    """

    a: np.ndarray
    theta: PhaseFunction
    s: np.ndarray
    converged: bool
    iterations: int
    stage_residuals: tuple = ()

    @property
    def t(self) -> np.ndarray:
        return self.theta.t


def imf_from_phase(a, phase: PhaseFunction, converged: bool = True, iterations: int = 0,
                   stage_residuals: tuple = ()) -> ImfComponent:
    """Assemble an :class:`ImfComponent` with ``s = a cos(theta)``."""
    a = np.asarray(a, dtype=float)
    return ImfComponent(a=a, theta=phase, s=a * np.cos(phase.theta), converged=converged,
                        iterations=iterations, stage_residuals=tuple(stage_residuals))


def eta_schedule(cfg: NmpConfig, start: float = 0.0) -> np.ndarray:
    """Continuation values ``0, eta_step, ...`` from ``start``, ending exactly at ``lambda_final``."""
    n = int(np.floor(cfg.lambda_final / cfg.eta_step + 1e-9))
    etas = np.round(np.arange(n + 1) * cfg.eta_step, 12)
    etas = etas[etas >= start - 1e-12]
    if etas.size == 0 or etas[-1] < cfg.lambda_final - 1e-12:
        etas = np.append(etas, cfg.lambda_final)
    return etas


def line_search(theta: np.ndarray, delta: np.ndarray) -> float:
    """Largest step keeping ``theta - beta * delta`` non-decreasing.

    The exact bound ``min(diff(theta) / diff(delta))`` over increasing steps
    of ``delta`` is computed in closed form. When it is below one it is
    shrunk by a relative margin of 1e-3 so strictly increasing samples stay
    strictly increasing.

    Returns
    -------
    float
        Step in [0, 1].
    """
    dth = np.diff(theta)
    dd = np.diff(delta)
    grow = dd > 0
    if not np.any(grow):
        return 1.0
    bound = float(np.min(np.maximum(dth[grow], 0.0) / dd[grow]))
    if bound >= 1.0:
        return 1.0
    return max(bound * (1.0 - _STEP_MARGIN), 0.0)


def _phase(theta: np.ndarray, t: np.ndarray) -> PhaseFunction:
    try:
        return normalize_phase(theta, t, min_waves=1e-9)
    except (DegeneratePhase, NonMonotonePhase) as exc:
        raise PhaseCollapse(f"phase iterate became invalid: {exc}") from exc


def nmp_extract(x, theta0, cfg: NmpConfig | None = None, t=None, callback=None) -> ImfComponent:
    """Extract the IMF of ``x`` closest to the phase guess ``theta0``.

    Parameters
    ----------
    x : array_like
        Signal samples on a uniform grid.
    theta0 : array_like or PhaseFunction
        Initial phase; must be non-decreasing and span at least one wave.
    cfg : NmpConfig, optional
    t : array_like, optional
        Time grid. Taken from ``theta0`` when it is a PhaseFunction, else
        defaults to ``linspace(0, 1, n)``.
    callback : callable, optional
        Called as ``callback(theta, eta)`` after every phase update.

    Returns
    -------
    ImfComponent

    Raises
    ------
    InvalidGuess
        If ``theta0`` is not a valid phase.
    PhaseCollapse
        If the line search returns a zero step ``max_stall`` times in a row.
    """
    cfg = cfg or NmpConfig()
    x = np.asarray(x, dtype=float)
    if isinstance(theta0, PhaseFunction):
        t = theta0.t if t is None else np.asarray(t, dtype=float)
        theta0 = theta0.theta
    theta0 = np.asarray(theta0, dtype=float)
    if t is None:
        t = np.linspace(0.0, 1.0, theta0.shape[0])
    t = np.asarray(t, dtype=float)
    if x.shape != theta0.shape:
        raise LengthMismatch(f"signal has {x.shape} samples, guess has {theta0.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("signal contains non-finite samples")
    try:
        phase = normalize_phase(theta0, t)
    except (DegeneratePhase, NonMonotonePhase, LengthMismatch) as exc:
        raise InvalidGuess(str(exc)) from exc

    best, failure = None, None
    for start in cfg.eta_starts:
        try:
            imf, res = _continuation(x, phase, eta_schedule(cfg, start), cfg, callback)
        except PhaseCollapse as exc:
            failure = exc
            continue
        if best is None or res < best[1]:
            best = (imf, res)
    if best is None:
        raise failure
    return best[0]


def _continuation(x: np.ndarray, phase: PhaseFunction, etas: np.ndarray, cfg: NmpConfig, callback=None):
    """One pass of the eta continuation; returns the mode and its fit residual norm."""
    tcfg = cfg.theta
    t = phase.t
    theta = phase.theta.copy()
    iterations = 0
    stall = 0
    stage_res = []
    converged = False
    for eta in etas:
        converged = False
        res = np.inf
        for _ in range(cfg.max_inner_iters):
            env = envelope_solve(x, phase, eta, tcfg)
            a, b = env.a, env.b
            res = float(np.linalg.norm(x - a * np.cos(theta) - b * np.sin(theta)))
            if cfg.noise_slack > 0 and res <= cfg.noise_slack:
                converged = True
                break
            err = np.unwrap(np.arctan2(b, a))
            derr = project_on_phase(np.gradient(err, t), phase, eta, tcfg)
            delta = cumulative_trapezoid(derr, t, initial=0.0)
            # Fix the integration constant so the correction also removes a
            # constant phase offset; the weights follow the envelope energy.
            w = a * a + b * b
            wsum = float(np.sum(w))
            if wsum > 0:
                delta += np.sum(w * (err - delta)) / wsum
            beta = line_search(theta, delta)
            stall = stall + 1 if beta == 0.0 else 0
            if stall >= cfg.max_stall:
                raise PhaseCollapse(f"zero line-search step {stall} times in a row at eta={eta:g}")
            new = np.maximum.accumulate(theta - beta * delta)
            change = np.linalg.norm(new - theta) / max(np.linalg.norm(theta - theta[0]), np.finfo(float).tiny)
            theta = new
            phase = _phase(theta, t)
            iterations += 1
            if callback is not None:
                callback(theta, float(eta))
            if change < cfg.inner_tol:
                converged = True
                break
        stage_res.append(res)
        if cfg.noise_slack > 0 and res <= cfg.noise_slack:
            break

    env = envelope_solve(x, phase, cfg.lambda_final, tcfg)
    imf = imf_from_phase(env.amplitude, phase, converged, iterations, stage_res)
    return imf, float(np.linalg.norm(x - imf.s))
