"""Spatiotemporal decomposition by projection pursuit with deflation.

For each phase guess a unit direction ``w`` is sought such that ``w^T R`` is
an IMF, by minimizing ``||w NMP(w^T R) - R||_F^2`` on the unit sphere. The
mode ``b s^T`` is then subtracted from the residual and the next guess is
processed. Guess order sets extraction order.

A greedy pass leaves later modes inside the residual seen by earlier ones
whenever the mixing directions are not orthogonal. Backfitting sweeps then
re-solve each mode against ``X`` minus every other current mode, which is
block coordinate descent on the joint fit ``||X - sum_i b_i s_i^T||_F``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .baselines import dominant_frequency, fastica_factorize
from .errors import DegeneratePhase, GuessGridMismatch, InvalidGuess, NoDescent, NonMonotonePhase, ShapeMismatch
from .nmp import ImfComponent, NmpConfig, imf_from_phase, nmp_extract
from .signals import SignalMatrix
from .theta_space import PhaseFunction, normalize_phase

__all__ = [
    "StimdConfig",
    "MixingMatrix",
    "ModeDiagnostics",
    "SphereResult",
    "DecompositionResult",
    "sphere_minimize",
    "stimd_decompose",
    "reconstruct",
    "as_phase",
]


@dataclass(frozen=True)
class StimdConfig:
    """Settings for :func:`stimd_decompose`.

    Attributes
    ----------
    nmp : NmpConfig
        Mode extraction settings. The default final smoothness is 0.3,
        below the single-signal default of 1/2: a wider envelope band lets
        a mode absorb spectrally neighbouring sources, which leaves the
        spatial direction poorly determined for non-orthogonal mixing.
    max_alternations : int
        Cap on alternations between the direction and the mode.
    w_tol : float
        Direction change, after sign alignment, that ends the alternation.
    patience : int
        Alternations without improvement of the best objective that end
        the search early. 0 disables.
    init : {"ica", "svd", "random"}
        Source of the starting direction.
    seed : int
        Seed for ICA and the random fallback.
    warm_start : bool
        Start each NMP call after the first from the previous
        alternation's phase, running only the final continuation stage.
    backfit_sweeps : int
        Passes that re-solve every mode against ``X`` minus all other
        current modes after the greedy deflation pass.
    backfit_tol : float
        Relative change of all modes below which backfitting stops.
    strict : bool
        Raise :class:`NoDescent` instead of flagging it.
    """

    nmp: NmpConfig = field(default_factory=lambda: NmpConfig(lambda_final=0.3))
    max_alternations: int = 50
    w_tol: float = 1e-6
    patience: int = 5
    init: str = "ica"
    seed: int = 0
    warm_start: bool = True
    backfit_sweeps: int = 3
    backfit_tol: float = 1e-3
    strict: bool = False

    def __post_init__(self):
        if self.max_alternations < 1:
            raise ValueError("max_alternations must be at least 1")
        if self.w_tol <= 0:
            raise ValueError("w_tol must be positive")
        if self.patience < 0:
            raise ValueError("patience must be non-negative")
        if self.backfit_sweeps < 0:
            raise ValueError("backfit_sweeps must be non-negative")
        if self.init not in ("ica", "svd", "random"):
            raise ValueError(f"unknown init {self.init!r}")


@dataclass(frozen=True)
class MixingMatrix:
    """Unit-norm spatial directions stored as the columns of an m-by-r array."""

    columns: np.ndarray

    def __post_init__(self):
        cols = np.asarray(self.columns, dtype=float)
        if cols.ndim != 2:
            raise ShapeMismatch("mixing matrix must be 2-D")
        norms = np.linalg.norm(cols, axis=0)
        if np.any(np.abs(norms - 1.0) > 1e-10):
            raise ValueError("mixing columns must have unit norm")
        object.__setattr__(self, "columns", cols)

    @property
    def matrix(self) -> np.ndarray:
        return self.columns

    def __len__(self) -> int:
        return self.columns.shape[1]


@dataclass(frozen=True)
class ModeDiagnostics:
    objective: float
    initial_objective: float
    alternations: int
    converged: bool
    nmp_converged: bool
    direction_converged: bool
    no_descent: bool
    init: str
    history: tuple = ()


@dataclass(frozen=True)
class SphereResult:
    w: np.ndarray
    imf: ImfComponent
    objective: float
    diagnostics: ModeDiagnostics


@dataclass(frozen=True)
class DecompositionResult:
    """Mixing directions, temporal modes and the final residual.

    Attributes
    ----------
    mixing : MixingMatrix
    modes : list of ImfComponent
    residual : SignalMatrix
    per_mode_objective : list of float
    guesses_used : list of ndarray
    diagnostics : list of ModeDiagnostics
    """

    mixing: MixingMatrix
    modes: list
    residual: SignalMatrix
    per_mode_objective: list
    guesses_used: list
    diagnostics: list = field(default_factory=list)
    x_norm: float = 0.0

    @property
    def B(self) -> np.ndarray:
        return self.mixing.columns

    @property
    def S(self) -> np.ndarray:
        return np.stack([m.s for m in self.modes])

    @property
    def converged(self) -> bool:
        return all(d.converged for d in self.diagnostics)

    @property
    def residual_fraction(self) -> float:
        """``||R_r||_F / ||X||_F``."""
        return self.residual.frobenius() / self.x_norm if self.x_norm > 0 else 0.0


def as_phase(guess, t: np.ndarray) -> PhaseFunction:
    """Validate a phase guess against a time grid."""
    if isinstance(guess, PhaseFunction):
        if guess.n != t.shape[0] or not np.allclose(guess.t, t, rtol=0, atol=1e-9 * max(1.0, np.abs(t).max())):
            raise GuessGridMismatch("guess phase is sampled on a different time grid")
        guess = guess.theta
    theta = np.asarray(guess, dtype=float)
    if theta.shape != t.shape:
        raise GuessGridMismatch(f"guess has shape {theta.shape}, grid has {t.shape[0]} samples")
    try:
        return normalize_phase(theta, t)
    except (NonMonotonePhase, DegeneratePhase) as exc:
        raise InvalidGuess(str(exc)) from exc


def _sign_align(w: np.ndarray, ref: np.ndarray) -> np.ndarray:
    return -w if float(w @ ref) < 0 else w


def _objective(R: np.ndarray, w: np.ndarray, s: np.ndarray) -> float:
    return float(np.linalg.norm(R - np.outer(w, s)) ** 2)


def _start_direction(R: np.ndarray, w0, seed: int):
    if w0 is not None:
        w0 = np.asarray(w0, dtype=float)
        nrm = np.linalg.norm(w0)
        if nrm > 0 and np.isfinite(nrm):
            return w0 / nrm, "given"
    U, s, _ = np.linalg.svd(R, full_matrices=False)
    if s[0] > 0:
        return U[:, 0].copy(), "svd"
    w = np.random.default_rng(seed).standard_normal(R.shape[0])
    return w / np.linalg.norm(w), "random"


def sphere_minimize(R, theta0, cfg: StimdConfig | None = None, w0=None, warm: bool = False) -> SphereResult:
    """Minimize ``||w NMP(w^T R) - R||_F^2`` over unit vectors ``w``.

    Alternates ``s = NMP(w^T R)`` with the sphere-optimal direction for the
    fixed mode, ``w = R s / ||R s||``, and returns the best pair seen.

    Parameters
    ----------
    R : SignalMatrix or array_like, shape (m, n)
    theta0 : array_like or PhaseFunction
        Phase guess on the grid of ``R``.
    cfg : StimdConfig, optional
    w0 : array_like, optional
        Starting direction. Defaults to the leading left singular vector.
    warm : bool
        Treat ``theta0`` as an already converged phase, so every NMP call
        runs only the final continuation stage.

    Returns
    -------
    SphereResult
    """
    cfg = cfg or StimdConfig()
    Rm = R if isinstance(R, SignalMatrix) else SignalMatrix(R)
    data, t = Rm.data, Rm.t
    phase0 = as_phase(theta0, t)
    r_norm2 = float(np.sum(data * data))
    if r_norm2 == 0:
        raise ValueError("residual is identically zero")
    w, init = _start_direction(data, w0, cfg.seed)

    refine_cfg = replace(cfg.nmp, eta_starts=(cfg.nmp.lambda_final,))
    theta_start = phase0
    best = None
    history = []
    done = False
    stale = 0
    for k in range(cfg.max_alternations):
        ncfg = refine_cfg if warm or (cfg.warm_start and k > 0) else cfg.nmp
        imf = nmp_extract(w @ data, theta_start, ncfg)
        obj = _objective(data, w, imf.s)
        history.append(obj)
        if best is None or obj < best[2] * (1.0 - 1e-12):
            best = (w, imf, obj)
            stale = 0
        else:
            stale += 1
        if cfg.warm_start:
            theta_start = imf.theta
        rs = data @ imf.s
        nrm = np.linalg.norm(rs)
        if nrm == 0:
            break
        w_new = _sign_align(rs / nrm, w)
        step = float(np.linalg.norm(w_new - w))
        w = w_new
        if step < cfg.w_tol:
            done = True
            break
        if cfg.patience and stale >= cfg.patience:
            break

    w, imf, obj = best
    no_descent = obj >= r_norm2
    if no_descent and cfg.strict:
        raise NoDescent(f"objective {obj:.6g} did not drop below the initial value {r_norm2:.6g}")
    diag = ModeDiagnostics(objective=obj, initial_objective=r_norm2, alternations=len(history),
                           converged=bool(done and imf.converged and not no_descent), nmp_converged=imf.converged,
                           direction_converged=done, no_descent=bool(no_descent), init=init, history=tuple(history))
    return SphereResult(w=w, imf=imf, objective=obj, diagnostics=diag)


def _flip(imf: ImfComponent) -> ImfComponent:
    """The same mode with its sign reversed, carried by a phase shift of pi."""
    phase = normalize_phase(imf.theta.theta + np.pi, imf.theta.t)
    return imf_from_phase(imf.a, phase, imf.converged, imf.iterations, imf.stage_residuals)


def _ica_starts(X: SignalMatrix, phases, cfg: StimdConfig):
    """Starting directions from ICA columns matched to guess frequencies."""
    r = min(len(phases), X.m)
    try:
        fac = fastica_factorize(X, r, seed=cfg.seed)
    except (ValueError, np.linalg.LinAlgError):
        return [None] * len(phases)
    freqs = [dominant_frequency(row, X.dt) for row in fac.temporal]
    span = X.t[-1] - X.t[0]
    unused = list(range(r))
    starts = []
    for ph in phases:
        if not unused:
            starts.append(None)
            continue
        fg = (ph.theta[-1] - ph.theta[0]) / (2.0 * np.pi * span)
        j = min(unused, key=lambda c: (abs(freqs[c] - fg), c))
        unused.remove(j)
        starts.append(fac.spatial[:, j])
    return starts


def stimd_decompose(X, guesses, cfg: StimdConfig | None = None) -> DecompositionResult:
    """Factor ``X ~ B S`` with unit-norm columns of B and IMF rows of S.

    Parameters
    ----------
    X : SignalMatrix
    guesses : sequence of array_like or PhaseFunction
        Initial phases, one per mode, on the grid of X. Order sets the
        extraction order.
    cfg : StimdConfig, optional

    Returns
    -------
    DecompositionResult
    """
    cfg = cfg or StimdConfig()
    X = X if isinstance(X, SignalMatrix) else SignalMatrix(X)
    if len(guesses) == 0:
        raise ValueError("at least one guess is required")
    if len(guesses) > X.m:
        raise ShapeMismatch(f"{len(guesses)} guesses exceed the channel count {X.m}")
    t = X.t
    phases = [as_phase(g, t) for g in guesses]
    x_norm = X.frobenius()

    if cfg.init == "ica":
        starts = _ica_starts(X, phases, cfg)
    elif cfg.init == "random":
        rng = np.random.default_rng(cfg.seed)
        starts = [rng.standard_normal(X.m) for _ in phases]
    else:
        starts = [None] * len(phases)

    R = X.data.copy()
    cols, modes, objectives, diags = [], [], [], []
    for i, phase in enumerate(phases):
        r_norm = float(np.linalg.norm(R))
        if r_norm < 1e-12 * x_norm:
            w = np.zeros(X.m)
            w[0] = 1.0
            imf = imf_from_phase(np.zeros(X.n), phase, converged=False)
            diag = ModeDiagnostics(objective=r_norm ** 2, initial_objective=r_norm ** 2, alternations=0,
                                   converged=False, nmp_converged=False, direction_converged=False,
                                   no_descent=True, init="degenerate")
        else:
            res = sphere_minimize(SignalMatrix(R, X.dt, X.t0), phase, cfg, w0=starts[i])
            w, imf, diag = res.w, res.imf, res.diagnostics
            if w[np.argmax(np.abs(w))] < 0:
                w, imf = -w, _flip(imf)
            R = R - np.outer(w, imf.s)
        cols.append(w)
        modes.append(imf)
        objectives.append(diag.objective)
        diags.append(diag)

    active = [i for i, d in enumerate(diags) if d.init != "degenerate"]
    for _ in range(cfg.backfit_sweeps if len(active) > 1 else 0):
        change = 0.0
        for i in active:
            Ri = R + np.outer(cols[i], modes[i].s)
            res = sphere_minimize(SignalMatrix(Ri, X.dt, X.t0), modes[i].theta, cfg, w0=cols[i], warm=True)
            w, imf = res.w, res.imf
            if w[np.argmax(np.abs(w))] < 0:
                w, imf = -w, _flip(imf)
            old = np.outer(cols[i], modes[i].s)
            new = np.outer(w, imf.s)
            change = max(change, float(np.linalg.norm(new - old) / max(np.linalg.norm(old), np.finfo(float).tiny)))
            R = Ri - new
            cols[i], modes[i], objectives[i], diags[i] = w, imf, res.objective, res.diagnostics
        if change < cfg.backfit_tol:
            break
    R = X.data - sum(np.outer(c, m.s) for c, m in zip(cols, modes))

    return DecompositionResult(mixing=MixingMatrix(np.stack(cols, axis=1)), modes=modes,
                               residual=SignalMatrix(R, X.dt, X.t0), per_mode_objective=objectives,
                               guesses_used=[p.theta for p in phases], diagnostics=diags, x_norm=x_norm)


def reconstruct(result: DecompositionResult, include_residual: bool = False) -> SignalMatrix:
    """``B S``, optionally plus the residual."""
    data = result.B @ result.S
    if include_residual:
        data = data + result.residual.data
    return SignalMatrix(data, result.residual.dt, result.residual.t0)
