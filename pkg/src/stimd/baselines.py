"""SVD and FastICA factorizations, and phase guesses from ICA spectra."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .errors import NoConvergence
from .signals import SignalMatrix

__all__ = [
    "FactorizationResult",
    "GuessSuggestion",
    "svd_factorize",
    "fastica_factorize",
    "truncation_error",
    "dominant_frequency",
    "suggest_guesses",
    "sign_normalize",
]


@dataclass(frozen=True)
class FactorizationResult:
    """Spatial and temporal factors with ``X ~ spatial @ temporal + mean``.

    Attributes
    ----------
    spatial : ndarray, shape (m, r)
    temporal : ndarray, shape (r, n)
    singular_values : ndarray or None
        All singular values of X (SVD only).
    method : str
        ``"svd"`` or ``"fastica"``.
    mean : ndarray, shape (m,)
        Channel means removed before factorization (zero for SVD).
    unmixing : ndarray or None
        Orthogonal rotation of the whitened data (ICA only).
    converged : bool
    iterations : tuple of int
        Fixed-point iterations used per component (ICA only).
    """

    spatial: np.ndarray
    temporal: np.ndarray
    singular_values: np.ndarray | None
    method: str
    mean: np.ndarray = field(default=None)
    unmixing: np.ndarray | None = None
    converged: bool = True
    iterations: tuple = ()

    def reconstruct(self) -> np.ndarray:
        out = self.spatial @ self.temporal
        if self.mean is not None:
            out = out + self.mean[:, None]
        return out


def sign_normalize(spatial: np.ndarray, temporal: np.ndarray):
    """Flip factor pairs so each spatial column's largest-magnitude entry is positive."""
    spatial = spatial.copy()
    temporal = temporal.copy()
    for j in range(spatial.shape[1]):
        if spatial[np.argmax(np.abs(spatial[:, j])), j] < 0:
            spatial[:, j] *= -1
            temporal[j] *= -1
    return spatial, temporal


def _as_matrix(X) -> SignalMatrix:
    return X if isinstance(X, SignalMatrix) else SignalMatrix(X)


def svd_factorize(X, r: int) -> FactorizationResult:
    """Rank-r truncated SVD with ``spatial = U_r Sigma_r`` and ``temporal = V_r^T``.

    Parameters
    ----------
    X : SignalMatrix or array_like
    r : int
        Rank, ``1 <= r <= min(m, n)``.
    """
    X = _as_matrix(X)
    if not 1 <= r <= min(X.m, X.n):
        raise ValueError(f"rank must lie in [1, {min(X.m, X.n)}], got {r}")
    U, s, Vt = np.linalg.svd(X.data, full_matrices=False)
    return FactorizationResult(spatial=U[:, :r] * s[:r], temporal=Vt[:r].copy(), singular_values=s,
                               method="svd", mean=np.zeros(X.m))


def truncation_error(X, result: FactorizationResult) -> float:
    """Relative spectral-norm error ``||X - X_r||_2 / ||X||_2``."""
    data = _as_matrix(X).data
    return float(np.linalg.norm(data - result.reconstruct(), 2) / np.linalg.norm(data, 2))


def fastica_factorize(X, r: int, seed: int = 0, max_iter: int = 500, tol: float = 1e-6,
                      strict: bool = False) -> FactorizationResult:
    """Deflationary FastICA with the log-cosh contrast.

    The centred data are whitened through their SVD. Each unit direction is
    then found by the fixed-point iteration
    ``w <- E[z g(w.z)] - E[g'(w.z)] w`` with ``g = tanh``, orthogonalized
    against the directions already found.

    Parameters
    ----------
    X : SignalMatrix or array_like
    r : int
        Number of components, at most the channel count.
    seed : int
        Seed for the starting directions.
    max_iter : int
        Iteration cap per component.
    tol : float
        Stop when ``1 - |w_new . w| < tol``.
    strict : bool
        Raise :class:`NoConvergence` instead of flagging it.

    Returns
    -------
    FactorizationResult
        ``spatial`` is the pseudoinverse of the full unmixing map, so
        ``X ~ spatial @ temporal + mean``. Temporal modes have unit variance.
    """
    X = _as_matrix(X)
    if not 1 <= r <= X.m:
        raise ValueError(f"component count must lie in [1, {X.m}], got {r}")
    data = X.data
    if np.any(np.var(data, axis=1) == 0):
        raise ValueError("every channel needs nonzero variance")
    mean = data.mean(axis=1)
    Xc = data - mean[:, None]
    U, s, Vt = np.linalg.svd(Xc, full_matrices=False)
    if s[r - 1] <= s[0] * 1e-12:
        raise ValueError(f"data has numerical rank below {r}")
    n = X.n
    Z = np.sqrt(n) * Vt[:r]

    rng = np.random.default_rng(seed)
    W = np.zeros((r, r))
    iters = []
    ok = True
    for p in range(r):
        w = rng.standard_normal(r)
        w -= W[:p].T @ (W[:p] @ w)
        w /= np.linalg.norm(w)
        for it in range(1, max_iter + 1):
            u = w @ Z
            g = np.tanh(u)
            w_new = (Z * g).mean(axis=1) - (1.0 - g * g).mean() * w
            w_new -= W[:p].T @ (W[:p] @ w_new)
            w_new /= np.linalg.norm(w_new)
            gap = abs(abs(float(w_new @ w)) - 1.0)
            w = w_new
            if gap < tol:
                break
        else:
            ok = False
            if strict:
                raise NoConvergence(f"component {p} did not converge in {max_iter} iterations")
        W[p] = w
        iters.append(it)

    temporal = W @ Z
    # Pseudoinverse of the unmixing map W K with K = sqrt(n) Sigma^-1 U^T.
    spatial = (U[:, :r] * (s[:r] / np.sqrt(n))) @ W.T
    spatial, temporal = sign_normalize(spatial, temporal)
    return FactorizationResult(spatial=spatial, temporal=temporal, singular_values=None, method="fastica",
                               mean=mean, unmixing=W, converged=ok, iterations=tuple(iters))


def dominant_frequency(s, dt: float, smooth_bins: float = 2.0, floor: float = 0.05) -> float:
    """Dominant spectral frequency of a real signal, in Hz, on the FFT bin grid.

    The power spectrum is smoothed by a Gaussian of ``smooth_bins`` bins and
    the lobe around its maximum is taken out to where it falls below
    ``floor`` of the peak. The power centroid of that lobe is returned,
    snapped to the nearest FFT bin. For a pure tone this is the tone's bin;
    for a frequency-modulated carrier it is the centre of the swept band
    rather than the edge where the sweep dwells.
    """
    s = np.asarray(s, dtype=float)
    P = np.abs(np.fft.rfft(s - s.mean())) ** 2
    f = np.fft.rfftfreq(s.shape[0], dt)
    P[0] = 0.0
    if not np.any(P > 0):
        return 0.0
    Ps = gaussian_filter1d(P, smooth_bins) if smooth_bins > 0 else P
    k = int(np.argmax(Ps))
    lo = hi = k
    cut = floor * Ps[k]
    while lo > 1 and Ps[lo - 1] > cut:
        lo -= 1
    while hi < P.shape[0] - 1 and Ps[hi + 1] > cut:
        hi += 1
    band = P[lo:hi + 1]
    fc = float(np.sum(f[lo:hi + 1] * band) / np.sum(band))
    return float(f[int(np.argmin(np.abs(f - fc)))])


@dataclass(frozen=True)
class GuessSuggestion:
    """Linear phase guesses derived from ICA spectra.

    Attributes
    ----------
    frequencies : ndarray
        Guess frequencies in Hz, ascending.
    phases : list of ndarray
        ``2 pi f t`` on the signal's time grid, in the same order.
    duplicates : list of tuple
        Index pairs of guesses sharing a frequency bin.
    factorization : FactorizationResult
    rank : int
        Number of ICA components actually used. Below the requested count
        when the centred data have lower numerical rank; the missing
        guesses then repeat the found frequencies and appear in
        ``duplicates``.
    """

    frequencies: np.ndarray
    phases: list
    duplicates: list
    factorization: FactorizationResult
    rank: int = 0


def suggest_guesses(X, r: int, seed: int = 0, rank_tol: float = 1e-10) -> GuessSuggestion:
    """Phase guesses ``2 pi f_i t`` from the spectra of FastICA temporal modes.

    Frequencies are returned in ascending order, the recommended extraction
    order. Guesses falling in the same FFT bin are reported in
    ``duplicates``.
    """
    X = _as_matrix(X)
    if not 1 <= r <= X.m:
        raise ValueError(f"guess count must lie in [1, {X.m}], got {r}")
    sv = np.linalg.svd(X.data - X.data.mean(axis=1, keepdims=True), compute_uv=False)
    rank = int(np.count_nonzero(sv > rank_tol * sv[0])) if sv[0] > 0 else 0
    if rank == 0:
        raise ValueError("data have no variance")
    k = min(r, rank)
    fac = fastica_factorize(X, k, seed=seed)
    found = [dominant_frequency(row, X.dt) for row in fac.temporal]
    # Pad in order of component energy so repeats favour the strongest modes.
    energy = np.linalg.norm(fac.spatial, axis=0)
    order = np.argsort(-energy, kind="stable")
    found += [found[order[i % k]] for i in range(r - k)]
    freqs = np.sort(np.array(found))
    df = 1.0 / (X.n * X.dt)
    dups = [(i, j) for i in range(r) for j in range(i + 1, r) if abs(freqs[i] - freqs[j]) < 0.5 * df]
    t = X.t
    return GuessSuggestion(frequencies=freqs, phases=[2.0 * np.pi * f * t for f in freqs], duplicates=dups,
                           factorization=fac, rank=k)
