"""Model-based recovery of sinusoid mixtures from compressive measurements.

Signal model::

    x_n = sum_k d_k exp(-1j * w_k * n),   n = 0 .. N-1      (x = A d)
    y   = Phi x + w,   w ~ CN(0, sigma^2 I)

Recovery alternates an outer gradient (Landweber) step on ``||y - Phi x||^2``
with a model projection: root-MUSIC picks ``K`` frequencies from the outer
estimate and the amplitudes are refit, either by least squares in the
compressed domain (nested LS) or by correlating with the Vandermonde columns
(SIHT baseline).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSubspaceError, SingularityError, StructuralError
from .numerics import hermitian_eig, least_squares, poly_roots, real_times_complex

log = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
DUPLICATE_FREQ_TOL = 1e-9


def default_window(N: int, order: int, min_spacing: float | None = None) -> int:
    """Root-MUSIC frame length used when none is given.

    The frame is made long enough that its Rayleigh resolution ``2 pi / Wx``
    matches the minimum tone spacing (``10 pi / N`` by default, giving
    ``Wx = N // 5``), and never shorter than ``2K + 12``.
    """
    if min_spacing is None:
        min_spacing = 10.0 * np.pi / N
    wx = int(np.floor(TWO_PI / min_spacing + 1e-9))
    return int(min(N, max(wx, 2 * order + 12)))


def circular_distance(a, b):
    """Distance between angles on the circle, broadcasting."""
    d = np.mod(np.asarray(a) - np.asarray(b), TWO_PI)
    return np.minimum(d, TWO_PI - d)


# --------------------------------------------------------------------------
# Signal model
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LineSpectrumModel:
    """K complex sinusoids: frequencies in [0, 2pi) and complex amplitudes."""

    frequencies: np.ndarray
    amplitudes: np.ndarray

    def __post_init__(self):
        w = np.mod(np.atleast_1d(np.asarray(self.frequencies, dtype=float)), TWO_PI)
        d = np.atleast_1d(np.asarray(self.amplitudes, dtype=complex))
        if w.shape != d.shape or w.ndim != 1:
            raise StructuralError("frequencies and amplitudes must be 1-D of equal length")
        if w.size > 1:
            sep = circular_distance(w[:, None], w[None, :])
            np.fill_diagonal(sep, np.inf)
            if np.min(sep) == 0.0:
                raise StructuralError("frequencies must be pairwise distinct")
        object.__setattr__(self, "frequencies", w)
        object.__setattr__(self, "amplitudes", d)

    @property
    def K(self) -> int:
        return self.frequencies.size

    def min_separation(self) -> float:
        if self.K < 2:
            return np.inf
        sep = circular_distance(self.frequencies[:, None], self.frequencies[None, :])
        np.fill_diagonal(sep, np.inf)
        return float(np.min(sep))


def random_frequencies(rng, K: int, min_spacing: float, max_tries: int = 100000) -> np.ndarray:
    """Draw ``K`` frequencies uniformly on [0, 2pi) with circular spacing >= ``min_spacing``.

    Sequential rejection sampling; each candidate is kept only if it clears
    every frequency accepted so far.
    """
    if K * min_spacing >= TWO_PI:
        raise StructuralError(f"cannot place {K} frequencies {min_spacing:.4g} rad apart")
    out = []
    tries = 0
    while len(out) < K:
        tries += 1
        if tries > max_tries:
            raise StructuralError("frequency rejection sampling did not terminate")
        w = rng.uniform(0.0, TWO_PI)
        if all(circular_distance(w, v) >= min_spacing for v in out):
            out.append(w)
    return np.array(out)


def random_line_spectrum(
    rng,
    K: int,
    N: int,
    min_spacing: float | None = None,
    amp_range=(1.0, 2.0),
    random_phase: bool = False,
) -> LineSpectrumModel:
    """Ground-truth generator: spaced frequencies, amplitudes uniform on ``amp_range``.

    ``min_spacing`` defaults to ``10 pi / N``.  Phases are zero unless
    ``random_phase`` is set, in which case they are uniform on [0, 2pi).
    """
    if min_spacing is None:
        min_spacing = 10.0 * np.pi / N
    freqs = random_frequencies(rng, K, min_spacing)
    mags = rng.uniform(amp_range[0], amp_range[1], size=K)
    if random_phase:
        amps = mags * np.exp(1j * rng.uniform(0.0, TWO_PI, size=K))
    else:
        amps = mags.astype(complex)
    return LineSpectrumModel(freqs, amps)


def vandermonde(frequencies, N: int) -> np.ndarray:
    """Columns ``a(w) = [1, e^{-jw}, ..., e^{-j(N-1)w}]^T``."""
    n = np.arange(N)[:, None]
    return np.exp(-1j * n * np.atleast_1d(frequencies)[None, :])


def synthesize_signal(model: LineSpectrumModel, N: int) -> np.ndarray:
    return vandermonde(model.frequencies, N) @ model.amplitudes


# --------------------------------------------------------------------------
# Measurements
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MeasurementSystem:
    """Real ``M x N`` measurement matrix and complex noise standard deviation."""

    phi: np.ndarray
    noise_sigma: float = 0.0

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        if phi.ndim != 2:
            raise StructuralError("Phi must be a matrix")
        if not np.all(np.isfinite(phi)):
            raise StructuralError("Phi has non-finite entries")
        if self.noise_sigma < 0:
            raise StructuralError("noise_sigma must be non-negative")
        object.__setattr__(self, "phi", phi)

    @property
    def M(self) -> int:
        return self.phi.shape[0]

    @property
    def N(self) -> int:
        return self.phi.shape[1]

    @property
    def compressive(self) -> bool:
        return self.M < self.N


def gaussian_measurement_matrix(rng, M: int, N: int) -> np.ndarray:
    """i.i.d. N(0, 1/M) entries."""
    return rng.standard_normal((M, N)) / np.sqrt(M)


def complex_noise(rng, size, sigma: float) -> np.ndarray:
    """Circularly-symmetric complex Gaussian, ``E|w|^2 = sigma^2``."""
    s = sigma / np.sqrt(2.0)
    return s * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def measure(x, system: MeasurementSystem, rng=None) -> np.ndarray:
    """``y = Phi x + w``.  With ``noise_sigma == 0`` no RNG is needed."""
    x = np.asarray(x)
    if x.shape[0] != system.N:
        raise StructuralError(f"signal length {x.shape[0]} != Phi columns {system.N}")
    y = real_times_complex(system.phi, x) if np.iscomplexobj(x) else system.phi @ x
    if system.noise_sigma > 0:
        if rng is None:
            raise StructuralError("a random generator is required for noisy measurements")
        y = y + complex_noise(rng, system.M, system.noise_sigma)
    return y.astype(complex)


# --------------------------------------------------------------------------
# Building blocks of the recovery loop
# --------------------------------------------------------------------------


def outer_ls_step(x_prev, y, phi, lam: float = 1.0) -> np.ndarray:
    """One gradient step ``x_prev + lam * Phi^T (y - Phi x_prev)``."""
    if lam <= 0:
        raise StructuralError("step size must be positive")
    resid = y - real_times_complex(phi, x_prev)
    return x_prev + lam * real_times_complex(phi.T, resid)


@dataclass(frozen=True)
class RootMusicConfig:
    window: int
    order: int
    forward_backward: bool = False
    rooting: str = "aberth"

    def __post_init__(self):
        if self.order < 1:
            raise StructuralError("model order must be >= 1")
        if self.window <= 2 * self.order:
            raise StructuralError(
                f"root-MUSIC window {self.window} must exceed twice the model order {self.order}"
            )


def autocorrelation_matrix(x, window: int, forward_backward: bool = False) -> np.ndarray:
    """Windowed sample autocorrelation of overlapping frames.

    ``R[a, b] = 1/(Nx - Wx + 1) * sum_{n=Wx}^{Nx} conj(x[n-a]) x[n-b]`` for
    ``a, b = 1 .. Wx`` (stored zero-based).
    """
    x = np.asarray(x, dtype=complex)
    nx = x.size
    if nx < window:
        raise StructuralError(f"signal of length {nx} shorter than window {window}")
    # frames[n - Wx, a - 1] = x[n - a] for n = Wx .. Nx
    frames = np.ascontiguousarray(np.lib.stride_tricks.sliding_window_view(x, window)[:, ::-1])
    r = frames.conj().T @ frames / (nx - window + 1)
    if forward_backward:
        j = np.eye(window)[::-1]
        r = 0.5 * (r + j @ r.conj() @ j)
    return r


def root_music_polynomial(projector: np.ndarray) -> np.ndarray:
    """Ascending coefficients of ``z^{W-1} a(z)^H C a(z)`` for a projector ``C``.

    With ``a(w)_m = e^{-jwm}``, ``a^H C a = sum_{m,n} C[m,n] z^{m-n}`` at
    ``z = e^{jw}``; the coefficient of ``z^k`` is the sum of the ``k``-th
    sub-diagonal of ``C``.
    """
    w = projector.shape[0]
    row, col = np.indices((w, w))
    lag = (row - col + (w - 1)).ravel()
    flat = projector.ravel()
    re = np.bincount(lag, weights=flat.real, minlength=2 * w - 1)
    im = np.bincount(lag, weights=flat.imag, minlength=2 * w - 1)
    return re + 1j * im


def noise_projector(r: np.ndarray, order: int) -> np.ndarray:
    """``I - U_s U_s^H`` with ``U_s`` the ``order`` dominant eigenvectors of ``r``.

    Equal to ``U_n U_n^H`` for the complementary (noise) eigenvectors.
    """
    eig = hermitian_eig(r, check=False, top=order)
    us = eig.eigenvectors
    return np.eye(r.shape[0]) - us @ us.conj().T


def pair_roots(roots: np.ndarray):
    """Group root-MUSIC roots into conjugate-reciprocal pairs.

    The polynomial is self-reciprocal, so its roots come as ``(z, 1/z*)``
    with a common phase.  Every root is mapped into the closed unit disc and
    mapped roots are paired greedily by proximity.  Each pair yields one
    candidate with the pair's mean phase and mean (mapped) radius.  In exact
    arithmetic this is the set of roots inside the unit circle; in floating
    point it stays accurate when a double root on the circle splits
    tangentially.

    Returns
    -------
    radius, phase : ndarray
    """
    mag = np.abs(roots)
    mapped = np.where(mag <= 1.0, roots, 1.0 / np.conj(roots))
    n = mapped.size
    if n == 0:
        return np.empty(0), np.empty(0)
    dist = np.abs(mapped[:, None] - mapped[None, :])
    np.fill_diagonal(dist, np.inf)
    nearest = np.argmin(dist, axis=1)
    idx = np.arange(n)
    mutual = (nearest[nearest] == idx) & (idx < nearest)
    first, second = idx[mutual], nearest[mutual]
    used = np.zeros(n, dtype=bool)
    used[first] = used[second] = True
    # whatever is not mutually nearest is paired greedily by distance
    rest = np.flatnonzero(~used)
    extra = []
    if rest.size > 1:
        sub = dist[np.ix_(rest, rest)]
        iu, ju = np.triu_indices(rest.size, k=1)
        for t in np.argsort(sub[iu, ju], kind="stable"):
            i, j = rest[iu[t]], rest[ju[t]]
            if not (used[i] or used[j]):
                used[i] = used[j] = True
                extra.append((i, j))
    if extra:
        first = np.concatenate([first, [e[0] for e in extra]])
        second = np.concatenate([second, [e[1] for e in extra]])
    ri, rj = np.abs(mapped[first]), np.abs(mapped[second])
    tiny = np.finfo(float).tiny
    radius = np.sqrt(ri * rj)
    phase = np.angle(mapped[first] / np.maximum(ri, tiny) + mapped[second] / np.maximum(rj, tiny))
    single = np.flatnonzero(~used)
    radius = np.concatenate([radius, np.abs(mapped[single])])
    phase = np.concatenate([phase, np.angle(mapped[single])])
    return np.asarray(radius), np.asarray(phase)


def _select_roots(radius: np.ndarray, phase: np.ndarray, K: int) -> np.ndarray:
    """Phases of the K candidates strictly inside the unit circle nearest to it.

    Equidistant candidates are resolved in favour of the one whose phase is
    farthest from the phases already chosen.
    """
    inside = radius < 1.0
    dist, phase = 1.0 - radius[inside], phase[inside]
    order = np.argsort(dist, kind="stable")
    dist, phase = dist[order], phase[order]
    chosen = []
    i = 0
    while len(chosen) < K and i < phase.size:
        j = i + 1
        while j < phase.size and dist[j] - dist[i] <= 1e-12:
            j += 1
        group = list(phase[i:j])
        while group and len(chosen) < K:
            if chosen and len(group) > 1:
                score = [np.min(circular_distance(g, np.array(chosen))) for g in group]
                pick = int(np.argmax(score))
            else:
                pick = 0
            chosen.append(group.pop(pick))
        i = j
    return np.array(chosen, dtype=float)


def root_music(x_e, config: RootMusicConfig, pad_with=None) -> np.ndarray:
    """Estimate ``config.order`` frequencies in [0, 2pi) from a single record.

    Parameters
    ----------
    x_e : array_like
        Complex samples.
    config : RootMusicConfig
    pad_with : array_like, optional
        Fallback frequencies (typically the previous iterate).  When fewer
        than ``K`` roots lie strictly inside the unit circle the shortfall is
        filled from these, farthest-from-found first; without a fallback a
        :class:`DegenerateSubspaceError` is raised.
    """
    K = config.order
    x_e = np.asarray(x_e, dtype=complex)
    if x_e.size < config.window:
        raise StructuralError(f"record length {x_e.size} < window {config.window}")
    r = autocorrelation_matrix(x_e, config.window, config.forward_backward)
    coeffs = root_music_polynomial(noise_projector(r, K))
    radius, phase = pair_roots(poly_roots(coeffs, config.rooting).roots)
    freqs = np.mod(_select_roots(radius, phase, K), TWO_PI)
    if freqs.size < K:
        if pad_with is None:
            raise DegenerateSubspaceError(
                f"only {freqs.size} of {K} roots inside the unit circle",
                found=freqs.size,
                required=K,
            )
        log.warning("root-MUSIC degenerate: %d of %d roots; padding", freqs.size, K)
        freqs = _pad_frequencies(freqs, np.asarray(pad_with, dtype=float), K)
    return freqs


def _pad_frequencies(found, fallback, K):
    found = list(found)
    pool = list(np.mod(fallback, TWO_PI))
    while len(found) < K and pool:
        if found:
            score = [np.min(circular_distance(p, np.array(found))) for p in pool]
            found.append(pool.pop(int(np.argmax(score))))
        else:
            found.append(pool.pop(0))
    if len(found) < K:
        raise DegenerateSubspaceError("not enough fallback frequencies to pad", len(found), K)
    return np.array(found)


def merge_duplicate_columns(a_hat: np.ndarray, tol: float = DUPLICATE_FREQ_TOL):
    """Indices of columns to keep, treating columns with equal phase step as duplicates.

    Column ``k`` of a Vandermonde matrix is identified by its second entry
    ``e^{-j w_k}``.
    """
    if a_hat.shape[0] < 2:
        return np.arange(a_hat.shape[1])
    key = a_hat[1]
    keep = []
    for k in range(a_hat.shape[1]):
        if all(abs(key[k] - key[j]) > tol for j in keep):
            keep.append(k)
    return np.array(keep, dtype=int)


def inner_ls_amplitudes(y, phi, a_hat) -> np.ndarray:
    """Amplitudes minimising ``||y - Phi A_hat d||^2``.

    Duplicate columns (estimated frequencies closer than 1e-9) are merged
    before solving: the first copy gets the amplitude, the others get zero.
    """
    b = real_times_complex(phi, a_hat)
    keep = merge_duplicate_columns(a_hat)
    d = np.zeros(a_hat.shape[1], dtype=complex)
    if keep.size < a_hat.shape[1]:
        log.info("merged %d duplicate frequency estimates", a_hat.shape[1] - keep.size)
    d[keep] = least_squares(b[:, keep], y)
    return d


def siht_amplitudes(x_e, a_hat, normalize: bool = True) -> np.ndarray:
    """``A_hat^H x_e``, divided by the record length when ``normalize``."""
    d = a_hat.conj().T @ x_e
    return d / a_hat.shape[0] if normalize else d


def missed_frequencies(true_freqs, est_freqs, radius: float) -> int:
    """Number of true frequencies with no estimate closer than ``radius``."""
    true_freqs = np.atleast_1d(true_freqs)
    est_freqs = np.atleast_1d(est_freqs)
    if est_freqs.size == 0:
        return int(true_freqs.size)
    d = circular_distance(true_freqs[:, None], est_freqs[None, :])
    return int(np.sum(np.min(d, axis=1) >= radius))


# --------------------------------------------------------------------------
# Recovery loop
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class StopCriterion:
    """Stop after ``max_iterations`` or once ``||y - Phi x||^2/||y||^2 <= threshold``."""

    max_iterations: int = 10
    threshold: float | None = None

    def done(self, iteration: int, normalized_residual: float) -> bool:
        if iteration >= self.max_iterations:
            return True
        return self.threshold is not None and normalized_residual <= self.threshold


@dataclass
class RecoveryStep:
    iteration: int
    x_hat: np.ndarray
    omega_hat: np.ndarray
    d_hat: np.ndarray
    residual_norm: float
    normalized_error: float
    degenerate: bool = False
    squared_error: float | None = None
    missed: int | None = None


@dataclass
class RecoveryTrace:
    """Append-only record of a recovery run."""

    method: str
    step_size: float
    steps: list = field(default_factory=list)

    @property
    def iterations_run(self) -> int:
        return len(self.steps)

    @property
    def final(self) -> RecoveryStep:
        return self.steps[-1]

    def rows(self, signal_energy: float | None = None):
        """(iteration, nmse_db, residual, missed_count) tuples."""
        out = []
        for s in self.steps:
            if s.squared_error is not None and signal_energy:
                nmse = 10.0 * np.log10(s.squared_error / signal_energy)
            else:
                nmse = float("nan")
            out.append((s.iteration, nmse, s.residual_norm, s.missed))
        return out


def recover(
    y,
    phi,
    K: int,
    lam: float = 1.0,
    stop: StopCriterion | None = None,
    method: str = "nested_ls",
    window: int | None = None,
    truth: LineSpectrumModel | None = None,
    miss_radius: float | None = None,
    forward_backward: bool = False,
) -> RecoveryTrace:
    """Run the iterative recovery from ``x_0 = 0``.

    ``method`` is ``"nested_ls"`` (compressed-domain least squares for the
    amplitudes) or ``"siht"`` (Vandermonde correlation).  When ``truth`` is
    given each step also records the squared error against the true signal
    and the number of true frequencies missed by more than ``miss_radius``
    (default ``5 pi / N``).
    """
    if method not in ("nested_ls", "siht"):
        raise StructuralError(f"unknown recovery method {method!r}")
    stop = stop or StopCriterion()
    y = np.asarray(y, dtype=complex)
    phi = np.asarray(phi, dtype=float)
    N = phi.shape[1]
    cfg = RootMusicConfig(window or default_window(N, K), K, forward_backward)
    if miss_radius is None:
        miss_radius = 5.0 * np.pi / N
    x_true = synthesize_signal(truth, N) if truth is not None else None
    y_energy = float(np.vdot(y, y).real)

    trace = RecoveryTrace(method=method, step_size=lam)
    x_hat = np.zeros(N, dtype=complex)
    omega = None
    d_hat = np.zeros(K, dtype=complex)
    i = 0
    while True:
        i += 1
        x_e = outer_ls_step(x_hat, y, phi, lam)
        degenerate = False
        try:
            omega = root_music(x_e, cfg, pad_with=omega)
        except (DegenerateSubspaceError, SingularityError) as exc:
            log.warning("iteration %d: %s", i, exc)
            degenerate = True
            if omega is None:
                omega = np.linspace(0.0, TWO_PI, K, endpoint=False)
        a_hat = vandermonde(omega, N)
        try:
            if method == "nested_ls":
                d_hat = inner_ls_amplitudes(y, phi, a_hat)
            else:
                d_hat = siht_amplitudes(x_e, a_hat)
        except SingularityError as exc:
            log.warning("iteration %d: %s", i, exc)
            degenerate = True
        x_hat = a_hat @ d_hat
        resid = y - real_times_complex(phi, x_hat)
        rnorm = float(np.linalg.norm(resid))
        nerr = rnorm**2 / y_energy if y_energy > 0 else 0.0
        step = RecoveryStep(i, x_hat, omega.copy(), d_hat.copy(), rnorm, nerr, degenerate)
        if truth is not None:
            step.squared_error = float(np.sum(np.abs(x_true - x_hat) ** 2))
            step.missed = missed_frequencies(truth.frequencies, omega, miss_radius)
        trace.steps.append(step)
        if stop.done(i, nerr):
            break
    return trace
