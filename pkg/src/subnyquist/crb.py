"""Cramer-Rao bound for sinusoid parameters observed through ``y = Phi A d + w``.

Parameters are stacked as ``theta = [Re d, Im d, omega]`` (length 3K).  The
noise is circular complex Gaussian with ``E|w_m|^2 = sigma2``, so the
log-likelihood is ``-M ln(pi sigma2) - ||y - Phi A d||^2 / sigma2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import SingularityError, StructuralError
from .numerics import COND_LIMIT, real_times_complex
from .spectralcs import LineSpectrumModel, circular_distance, synthesize_signal, vandermonde


class BoundUndefinedError(SingularityError):
    """The Fisher information is singular, so no finite bound exists."""


@dataclass(frozen=True)
class FisherAssembly:
    F: np.ndarray
    Delta: np.ndarray
    Lambda: np.ndarray
    I_theta: np.ndarray


@dataclass(frozen=True)
class CrbResult:
    crb_value: float
    signal_energy: float

    @property
    def ncrb_db(self) -> float:
        return 10.0 * np.log10(self.crb_value / self.signal_energy)


def derivative_matrix(frequencies, N: int) -> np.ndarray:
    """Columns ``g(w) = da(w)/dw``, i.e. ``g_n = -j n e^{-jwn}``."""
    n = np.arange(N)[:, None]
    return -1j * n * vandermonde(frequencies, N)


def build_derivative_matrices(model: LineSpectrumModel, N: int):
    """Return ``(A, G, D)``: Vandermonde, its column derivatives and ``diag(d)``."""
    a = vandermonde(model.frequencies, N)
    g = -1j * np.arange(N)[:, None] * a
    return a, g, np.diag(model.amplitudes)


def signal_jacobian(model: LineSpectrumModel, N: int) -> np.ndarray:
    """``dx/dtheta = [A, jA, G D]`` (N x 3K, complex)."""
    a, g, _ = build_derivative_matrices(model, N)
    return np.hstack([a, 1j * a, g * model.amplitudes[None, :]])


def fisher_information(model: LineSpectrumModel, phi, sigma2: float) -> FisherAssembly:
    """Fisher information of ``theta`` for the compressive sinusoid model."""
    if sigma2 <= 0:
        raise StructuralError("noise variance must be positive")
    phi = np.asarray(phi, dtype=float)
    N = phi.shape[1]
    a, g, dmat = build_derivative_matrices(model, N)
    b = real_times_complex(phi, a)
    phi_gd = real_times_complex(phi, g * model.amplitudes[None, :])
    scale = 2.0 / sigma2
    f = scale * (b.conj().T @ b)
    delta = scale * (b.conj().T @ phi_gd)
    lam = scale * np.real(phi_gd.conj().T @ phi_gd)
    info = np.block(
        [
            [f.real, -f.imag, delta.real],
            [f.imag, f.real, delta.imag],
            [delta.real.T, delta.imag.T, lam],
        ]
    )
    # the blocks are exactly symmetric in exact arithmetic; remove rounding
    info = 0.5 * (info + info.T)
    return FisherAssembly(F=f, Delta=delta, Lambda=lam, I_theta=info)


def _closest_pair(freqs):
    if freqs.size < 2:
        return None
    d = circular_distance(freqs[:, None], freqs[None, :])
    np.fill_diagonal(d, np.inf)
    i, j = np.unravel_index(np.argmin(d), d.shape)
    return freqs[i], freqs[j]


def crb_trace(model: LineSpectrumModel, phi, sigma2: float) -> CrbResult:
    """``Tr{ J I^{-1} J^H }`` with ``J = dx/dtheta``: a lower bound on ``E||x - x_hat||^2``.

    The Fisher matrix is factored by Cholesky after symmetric diagonal
    scaling.  If the scaled matrix has condition number above
    ``COND_LIMIT`` the bound is reported as undefined instead of returning a
    meaningless number.

    Raises
    ------
    BoundUndefinedError
        When the Fisher information is numerically singular, typically
        because two frequencies nearly coincide.
    """
    phi = np.asarray(phi, dtype=float)
    N = phi.shape[1]
    info = fisher_information(model, phi, sigma2).I_theta
    diag = np.diag(info)
    if np.any(diag <= 0):
        raise BoundUndefinedError("Fisher information has a non-positive diagonal", np.inf)
    s = 1.0 / np.sqrt(diag)
    scaled = info * s[:, None] * s[None, :]
    ev = np.linalg.eigvalsh(scaled)
    cond = np.inf if ev[0] <= 0 else ev[-1] / ev[0]
    if cond > COND_LIMIT:
        pair = _closest_pair(model.frequencies)
        what = f"; closest frequencies {pair[0]:.6g} and {pair[1]:.6g}" if pair else ""
        raise BoundUndefinedError(f"Fisher information singular (cond={cond:.3e}){what}", cond)
    jac = signal_jacobian(model, N) * s[None, :]
    gram = np.real(jac.conj().T @ jac)
    chol = scipy.linalg.cho_factor(scaled, check_finite=False)
    crb = float(np.trace(scipy.linalg.cho_solve(chol, gram, check_finite=False)))
    energy = float(np.sum(np.abs(synthesize_signal(model, N)) ** 2))
    return CrbResult(crb_value=max(crb, 0.0), signal_energy=energy)


# ---------------------------------------------------------------------------
# Likelihood and score, for validating the Fisher blocks
# ---------------------------------------------------------------------------


def theta_of(model: LineSpectrumModel) -> np.ndarray:
    return np.concatenate([model.amplitudes.real, model.amplitudes.imag, model.frequencies])


def model_of(theta) -> LineSpectrumModel:
    theta = np.asarray(theta, dtype=float)
    k = theta.size // 3
    return LineSpectrumModel(theta[2 * k :], theta[:k] + 1j * theta[k : 2 * k])


def log_likelihood(theta, y, phi, sigma2: float) -> float:
    theta = np.asarray(theta, dtype=float)
    k = theta.size // 3
    d = theta[:k] + 1j * theta[k : 2 * k]
    x = vandermonde(theta[2 * k :], phi.shape[1]) @ d
    w = y - real_times_complex(phi, x)
    m = y.size
    return float(-m * np.log(np.pi * sigma2) - np.vdot(w, w).real / sigma2)


def score(theta, y, phi, sigma2: float) -> np.ndarray:
    """Gradient of :func:`log_likelihood` with respect to ``theta``."""
    model = model_of(theta)
    N = phi.shape[1]
    a, g, _ = build_derivative_matrices(model, N)
    b = real_times_complex(phi, a)
    w = y - b @ model.amplitudes
    bw = b.conj().T @ w
    gw = (real_times_complex(phi, g * model.amplitudes[None, :])).conj().T @ w
    return (2.0 / sigma2) * np.concatenate([bw.real, bw.imag, gw.real])
