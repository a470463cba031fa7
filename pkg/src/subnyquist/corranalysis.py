"""Bias and covariance of the correlogram power estimate for white Gaussian input.

The input on the Nyquist grid is circular complex white Gaussian with
``E|x|^2 = sigma2``.  Second moments of the stacked correlation vector
``u_breve`` are diagonal; their entries are expressed through the filter
autocorrelations.  For a channel pair ``(a, b)`` write

``rho_a(n, u) = sum_r h_a(n - r) h_a(u - r)``,

the sum running over input indices ``r`` seen by both output ``n`` and
output ``u`` (``max(0, n - N_h + 1) <= r <= n``).  Then
``S_k(n) = sum_u rho_a(n, u) rho_b(n, u)``.  Away from the record edges
``S_k(n)`` is the constant ``G_k``; the ``2(N_h - 1)`` edge terms are
collected in ``Sigma_k``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, StructuralError
from .multicoset import DelayFilterBank, MultiCosetConfig, channel_pairs


def filter_autocorrelation(h) -> np.ndarray:
    """``(h * h_rev)[g]`` for ``g = 0 .. 2 N_h - 2``; the centre is ``sum h^2``."""
    h = np.asarray(h, dtype=float)
    return np.convolve(h, h[::-1])


def windowed_correlation(taps, N: int, rows) -> np.ndarray:
    """``rho_a(n, n + j - N_h + 1)`` for each channel ``a``, row ``n`` and lag slot ``j``.

    Returns an array of shape ``(q, len(rows), 2 N_h - 1)``; lags whose
    partner index ``u`` falls outside ``[0, N)`` are zero.
    """
    taps = np.atleast_2d(np.asarray(taps, dtype=float))
    nh = taps.shape[1]
    rows = np.asarray(rows, dtype=int)
    out = np.zeros((taps.shape[0], rows.size, 2 * nh - 1))
    for i, n in enumerate(rows):
        for j in range(2 * nh - 1):
            u = n + j - (nh - 1)
            if u < 0 or u >= N:
                continue
            lo = max(0, n - nh + 1, u - nh + 1)
            r = np.arange(lo, min(n, u) + 1)
            if r.size:
                out[:, i, j] = np.sum(taps[:, n - r] * taps[:, u - r], axis=1)
    return out


def _edge_rows(N: int, nh: int) -> np.ndarray:
    head = np.arange(0, nh - 1)
    tail = np.arange(N - nh + 1, N)
    return np.concatenate([head, tail])


def _pair_index(pairs):
    a, b = np.array(pairs, dtype=int).reshape(-1, 2).T
    return a, b


def compute_G_Sigma(filters: DelayFilterBank, config: MultiCosetConfig, k: int):
    """``(G_k, Sigma_k)`` for the ``k``-th channel pair (0-based, pair 0 is ``(0, 0)``).

    Raises
    ------
    ConfigurationError
        If ``N < 2 N_h - 1``, where the interior window is empty and the
        split into ``G_k`` and edge terms does not apply.
    """
    pairs = channel_pairs(config.q)
    if not 0 <= k < len(pairs):
        raise StructuralError(f"pair index {k} out of range [0, {len(pairs)})")
    g, sigma = _g_sigma_all(filters, config.samples_per_channel, pairs[k : k + 1])
    return float(g[0]), float(sigma[0])


def _g_sigma_all(filters: DelayFilterBank, N: int, pairs):
    nh = filters.filter_len
    if N < 2 * nh - 1:
        raise ConfigurationError(
            f"N = {N} < 2 N_h - 1 = {2 * nh - 1}: interior window empty"
        )
    a, b = _pair_index(pairs)
    ac = np.array([filter_autocorrelation(h) for h in filters.taps])
    g = np.sum(ac[a] * ac[b], axis=1)
    rho = windowed_correlation(filters.taps, N, _edge_rows(N, nh))
    sigma = np.einsum("pij,pij->p", rho[a], rho[b])
    return g, sigma


def pair_fourth_moments(filters: DelayFilterBank, N: int, pairs) -> np.ndarray:
    """``sum_n S_k(n)`` for every pair, valid for any record length ``N >= 1``.

    Uses ``(N - 2 N_h + 2) G_k + Sigma_k`` when the interior window is
    nonempty and the full windowed sum otherwise.
    """
    nh = filters.filter_len
    if N >= 2 * nh - 1:
        g, sigma = _g_sigma_all(filters, N, pairs)
        return (N - 2 * nh + 2) * g + sigma
    a, b = _pair_index(pairs)
    rho = windowed_correlation(filters.taps, N, np.arange(N))
    return np.einsum("pij,pij->p", rho[a], rho[b])


def expected_v(config: MultiCosetConfig, filters: DelayFilterBank, sigma2: float) -> np.ndarray:
    """Mean of ``v_hat``: the pseudoinverse applied to the mean of ``u_breve``."""
    W, L = config.nyquist_rate, config.segments
    mean_u = np.zeros(2 * config.Q)
    mean_u[0] = 2.0 * np.pi * (W / L) * filters.energies[0] * sigma2
    return config.psi_pinv @ mean_u


def expected_power(config: MultiCosetConfig, filters: DelayFilterBank, sigma2: float) -> np.ndarray:
    """Mean of ``p_hat``; equals ``sigma2`` in every segment for white input."""
    scale = config.nyquist_rate / (2.0 * np.pi * filters.energies[0])
    return scale * expected_v(config, filters, sigma2)


def compute_U(config: MultiCosetConfig, filters: DelayFilterBank, sigma2: float) -> np.ndarray:
    """Diagonal second-moment matrix ``E{u_breve u_breve^T}`` (``2Q x 2Q``).

    Entry 0 is the full mean square of ``R_z[0, 0]`` (mean squared plus
    variance); entry ``Q`` (its imaginary part) is zero; every other pair
    contributes half of ``E|R_z[a, b]|^2`` to both its real and imaginary
    slot.
    """
    N, L, W = config.samples_per_channel, config.segments, config.nyquist_rate
    Q = config.Q
    c2 = (2.0 * np.pi * W / (N * L)) ** 2
    s4 = sigma2**2
    t = pair_fourth_moments(filters, N, config.pairs)
    diag = np.empty(2 * Q)
    diag[0] = s4 * c2 * (N**2 * filters.energies[0] ** 2 + t[0])
    diag[1:Q] = 0.5 * s4 * c2 * t[1:]
    diag[Q] = 0.0
    diag[Q + 1 :] = diag[1:Q]
    return np.diag(diag)


def compute_cov_p(config: MultiCosetConfig, filters: DelayFilterBank, sigma2: float) -> np.ndarray:
    """Covariance of ``p_hat``: ``(W / 2 pi H_1)^2 P U P^T - p p^T``, ``P`` the pseudoinverse."""
    P = config.psi_pinv
    scale = (config.nyquist_rate / (2.0 * np.pi * filters.energies[0])) ** 2
    u_diag = np.diag(compute_U(config, filters, sigma2))
    second = scale * (P * u_diag[None, :]) @ P.T
    p = expected_power(config, filters, sigma2)
    cov = second - np.outer(p, p)
    return 0.5 * (cov + cov.T)


@dataclass(frozen=True)
class CorrelogramStats:
    """Analytical first and second moments of the correlogram estimate.

    ``G`` and ``Sigma`` are per channel pair and are ``None`` for records
    too short to have an interior window.
    """

    expected_p: np.ndarray
    cov_p: np.ndarray
    U: np.ndarray
    G: np.ndarray | None
    Sigma: np.ndarray | None
    H: np.ndarray


def correlogram_stats(config: MultiCosetConfig, filters: DelayFilterBank, sigma2: float) -> CorrelogramStats:
    N = config.samples_per_channel
    if N >= 2 * filters.filter_len - 1:
        g, sigma = _g_sigma_all(filters, N, config.pairs)
    else:
        g = sigma = None
    return CorrelogramStats(
        expected_p=expected_power(config, filters, sigma2),
        cov_p=compute_cov_p(config, filters, sigma2),
        U=compute_U(config, filters, sigma2),
        G=g,
        Sigma=sigma,
        H=filters.energies.copy(),
    )
