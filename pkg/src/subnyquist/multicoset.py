"""Multi-coset sampling and the correlogram estimate of per-segment power.

A band-limited signal on the Nyquist grid ``x[n]`` (rate ``W``) is observed
by ``q`` channels, channel ``i`` keeping ``x[n L + c_i]``.  The spectrum is
split into ``L`` equal segments; the average power in each segment is
recovered from the ``q x q`` cross-correlation of the fractionally delayed
channel outputs.

Pair ordering used for every ``u``-indexed quantity: index 0 is channel pair
``(0, 0)``, followed by ``(a, b)`` with ``a < b`` in lexicographic order.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from .errors import BoundsError, ConfigurationError, SingularityError, StructuralError
from .numerics import real_pseudoinverse


def channel_pairs(q: int) -> list[tuple[int, int]]:
    """``[(0, 0)] + [(a, b) for a < b]`` -- the ``Q = q(q-1)/2 + 1`` used pairs."""
    return [(0, 0)] + [(a, b) for a in range(q) for b in range(a + 1, q)]


def default_delay(filter_len: int) -> int:
    """Integer part of the filter delay, ``floor((N_h - 1) / 2)``."""
    return (filter_len - 1) // 2


@dataclass(frozen=True)
class MultiCosetConfig:
    """Sampler geometry.

    Parameters
    ----------
    nyquist_rate : float
        ``W`` in Hz.
    segments : int
        ``L``, odd.  Also the per-channel decimation factor.
    offsets : sequence of int
        ``c_i``, ``q`` distinct integers in ``[0, L)``.
    samples_per_channel : int
        ``N``.
    filter_len : int
        ``N_h``, taps of each fractional delay filter.
    integer_delay : int, optional
        ``D``; defaults to ``floor((N_h - 1) / 2)``.
    """

    nyquist_rate: float
    segments: int
    offsets: tuple
    samples_per_channel: int
    filter_len: int = 4
    integer_delay: int | None = None

    def __post_init__(self):
        offsets = tuple(int(c) for c in self.offsets)
        object.__setattr__(self, "offsets", offsets)
        if self.integer_delay is None:
            object.__setattr__(self, "integer_delay", default_delay(self.filter_len))
        L, q = self.segments, len(offsets)
        if L < 1 or L % 2 == 0:
            raise ConfigurationError(f"L must be a positive odd integer, got {L}")
        if not 1 <= q < L:
            raise ConfigurationError(f"need 1 <= q < L, got q={q}, L={L}")
        if len(set(offsets)) != q or min(offsets) < 0 or max(offsets) >= L:
            raise ConfigurationError(f"offsets must be {q} distinct integers in [0, {L})")
        if 2 * self.Q < L:
            raise ConfigurationError(f"2Q = {2 * self.Q} < L = {L}: too few channels")
        if self.samples_per_channel < 1:
            raise ConfigurationError("samples_per_channel must be >= 1")
        if self.filter_len < 1 or self.integer_delay < 0:
            raise ConfigurationError("filter_len must be >= 1 and integer_delay >= 0")
        if self.nyquist_rate <= 0:
            raise ConfigurationError("nyquist_rate must be positive")
        try:
            self.psi_pinv  # full column rank check, cached
        except SingularityError as exc:
            raise ConfigurationError(
                f"offsets {offsets} give a rank-deficient Psi for L={L}; "
                "choose different offsets"
            ) from exc

    @property
    def q(self) -> int:
        return len(self.offsets)

    @property
    def Q(self) -> int:
        return self.q * (self.q - 1) // 2 + 1

    @property
    def nyquist_length(self) -> int:
        """``N_x = N L`` Nyquist samples spanned by one record."""
        return self.samples_per_channel * self.segments

    @property
    def average_rate(self) -> float:
        return self.q * self.nyquist_rate / self.segments

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return channel_pairs(self.q)

    @cached_property
    def psi_breve(self) -> np.ndarray:
        return build_psi_breve(self)

    @cached_property
    def psi_pinv(self) -> np.ndarray:
        return real_pseudoinverse(self.psi_breve, label="Psi_breve")

    def with_samples(self, samples_per_channel: int) -> "MultiCosetConfig":
        return replace(self, samples_per_channel=samples_per_channel)


def random_offsets(rng, L: int, q: int, max_tries: int = 1000) -> tuple:
    """Draw ``q`` distinct offsets from ``{0, ..., L-1}``, re-drawing until Psi has full rank."""
    for _ in range(max_tries):
        c = tuple(int(v) for v in np.sort(rng.choice(L, size=q, replace=False)))
        if _psi_full_rank(L, c):
            return c
    raise ConfigurationError(f"no full-rank offset set found for L={L}, q={q}")


def _psi_full_rank(L, offsets) -> bool:
    q = len(offsets)
    if 2 * (q * (q - 1) // 2 + 1) < L:
        return False
    psi = _psi_matrix(1.0, L, offsets)
    m = np.vstack([psi.real, psi.imag])
    s = np.linalg.svd(m, compute_uv=False)
    return s[-1] > 0 and (s[0] / s[-1]) ** 2 < 1e12


def segment_indices(L: int) -> np.ndarray:
    """``m_l = l - (L + 1) / 2`` for ``l = 1 .. L``."""
    return np.arange(1, L + 1) - (L + 1) // 2


def build_gamma(config: MultiCosetConfig) -> np.ndarray:
    """``q x L`` matrix ``(W/L) exp(-j 2 pi c_i m_l / L)``."""
    L, W = config.segments, config.nyquist_rate
    c = np.asarray(config.offsets)[:, None]
    return (W / L) * np.exp(-2j * np.pi * c * segment_indices(L)[None, :] / L)


def _psi_matrix(W, L, offsets) -> np.ndarray:
    c = np.asarray(offsets)
    pairs = channel_pairs(len(c))
    diff = np.array([c[a] - c[b] for a, b in pairs])[:, None]
    return (W / L) ** 2 * np.exp(-2j * np.pi * diff * segment_indices(L)[None, :] / L)


def build_psi(config: MultiCosetConfig) -> np.ndarray:
    """Complex ``Q x L`` map from segment powers to the used entries of ``R_z``."""
    return _psi_matrix(config.nyquist_rate, config.segments, config.offsets)


def build_psi_breve(config: MultiCosetConfig) -> np.ndarray:
    """``[Re Psi; Im Psi]`` stacked to ``2Q x L``."""
    psi = build_psi(config)
    return np.vstack([psi.real, psi.imag])


# --------------------------------------------------------------------------
# Fractional delay filters
# --------------------------------------------------------------------------


def lagrange_taps(delay: float, length: int) -> np.ndarray:
    """Lagrange interpolator: ``h[n] = prod_{k != n} (delay - k) / (n - k)``."""
    n = np.arange(length)
    h = np.ones(length)
    for k in range(length):
        mask = n != k
        h[mask] *= (delay - k) / (n[mask] - k)
    return h


def filter_energy(h: np.ndarray, N: int) -> float:
    """``H = (1/N) sum_m (N - m) h[m]^2``, truncated at ``m < N`` for short records."""
    m = np.arange(h.size)
    w = np.clip(N - m, 0, None)
    return float(np.sum(w * h**2) / N)


@dataclass(frozen=True)
class DelayFilterBank:
    """Per-channel normalised FIR delay filters (``q x N_h``) and energies ``H_a``."""

    taps: np.ndarray
    energies: np.ndarray
    delays: np.ndarray

    @property
    def filter_len(self) -> int:
        return self.taps.shape[1]


def design_delay_filters(config: MultiCosetConfig) -> DelayFilterBank:
    """Lagrange filters delaying channel ``a`` by ``c_a / L + D`` samples, unit l2 norm.

    Raises
    ------
    ConfigurationError
        If a total delay falls outside ``[0, N_h - 1]``.
    """
    nh, L = config.filter_len, config.segments
    if nh < 2:
        raise ConfigurationError("fractional delay filters need at least 2 taps")
    delays = np.array([c / L + config.integer_delay for c in config.offsets])
    if np.any(delays < 0) or np.any(delays > nh - 1):
        bad = delays[(delays < 0) | (delays > nh - 1)]
        raise ConfigurationError(
            f"delays {bad} outside the filter span [0, {nh - 1}]; "
            "use a longer filter or a smaller integer delay"
        )
    taps = np.array([lagrange_taps(d, nh) for d in delays])
    taps /= np.linalg.norm(taps, axis=1, keepdims=True)
    energies = np.array([filter_energy(h, config.samples_per_channel) for h in taps])
    return DelayFilterBank(taps=taps, energies=energies, delays=delays)


# --------------------------------------------------------------------------
# Sampling and estimation (batched over leading axes)
# --------------------------------------------------------------------------


def required_length(config: MultiCosetConfig) -> int:
    return (config.samples_per_channel - 1) * config.segments + max(config.offsets) + 1


def sample_signal(x, config: MultiCosetConfig) -> np.ndarray:
    """Channel outputs ``y[..., i, n] = x[..., n L + c_i]`` for ``n < N``.

    Raises
    ------
    BoundsError
        If the Nyquist record is too short.
    """
    x = np.asarray(x)
    need = required_length(config)
    if x.shape[-1] < need:
        raise BoundsError(
            f"Nyquist record has {x.shape[-1]} samples, need at least {need}", required=need
        )
    idx = (
        np.arange(config.samples_per_channel)[None, :] * config.segments
        + np.asarray(config.offsets)[:, None]
    )
    return x[..., idx]


def delay_channels(samples, filters: DelayFilterBank) -> np.ndarray:
    """Causal FIR filtering per channel, zero initial state, first ``N`` outputs kept."""
    samples = np.asarray(samples)
    n = samples.shape[-1]
    out = np.zeros(samples.shape, dtype=np.result_type(samples, float))
    for m in range(min(filters.filter_len, n)):
        out[..., m:] += filters.taps[:, m, None] * samples[..., : n - m]
    return out


def estimate_rz(samples, filters: DelayFilterBank, config: MultiCosetConfig) -> np.ndarray:
    """``R_z[a, b] = 2 pi W / (N L) * sum_n y_a^d(n) conj(y_b^d(n))``; Hermitian, real diagonal."""
    yd = delay_channels(samples, filters)
    scale = 2.0 * np.pi * config.nyquist_rate / (config.samples_per_channel * config.segments)
    r = scale * (yd @ np.swapaxes(yd.conj(), -1, -2))
    r = 0.5 * (r + np.swapaxes(r.conj(), -1, -2))
    q = config.q
    diag = np.arange(q)
    r = np.array(r, dtype=complex)
    r[..., diag, diag] = r[..., diag, diag].real
    return r


@dataclass(frozen=True)
class PowerEstimate:
    """Correlogram outputs; ``p_hat`` is the per-segment average power."""

    p_hat: np.ndarray
    v_hat: np.ndarray
    u_breve_hat: np.ndarray
    rz_hat: np.ndarray


def stack_u(rz: np.ndarray, config: MultiCosetConfig) -> np.ndarray:
    """``[Re u, Im u]`` from the used entries of ``R_z`` (pair order of :func:`channel_pairs`)."""
    a, b = np.array(config.pairs).T
    u = rz[..., a, b]
    return np.concatenate([u.real, u.imag], axis=-1)


def estimate_power(rz_hat, config: MultiCosetConfig, filters: DelayFilterBank) -> PowerEstimate:
    rz_hat = np.asarray(rz_hat)
    if rz_hat.shape[-2:] != (config.q, config.q):
        raise StructuralError(f"R_z must be {config.q} x {config.q}")
    u = stack_u(rz_hat, config)
    v = u @ config.psi_pinv.T
    p = config.nyquist_rate / (2.0 * np.pi * filters.energies[0]) * v
    return PowerEstimate(p_hat=p, v_hat=v, u_breve_hat=u, rz_hat=rz_hat)


def correlogram(x, config: MultiCosetConfig, filters: DelayFilterBank | None = None) -> PowerEstimate:
    """Sample, delay, correlate and invert in one call."""
    if filters is None:
        filters = design_delay_filters(config)
    return estimate_power(estimate_rz(sample_signal(x, config), filters, config), config, filters)


def white_gaussian(rng, shape, sigma2: float, complex_valued: bool = True) -> np.ndarray:
    """White Gaussian Nyquist-grid samples with ``E|x|^2 = sigma2``.

    The complex (circular) model is the default because the fourth-moment
    expressions used by :mod:`subnyquist.corranalysis` assume it.
    """
    if complex_valued:
        s = np.sqrt(sigma2 / 2.0)
        return s * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    return np.sqrt(sigma2) * rng.standard_normal(shape)
