"""Dense linear-algebra kernels used throughout the package.

Everything here is a thin, contract-checking layer over LAPACK (through
:mod:`numpy.linalg`).  The wrappers exist to pin down ordering, condition
limits and error types so that the estimators built on top behave
deterministically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np
import scipy.linalg

from .errors import NumericalError, SingularityError, StructuralError

#: Matrices whose 2-norm condition number exceeds this are treated as singular.
COND_LIMIT = 1e12

HERMITIAN_RTOL = 1e-10


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigen-pairs of a Hermitian matrix.

    ``eigenvalues`` are real and sorted in descending order; column ``i`` of
    ``eigenvectors`` belongs to ``eigenvalues[i]``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


@dataclass(frozen=True)
class PolynomialRoots:
    """Roots of a polynomial given by ascending-degree coefficients."""

    coefficients: np.ndarray
    roots: np.ndarray

    def residuals(self) -> np.ndarray:
        """|p(r)| for each root ``r``."""
        return np.abs(np.polyval(self.coefficients[::-1], self.roots))


def is_hermitian(a: np.ndarray, rtol: float = HERMITIAN_RTOL) -> bool:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return False
    scale = np.max(np.abs(a)) if a.size else 0.0
    return bool(np.max(np.abs(a - a.conj().T), initial=0.0) <= rtol * scale)


def hermitian_eig(a, check: bool = True, top: int | None = None) -> EigenDecomposition:
    """Eigendecomposition of a Hermitian matrix, eigenvalues descending.

    Ties keep the order in which LAPACK reported them (ascending index
    order reversed stably), so signal/noise subspace splits are reproducible.
    With ``top=k`` only the ``k`` largest eigenpairs are computed.

    Raises
    ------
    StructuralError
        If ``a`` is not square or not Hermitian within ``HERMITIAN_RTOL``.
    NumericalError
        If LAPACK fails to converge.
    """
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise StructuralError(f"hermitian_eig needs a square matrix, got shape {a.shape}")
    if check and not is_hermitian(a):
        raise StructuralError("hermitian_eig input is not Hermitian")
    n = a.shape[0]
    try:
        if top is None or top >= n:
            w, v = np.linalg.eigh(a)
        else:
            w, v = scipy.linalg.eigh(a, subset_by_index=[n - top, n - 1], check_finite=False)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:  # pragma: no cover - LAPACK failure
        raise NumericalError(f"eigh failed to converge: {exc}", iterations=None) from exc
    order = np.argsort(-w, kind="stable")
    return EigenDecomposition(eigenvalues=w[order], eigenvectors=v[:, order])


def least_squares(b, y) -> np.ndarray:
    """Return ``argmin_d ||y - B d||_2`` for a tall, full-column-rank ``B``.

    Raises
    ------
    StructuralError
        If ``B`` has more columns than rows or the shapes disagree.
    SingularityError
        If ``cond(B)**2`` (the conditioning of the normal equations) exceeds
        ``COND_LIMIT``.
    """
    b = np.asarray(b)
    y = np.asarray(y)
    if b.ndim != 2:
        raise StructuralError("least_squares needs a 2-D system matrix")
    m, n = b.shape
    if m < n:
        raise StructuralError(f"least_squares needs rows >= cols, got {b.shape}")
    if y.shape[0] != m:
        raise StructuralError(f"right-hand side has {y.shape[0]} rows, matrix has {m}")
    d, _, _, s = np.linalg.lstsq(b, y, rcond=None)
    cond = np.inf if s[-1] == 0 else (s[0] / s[-1]) ** 2
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularityError(
            f"B^H B is singular to working precision (cond={cond:.3e})", condition=cond
        )
    return d


def real_pseudoinverse(m, label: str = "matrix") -> np.ndarray:
    """``(M^T M)^{-1} M^T`` for a real matrix with full column rank.

    Computed through the SVD, which equals the normal-equation form whenever
    the rank condition holds.
    """
    m = np.asarray(m)
    if np.iscomplexobj(m):
        raise StructuralError("real_pseudoinverse expects a real matrix")
    if m.ndim != 2 or m.shape[0] < m.shape[1]:
        raise StructuralError(f"{label} must be tall (rows >= cols), got shape {m.shape}")
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    cond = np.inf if s[-1] == 0 else (s[0] / s[-1]) ** 2
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularityError(
            f"{label} is rank deficient (cond of normal matrix {cond:.3e})", condition=cond
        )
    return (vt.T / s) @ u.T


def real_times_complex(m: np.ndarray, z: np.ndarray) -> np.ndarray:
    """``m @ z`` for real ``m`` and complex ``z`` without promoting ``m`` to complex."""
    z = np.ascontiguousarray(z, dtype=complex)
    if z.ndim == 1:
        return np.ascontiguousarray(m @ z.view(float).reshape(-1, 2)).view(complex).ravel()
    k = z.shape[1]
    return np.ascontiguousarray(m @ z.view(float).reshape(z.shape[0], 2 * k)).view(complex)


def companion_matrix(coefficients) -> np.ndarray:
    """Companion matrix of a monic-normalised polynomial (ascending coefficients)."""
    c = np.asarray(coefficients, dtype=complex)
    n = c.size - 1
    comp = np.zeros((n, n), dtype=complex)
    comp[1:, :-1] = np.eye(n - 1)
    comp[:, -1] = -c[:-1] / c[-1]
    return comp


def poly_roots(coefficients, method: str = "companion") -> PolynomialRoots:
    """All roots of ``sum_k c[k] z**k``.

    Trailing (highest-degree) zero coefficients are trimmed first.  Leading
    zeros (roots at the origin) are kept, so the returned root count always
    equals the trimmed degree.

    ``method="companion"`` takes the eigenvalues of the companion matrix
    (O(n^3)).  ``method="aberth"`` runs Aberth-Ehrlich simultaneous
    iteration (O(n^2) per sweep); if it fails to converge the companion
    result is returned instead, so both methods have the same contract.
    """
    c = np.atleast_1d(np.asarray(coefficients, dtype=complex))
    if c.ndim != 1 or not np.any(c != 0):
        raise StructuralError("poly_roots needs at least one nonzero coefficient")
    last = np.flatnonzero(c)[-1]
    c = c[: last + 1]
    if c.size < 2:
        raise StructuralError("poly_roots needs a polynomial of degree >= 1")
    if method == "aberth":
        roots = _aberth_roots(c)
        if roots is not None:
            return PolynomialRoots(coefficients=c, roots=roots)
    elif method != "companion":
        raise StructuralError(f"unknown root-finding method {method!r}")
    roots = np.linalg.eigvals(companion_matrix(c))
    return PolynomialRoots(coefficients=c, roots=roots)


def _aberth_roots(c: np.ndarray, max_sweeps: int = 200):
    n = c.size - 1
    nz = np.flatnonzero(c)[0]
    # exact zero roots are split off so the iteration never starts at a root
    core = c[nz:]
    m = core.size - 1
    if m == 0:
        return np.zeros(n, dtype=complex)
    radius = np.abs(core[0] / core[-1]) ** (1.0 / m)
    z = radius * np.exp(1j * (2.0 * np.pi * np.arange(m) / m + 0.4))
    sweeps = _aberth(core, z, 4.0 * np.finfo(float).eps, max_sweeps)
    if sweeps < 0 or not np.all(np.isfinite(z)):
        return None
    return np.concatenate([z, np.zeros(nz, dtype=complex)])


@nb.njit(cache=True)
def _newton_ratio(c, z):
    # p(z)/p'(z) for ascending coefficients c, evaluated in a scale-safe way
    n = c.size - 1
    if abs(z) <= 1.0:
        p = c[n]
        dp = 0.0j
        for k in range(n - 1, -1, -1):
            dp = dp * z + p
            p = p * z + c[k]
        if dp == 0:
            return p, True
        return p / dp, p == 0
    w = 1.0 / z
    q = c[0]
    dq = 0.0j
    for k in range(1, n + 1):
        dq = dq * w + q
        q = q * w + c[k]
    # p(z) = z^n q(w),  p'(z) = z^(n-1) (n q(w) - w q'(w))
    den = n * q - w * dq
    if den == 0:
        return q, True
    return z * q / den, q == 0


@nb.njit(cache=True)
def _aberth(c, z, tol, max_sweeps):
    n = z.size
    done = np.zeros(n, dtype=np.bool_)
    for sweep in range(max_sweeps):
        n_done = 0
        for k in range(n):
            if done[k]:
                n_done += 1
                continue
            ratio, exact = _newton_ratio(c, z[k])
            if exact:
                done[k] = True
                continue
            zk = z[k]
            sr = 0.0
            si = 0.0
            for j in range(n):
                if j != k:
                    dr = zk.real - z[j].real
                    di = zk.imag - z[j].imag
                    inv = 1.0 / (dr * dr + di * di)
                    sr += dr * inv
                    si -= di * inv
            s = complex(sr, si)
            step = ratio / (1.0 - ratio * s)
            z[k] -= step
            if abs(step) <= tol * max(abs(z[k]), 1e-300):
                done[k] = True
        if n_done == n:
            return sweep
    return -1
