"""Dense complex linear algebra used throughout the package.

Everything here is a thin, contract-checked layer over LAPACK (via numpy).
The one non-trivial routine is :func:`gev_regularized`, which solves
``h v = E n v`` for a Hermitian ``h`` and a positive *semi*-definite metric
``n`` by discarding the (numerically) singular directions of ``n`` and
whitening the rest.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError

HERMITIAN_TOL = 1e-12
PSD_TOL = 1e-10


@dataclass(frozen=True)
class EigenSystem:
    values: np.ndarray
    vectors: np.ndarray


@dataclass(frozen=True)
class GevResult:
    """Solution of a regularized generalized eigenproblem.

    ``vectors[:, i]`` belongs to ``values[i]`` and is normalized so that
    ``v^† n v = 1``; ``metric_norms`` holds ``v^† n v`` as measured before
    that final rescaling, which drifts away from 1 when ``n`` is badly
    conditioned on the kept subspace.
    """

    values: np.ndarray
    vectors: np.ndarray
    metric_norms: np.ndarray
    discarded: int
    metric_spectrum: np.ndarray

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        for i in range(len(self.values)):
            yield self.values[i], self.vectors[:, i], self.metric_norms[i]


def asymmetry(m: np.ndarray) -> float:
    """``max|m - m^†|`` relative to ``max|m|`` (0 for the zero matrix)."""
    m = np.asarray(m)
    scale = np.max(np.abs(m)) if m.size else 0.0
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(m - m.conj().T)) / scale)


def _check_square(m, name):
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {m.shape}", name)
    if not np.all(np.isfinite(m)):
        raise ValidationError("matrix has non-finite entries", name)
    return m


def check_hermitian(m, name="matrix", tol=HERMITIAN_TOL):
    m = _check_square(m, name)
    asym = asymmetry(m)
    if asym > tol:
        raise ValidationError(f"not Hermitian: relative asymmetry {asym:.3e} > {tol:.1e}", name)
    return m


def hermitize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.conj().T)


def hermitian_eig(m, tol=HERMITIAN_TOL) -> EigenSystem:
    """Full ascending spectrum and orthonormal eigenvectors of a Hermitian matrix."""
    m = check_hermitian(m, tol=tol)
    w, v = np.linalg.eigh(hermitize(m))
    return EigenSystem(w, v)


def svd(m):
    """Thin SVD ``m = U diag(s) V^†``; returns ``(U, s, V)`` with ``s`` descending."""
    m = np.asarray(m)
    if m.ndim != 2:
        raise ValidationError(f"expected a matrix, got shape {m.shape}", "m")
    try:
        u, s, vh = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD failed to converge: {exc}") from exc
    return u, s, vh.conj().T


def gev_regularized(h, n, eps=1e-11, tol=1e-10) -> GevResult:
    """Solve ``h v = E n v`` restricted to the well-conditioned part of ``n``.

    Directions whose metric eigenvalue is ``<= eps * lambda_max(n)`` are
    dropped.  On the kept subspace ``n`` is whitened with ``n^{-1/2}`` so the
    reduced problem stays Hermitian and is handed to ``eigh``.

    Parameters
    ----------
    h, n : (M, M) complex arrays
        Hermitian matrices; ``n`` must be positive semi-definite up to
        ``-tol * ||n||``.
    eps : float
        Relative cutoff for the metric spectrum.
    tol : float
        Hermiticity tolerance (relative to the largest entry).
    """
    h = check_hermitian(h, "h", tol)
    n = check_hermitian(n, "n", tol)
    if h.shape != n.shape:
        raise ValidationError(f"shape mismatch {h.shape} vs {n.shape}", "n")
    if eps < 0:
        raise ValidationError("cutoff must be non-negative", "eps")

    w, u = np.linalg.eigh(hermitize(n))
    lam_max = w[-1]
    norm = np.max(np.abs(w))
    if lam_max <= 0.0:
        raise NumericalError("fully singular metric: no positive eigenvalue")
    if w[0] < -PSD_TOL * norm:
        raise NumericalError(
            f"metric is not positive semi-definite: eigenvalue {w[0]:.6e} "
            f"(largest {lam_max:.6e})"
        )

    keep = w > eps * lam_max
    if not np.any(keep):
        raise NumericalError("fully singular metric: every eigenvalue is below the cutoff")
    x = u[:, keep] / np.sqrt(w[keep])
    reduced = hermitize(x.conj().T @ hermitize(h) @ x)
    vals, y = np.linalg.eigh(reduced)
    vecs = x @ y

    metric_norms = np.real(np.einsum("ij,ik,kj->j", vecs.conj(), n, vecs))
    vecs = vecs / np.sqrt(metric_norms)
    return GevResult(
        values=vals,
        vectors=vecs,
        metric_norms=metric_norms,
        discarded=int(np.count_nonzero(~keep)),
        metric_spectrum=w,
    )
