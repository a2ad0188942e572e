"""Dense complex-matrix primitives.

Matrices are plain ``numpy`` arrays of dtype ``complex128``. Composite
indices follow one convention everywhere in the package: for a product
space A (x) B, the basis state ``(i, k)`` sits at position ``i * d_B + k``
(first factor slowest-varying), which is what ``numpy.kron`` produces.
"""
from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np

from .errors import DimensionMismatch, NotDensityMatrix, NotHermitian, NotPSD, NotSquare

HERMITICITY_TOL = 1e-8
SUPPORT_CUTOFF = 1e-10
PSD_TOL = 1e-8
TRACE_TOL = 1e-8


class HermEigen(NamedTuple):
    values: np.ndarray  # real, descending
    vectors: np.ndarray  # columns are eigenvectors


def as_cmatrix(m) -> np.ndarray:
    """Coerce ``m`` to a finite 2-D complex array."""
    a = np.asarray(m, dtype=np.complex128)
    if a.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def _require_square(a: np.ndarray) -> None:
    if a.shape[0] != a.shape[1]:
        raise NotSquare(f"matrix of shape {a.shape} is not square")


def hermitian_part(m, tol: float = HERMITICITY_TOL) -> np.ndarray:
    """Return ``(m + m^H)/2`` after checking ``m`` is Hermitian within ``tol``."""
    a = as_cmatrix(m)
    _require_square(a)
    dev = np.max(np.abs(a - a.conj().T)) if a.size else 0.0
    if dev > tol:
        raise NotHermitian(f"hermiticity violation {dev:.3e} exceeds {tol:.1e}")
    return 0.5 * (a + a.conj().T)


def herm_eig(m, tol: float = HERMITICITY_TOL) -> HermEigen:
    """Eigendecomposition of a Hermitian matrix, eigenvalues descending."""
    a = hermitian_part(m, tol)
    w, v = np.linalg.eigh(a)
    return HermEigen(w[::-1].copy(), v[:, ::-1].copy())


def support_cutoff(values: np.ndarray, rel: float = SUPPORT_CUTOFF) -> float:
    """Absolute eigenvalue threshold below which an eigenvalue counts as zero."""
    if values.size == 0:
        return 0.0
    return rel * max(float(np.max(values)), 0.0)


def support_mask(values: np.ndarray, rel: float = SUPPORT_CUTOFF) -> np.ndarray:
    return values > support_cutoff(values, rel)


def identity(d: int) -> np.ndarray:
    return np.eye(d, dtype=np.complex128)


def ket_projector(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.complex128).ravel()
    v = v / np.linalg.norm(v)
    return np.outer(v, v.conj())


def tensor(a, b) -> np.ndarray:
    """Kronecker product, first factor slowest-varying."""
    return np.kron(as_cmatrix(a), as_cmatrix(b))


def direct_sum(blocks: Sequence) -> np.ndarray:
    """Block-diagonal matrix with ``blocks`` along the diagonal, in order."""
    mats = [as_cmatrix(b) for b in blocks]
    for b in mats:
        _require_square(b)
    n = sum(b.shape[0] for b in mats)
    out = np.zeros((n, n), dtype=np.complex128)
    pos = 0
    for b in mats:
        k = b.shape[0]
        out[pos:pos + k, pos:pos + k] = b
        pos += k
    return out


def partial_trace(m, dims: tuple[int, int], keep: str = "first") -> np.ndarray:
    """Partial trace over one factor of a bipartite operator.

    Parameters
    ----------
    m : array_like
        Operator on a ``dims[0] * dims[1]`` dimensional space, indexed as
        in :func:`tensor`.
    dims : (int, int)
        Factor dimensions ``(d_A, d_B)``.
    keep : {"first", "second"}
        Which factor survives.
    """
    a = as_cmatrix(m)
    da, db = int(dims[0]), int(dims[1])
    if a.shape != (da * db, da * db):
        raise DimensionMismatch(f"matrix shape {a.shape} does not match dims {dims}")
    t = a.reshape(da, db, da, db)
    if keep == "first":
        return np.einsum("ikjk->ij", t)
    if keep == "second":
        return np.einsum("kikj->ij", t)
    raise ValueError(f"keep must be 'first' or 'second', got {keep!r}")


def _require_psd(eig: HermEigen, tol: float = PSD_TOL) -> None:
    if eig.values.size and eig.values[-1] < -tol * max(1.0, abs(eig.values[0])):
        raise NotPSD(f"smallest eigenvalue {eig.values[-1]:.3e} is negative")


def mat_power_it(rho, t: float) -> np.ndarray:
    """``rho**(i t)`` on the support of ``rho``, zero on its kernel."""
    eig = herm_eig(rho)
    _require_psd(eig)
    keep = support_mask(eig.values)
    phases = np.zeros(eig.values.shape, dtype=np.complex128)
    phases[keep] = np.exp(1j * t * np.log(eig.values[keep]))
    v = eig.vectors
    return (v * phases) @ v.conj().T


def mat_power(rho, power: float) -> np.ndarray:
    """Real power of a PSD matrix restricted to its support (negative powers allowed)."""
    eig = herm_eig(rho)
    _require_psd(eig)
    keep = support_mask(eig.values)
    vals = np.zeros(eig.values.shape)
    vals[keep] = eig.values[keep] ** power
    v = eig.vectors
    return (v * vals) @ v.conj().T


def support_projector(rho) -> np.ndarray:
    eig = herm_eig(rho)
    v = eig.vectors[:, support_mask(eig.values)]
    return v @ v.conj().T


def check_density_matrix(rho, tol: float = TRACE_TOL) -> HermEigen:
    """Validate a density matrix and return its eigendecomposition."""
    try:
        eig = herm_eig(rho)
        _require_psd(eig, tol)
    except (NotHermitian, NotPSD, NotSquare) as exc:
        raise NotDensityMatrix(str(exc)) from exc
    tr = float(np.sum(eig.values))
    if abs(tr - 1.0) > tol:
        raise NotDensityMatrix(f"trace {tr:.12g} differs from 1")
    return eig


def entropy_of_spectrum(values) -> float:
    """Shannon entropy in bits of a nonnegative spectrum (0 log 0 = 0)."""
    p = np.asarray(values, dtype=float)
    p = p[p > support_cutoff(p)]
    if p.size == 0:
        return 0.0
    return max(float(-np.sum(p * np.log2(p))), 0.0) + 0.0


def vn_entropy(rho) -> float:
    """Von Neumann entropy in bits."""
    eig = check_density_matrix(rho)
    return entropy_of_spectrum(eig.values)


def trace_distance(rho, sigma) -> float:
    a = as_cmatrix(rho)
    b = as_cmatrix(sigma)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes {a.shape} and {b.shape} differ")
    diff = a - b
    diff = 0.5 * (diff + diff.conj().T)
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(diff))))


def commutator(a, b) -> np.ndarray:
    return a @ b - b @ a


def fix_phase(v: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude entry is real positive."""
    v = np.array(v, dtype=np.complex128, copy=True)
    for j in range(v.shape[1]):
        col = v[:, j]
        k = int(np.argmax(np.abs(col) - 1e-12 * np.arange(col.size)))
        if abs(col[k]) > 0:
            v[:, j] = col * (abs(col[k]) / col[k])
    return v


def canonical_eigenbasis(rho) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-pairs of a Hermitian matrix, descending, with phases fixed by :func:`fix_phase`."""
    eig = herm_eig(rho)
    return eig.values, fix_phase(eig.vectors)


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR of a complex Ginibre matrix."""
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph
