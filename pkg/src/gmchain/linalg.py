"""Dense and block-tridiagonal linear algebra shared by the whole package.

Everything here works on plain float64 numpy arrays. The block-tridiagonal
routines exploit the chain structure of the planning posteriors: solving and
extracting marginal covariances cost O(n k^3) instead of O((n k)^3).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg


class SingularMatrixError(ValueError):
    """Raised when a dense solve meets a pivot that is zero to machine precision."""

    def __init__(self, pivot_index: int):
        self.pivot_index = pivot_index
        super().__init__(f"matrix is singular to machine precision at pivot {pivot_index}")


class NotPositiveDefiniteError(ValueError):
    """Raised when block elimination hits a non-positive-definite Schur complement."""

    def __init__(self, block_index: int):
        self.block_index = block_index
        super().__init__(f"matrix is not positive definite (failure in block {block_index})")


def as_vector(x, dim: int | None = None, name: str = "x") -> np.ndarray:
    """Validate and convert to a finite float64 1-D array."""
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise ValueError(f"{name} must have dimension {dim}, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite entries")
    return v


def as_matrix(a, shape: tuple[int, int] | None = None, name: str = "a") -> np.ndarray:
    """Validate and convert to a finite float64 2-D array."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    if shape is not None and m.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def matmul(a, b) -> np.ndarray:
    """Matrix product with an explicit inner-dimension check."""
    a = as_matrix(a, name="a")
    b = as_matrix(b, name="b")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"inner dimensions disagree: {a.shape} x {b.shape}")
    return a @ b


def dense_solve(a, b) -> np.ndarray:
    """Solve a x = b by LU with partial pivoting.

    Raises SingularMatrixError carrying the failing pivot index when the
    matrix is singular to machine precision.
    """
    a = as_matrix(a, name="a")
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"a must be square, got {a.shape}")
    b = np.asarray(b, dtype=np.float64)
    if b.shape[0] != a.shape[0]:
        raise ValueError(f"b has leading dimension {b.shape[0]}, expected {a.shape[0]}")
    with np.errstate(all="ignore"):
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # scipy warns instead of raising on exact zeros
            lu, piv = scipy.linalg.lu_factor(a, check_finite=False)
    diag = np.abs(np.diag(lu))
    tol = a.shape[0] * np.finfo(np.float64).eps * max(np.abs(a).max(), 1.0)
    bad = np.nonzero(diag <= tol)[0]
    if bad.size:
        raise SingularMatrixError(int(bad[0]))
    return scipy.linalg.lu_solve((lu, piv), b, check_finite=False)


@dataclass(frozen=True)
class BlockTridiagonal:
    """Block-tridiagonal matrix with n diagonal blocks of size k x k.

    ``lower[i]`` sits at block position (i+1, i) and ``upper[i]`` at (i, i+1).
    A symmetric positive definite assembled matrix (upper[i] == lower[i].T)
    is required by the solve/marginal routines below.
    """

    diag: np.ndarray   # (n, k, k)
    lower: np.ndarray  # (n-1, k, k)
    upper: np.ndarray  # (n-1, k, k)

    def __post_init__(self):
        d = np.asarray(self.diag, dtype=np.float64)
        lo = np.asarray(self.lower, dtype=np.float64).reshape((-1,) + d.shape[1:])
        up = np.asarray(self.upper, dtype=np.float64).reshape((-1,) + d.shape[1:])
        if d.ndim != 3 or d.shape[1] != d.shape[2]:
            raise ValueError(f"diag must be (n, k, k), got {d.shape}")
        n = d.shape[0]
        if lo.shape[0] != n - 1 or up.shape[0] != n - 1:
            raise ValueError("need exactly n-1 lower and upper blocks")
        for arr, label in ((d, "diag"), (lo, "lower"), (up, "upper")):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{label} blocks contain non-finite entries")
        object.__setattr__(self, "diag", d)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)

    @property
    def num_blocks(self) -> int:
        return self.diag.shape[0]

    @property
    def block_dim(self) -> int:
        return self.diag.shape[1]

    def to_dense(self) -> np.ndarray:
        n, k = self.num_blocks, self.block_dim
        out = np.zeros((n * k, n * k))
        for i in range(n):
            out[i * k:(i + 1) * k, i * k:(i + 1) * k] = self.diag[i]
        for i in range(n - 1):
            out[(i + 1) * k:(i + 2) * k, i * k:(i + 1) * k] = self.lower[i]
            out[i * k:(i + 1) * k, (i + 1) * k:(i + 2) * k] = self.upper[i]
        return out


def _forward_schur_factors(m: BlockTridiagonal):
    """Cholesky factors of the Schur complements from a forward block sweep.

    No pivoting across blocks; positive definiteness of the assembled matrix
    guarantees each Schur complement is itself positive definite.
    """
    factors = []
    s = m.diag[0]
    for i in range(m.num_blocks):
        if i:
            g = scipy.linalg.cho_solve(factors[i - 1], m.upper[i - 1], check_finite=False)
            s = m.diag[i] - m.lower[i - 1] @ g
        try:
            factors.append(scipy.linalg.cho_factor(s, lower=True, check_finite=False))
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefiniteError(i) from exc
    return factors


def block_tridiag_solve(m: BlockTridiagonal, rhs) -> np.ndarray:
    """Solve the assembled block-tridiagonal system for a stacked vector rhs."""
    n, k = m.num_blocks, m.block_dim
    r = as_vector(rhs, dim=n * k, name="rhs").reshape(n, k)
    factors = _forward_schur_factors(m)
    y = np.empty_like(r)
    y[0] = r[0]
    for i in range(1, n):
        y[i] = r[i] - m.lower[i - 1] @ scipy.linalg.cho_solve(
            factors[i - 1], y[i - 1], check_finite=False)
    x = np.empty_like(r)
    x[n - 1] = scipy.linalg.cho_solve(factors[n - 1], y[n - 1], check_finite=False)
    for i in range(n - 2, -1, -1):
        x[i] = scipy.linalg.cho_solve(
            factors[i], y[i] - m.upper[i] @ x[i + 1], check_finite=False)
    return x.reshape(n * k)


def block_tridiag_marginal_covs(m: BlockTridiagonal) -> np.ndarray:
    """Diagonal k x k blocks of the inverse of the assembled matrix.

    Backward recursion on the Schur complements; only the diagonal of the
    inverse is formed, keeping the cost at O(n k^3).
    """
    n = m.num_blocks
    k = m.block_dim
    factors = _forward_schur_factors(m)
    eye = np.eye(k)
    covs = np.empty((n, k, k))
    covs[n - 1] = scipy.linalg.cho_solve(factors[n - 1], eye, check_finite=False)
    for i in range(n - 2, -1, -1):
        g_up = scipy.linalg.cho_solve(factors[i], m.upper[i], check_finite=False)
        g_low = scipy.linalg.cho_solve(factors[i], m.lower[i].T, check_finite=False)
        covs[i] = scipy.linalg.cho_solve(factors[i], eye, check_finite=False) \
            + g_up @ covs[i + 1] @ g_low.T
    return covs


def pca_fit(data, num_components: int) -> tuple[np.ndarray, np.ndarray]:
    """Principal components of a point cloud.

    Returns (mean, components) where components has orthonormal rows ordered
    by descending explained variance. Signs are fixed so each component's
    largest-magnitude entry is positive, which keeps results reproducible.
    """
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"data must be (n_samples, dim), got shape {x.shape}")
    n, d = x.shape
    if n < 2:
        raise ValueError("need at least 2 samples for a covariance estimate")
    if not 1 <= num_components <= d:
        raise ValueError(f"num_components must be in [1, {d}], got {num_components}")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:num_components]
    components = eigvecs[:, order].T.copy()
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return mean, components


def nearest_neighbor(query, bank):
    """Payload of the bank entry closest to query in Euclidean distance.

    ``bank`` is a sequence of (vector, payload) pairs; ties resolve to the
    lowest index.
    """
    bank = list(bank)
    if not bank:
        raise ValueError("bank is empty")
    q = as_vector(query, name="query")
    vectors = np.asarray([np.asarray(v, dtype=np.float64) for v, _ in bank])
    idx = nearest_index(q[None, :], vectors)[0]
    return bank[idx][1]


def nearest_index(queries: np.ndarray, bank: np.ndarray, chunk: int = 256) -> np.ndarray:
    """Index of the nearest bank row for each query row.

    Distances are computed from explicit differences (not the expanded-norm
    shortcut) so exact ties resolve deterministically to the lowest index.
    """
    q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    b = np.asarray(bank, dtype=np.float64)
    if b.ndim != 2 or b.shape[0] == 0:
        raise ValueError("bank must be a nonempty (n, dim) array")
    if q.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: queries {q.shape[1]} vs bank {b.shape[1]}")
    out = np.empty(q.shape[0], dtype=np.intp)
    for start in range(0, q.shape[0], chunk):
        block = q[start:start + chunk]
        d2 = np.square(block[:, None, :] - b[None, :, :]).sum(axis=2)
        out[start:start + chunk] = np.argmin(d2, axis=1)
    return out
