"""Dense linear algebra kernels and low-rank diagnostics.

Matrices are plain 2-D float64 ``numpy`` arrays (row major, finite
entries); :func:`as_matrix` is the single validation gate. Factorizations
are delegated to LAPACK through numpy/scipy, which is deterministic for a
fixed input within one process. Randomness comes exclusively from
:class:`RngStream`, a counter-based (Philox) generator keyed by
``(seed, stream key)`` so that sample j of patch m is the same no matter
in which order the streams are consumed.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg

from .errors import ParameterError, RankDeficiencyError, SvdConvergenceError

_MASK64 = (1 << 64) - 1


def as_matrix(a, name="a"):
    """Validate and return ``a`` as a 2-D finite float64 array."""
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 2:
        raise ParameterError(f"{name} must be 2-dimensional, got ndim={arr.ndim}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ParameterError(f"{name} must have at least one row and column")
    if not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} contains non-finite entries")
    return arr


def as_vector(b, name="b"):
    arr = np.asarray(b, dtype=float).reshape(-1)
    if arr.size < 1:
        raise ParameterError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD ``a = u @ diag(sigma) @ v.T`` with sigma descending."""

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray


def svd(a):
    """Thin singular value decomposition of a dense matrix.

    Returns u (m x r), sigma (length r, descending) and v (n x r) with
    r = min(m, n); columns of u and v are orthonormal.
    """
    a = as_matrix(a)
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError:
        # gesdd occasionally fails on gnarly inputs; retry with the
        # slower but more robust QR-iteration driver before giving up.
        try:
            u, s, vt = scipy.linalg.svd(a, full_matrices=False,
                                        lapack_driver="gesvd")
        except Exception as exc:
            cap = 30 * min(a.shape)
            raise SvdConvergenceError(f"SVD failed to converge: {exc}", cap) from exc
    return SvdResult(u=u, sigma=s, v=vt.T)


def spectral_norm(a):
    """Largest singular value (computed via svd, not power iteration)."""
    return float(svd(a).sigma[0])


def qr(a):
    """Thin Householder QR of a tall matrix (m >= n), no pivoting.

    Rank-deficient inputs are not rejected: deficiency shows up as
    near-zero diagonal entries of r, which callers inspect.
    """
    a = as_matrix(a)
    m, n = a.shape
    if m < n:
        raise ParameterError(f"qr requires m >= n, got shape {a.shape}")
    q, r = np.linalg.qr(a)
    return q, r


def solve_least_squares(a, b, rank_rtol=1e-12):
    """Least-squares solution of min ||a x - b||_2 via Householder QR.

    ``a`` must be square or tall with full column rank within
    ``rank_rtol * sigma_1``; otherwise a :class:`RankDeficiencyError`
    carrying the numerical rank is raised and the caller decides the
    fallback. The QR route avoids forming the normal equations, whose
    condition number would be squared.
    """
    a = as_matrix(a)
    b = as_vector(b)
    m, n = a.shape
    if m < n:
        raise ParameterError(f"least squares needs rows >= cols, got {a.shape}")
    if b.shape[0] != m:
        raise ParameterError(f"rhs length {b.shape[0]} does not match {m} rows")
    q, r = np.linalg.qr(a)
    diag = np.abs(np.diag(r))
    dmax = diag.max()
    if dmax == 0.0 or diag.min() <= rank_rtol * dmax:
        sig = np.linalg.svd(a, compute_uv=False)
        rank = int(np.count_nonzero(sig > rank_rtol * sig[0]))
        raise RankDeficiencyError(
            f"matrix {a.shape} is rank deficient (numerical rank {rank} of {n})",
            numerical_rank=rank)
    return scipy.linalg.solve_triangular(r, q.T @ b)


def randomized_range(apply_a, n_cols, k, p, rng):
    """Orthonormal basis for the range sketch Y = A @ Omega.

    ``apply_a`` supplies the action of A on a block of test vectors;
    Omega is n_cols x (k + p) with i.i.d. standard normal entries, column
    i drawn from ``rng.substream(i)`` so the sketch is reproducible and
    independent of evaluation order. Returns Q with k + p orthonormal
    columns.
    """
    if k < 2:
        raise ParameterError(f"target rank k must be >= 2, got {k}")
    if p < 2:
        raise ParameterError(f"oversampling p must be >= 2, got {p}")
    if k + p > n_cols:
        raise ParameterError(f"k + p = {k + p} exceeds n_cols = {n_cols}")
    omega = rng.normal_matrix(n_cols, k + p)
    y = as_matrix(np.asarray(apply_a(omega), dtype=float), name="A @ Omega")
    q, _ = qr(y)
    return q


def average_range_error_bound(sigma, k, p):
    """Expected spectral-norm bound for the randomized range finder.

    (1 + k/(p-1)) sigma_{k+1} + e sqrt(k+p)/p * sqrt(sum_{j>k} sigma_j^2).
    """
    sigma = np.asarray(sigma, dtype=float)
    tail = sigma[k:]
    return float((1.0 + k / (p - 1.0)) * tail[0]
                 + np.e * np.sqrt(k + p) / p * np.sqrt(np.sum(tail ** 2)))


def projection_error(g_full, basis):
    """Relative spectral-norm residual ||G - Q Q^T G||_2 / ||G||_2."""
    g = as_matrix(g_full, name="g_full")
    q = as_matrix(basis, name="basis")
    if q.shape[0] != g.shape[0]:
        raise ParameterError(
            f"basis rows {q.shape[0]} do not match matrix rows {g.shape[0]}")
    gram_err = np.max(np.abs(q.T @ q - np.eye(q.shape[1])))
    if gram_err > 1e-8:
        raise ParameterError(f"basis columns not orthonormal (|Q^T Q - I| = {gram_err:.3e})")
    den = spectral_norm(g)
    if den == 0.0:
        raise ParameterError("projection error undefined for zero matrix")
    num = spectral_norm(g - q @ (q.T @ g))
    return num / den


def _check_sigma(sigma):
    sigma = as_vector(sigma, name="sigma")
    if np.any(sigma < 0):
        raise ParameterError("sigma must be non-negative")
    if np.any(np.diff(sigma) > 1e-12 * max(sigma[0], 1.0)):
        raise ParameterError("sigma must be sorted in descending order")
    return sigma


def numerical_rank(sigma, tau, normalize=False):
    """Numerical tau-rank of a matrix with singular values ``sigma``.

    For matrices the minimizing rank-k operator is the SVD truncation, so
    the rank is the count of singular values exceeding the threshold
    (tau absolute, or tau * sigma_1 when ``normalize``).
    """
    sigma = _check_sigma(sigma)
    if tau <= 0:
        raise ParameterError(f"tau must be positive, got {tau}")
    thresh = tau * sigma[0] if normalize else tau
    return int(np.count_nonzero(sigma > thresh))


def kolmogorov_width(sigma, n):
    """Kolmogorov N-width of a matrix in spectral norm: sigma_{n+1}."""
    sigma = _check_sigma(sigma)
    if n < 0 or n > sigma.size:
        raise ParameterError(f"n must lie in [0, {sigma.size}], got {n}")
    return float(sigma[n]) if n < sigma.size else 0.0


def _splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class RngStream:
    """Value-semantic random stream keyed by (seed, hierarchical key).

    Streams are forked with :meth:`substream`; each draw derives a fresh
    Philox generator from the key, so equal (seed, key) always reproduce
    identical values regardless of interleaving across patches or
    threads. Gaussian variates use the Marsaglia polar transform on
    Philox uniforms, which pins the exact output for a given platform
    float model.
    """

    seed: int
    key: tuple = ()

    def substream(self, *parts):
        return RngStream(self.seed, self.key + tuple(int(p) for p in parts))

    @cached_property
    def _philox_key(self):
        acc = _splitmix64(self.seed & _MASK64)
        for part in self.key:
            acc = _splitmix64(acc ^ _splitmix64(part & _MASK64))
        return np.array([self.seed & _MASK64, acc], dtype=np.uint64)

    def _generator(self):
        return np.random.Generator(np.random.Philox(key=self._philox_key))

    def uniform(self, n):
        """n uniforms in [0, 1); a pure function of (seed, key, n)."""
        return self._generator().random(int(n))

    def standard_normal(self, n):
        """n standard normals via polar rejection; pure in (seed, key, n)."""
        n = int(n)
        gen = self._generator()
        out = np.empty(n)
        count = 0
        while count < n:
            need = n - count
            # acceptance rate is pi/4; oversize the candidate batch a bit
            batch = max(8, (need // 2) + 1 + (need // 4))
            u = 2.0 * gen.random((batch, 2)) - 1.0
            s = u[:, 0] ** 2 + u[:, 1] ** 2
            keep = (s > 0.0) & (s < 1.0)
            us = u[keep]
            ss = s[keep]
            if ss.size == 0:
                continue
            f = np.sqrt(-2.0 * np.log(ss) / ss)
            vals = np.empty(2 * ss.size)
            vals[0::2] = us[:, 0] * f
            vals[1::2] = us[:, 1] * f
            take = min(vals.size, need)
            out[count:count + take] = vals[:take]
            count += take
        return out

    def normal_matrix(self, rows, cols, first_stream=0):
        """rows x cols Gaussian matrix, column j from substream(first_stream + j)."""
        columns = [self.substream(first_stream + j).standard_normal(rows)
                   for j in range(cols)]
        return np.column_stack(columns)
