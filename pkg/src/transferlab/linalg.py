"""Dense matrix kernel: products, Jacobi decompositions, distances.

Matrices are 2-D float64 numpy arrays throughout the package.  The
decompositions are one-sided Jacobi SVD and cyclic Jacobi symmetric
eigensolution — simple, very accurate at the few-hundred-row scale this
package operates on, and free of any dependence on BLAS threading, so
results are bit-identical no matter how many worker threads the caller
uses.  Rotations are applied one round-robin "round" at a time: the pairs
inside a round are disjoint, so their rotations commute and can be applied
as one vectorized update.

``matmul`` deliberately routes through ``np.einsum`` rather than ``@`` for
the same reason: einsum's single-threaded reduction keeps products
bitwise reproducible regardless of the BLAS the interpreter happens to
link against.
"""

import functools
from typing import NamedTuple

import numpy as np

from .errors import ContractError, NumericError, ShapeError

SWEEP_CAP = 100          # Jacobi sweeps before giving up
OFFDIAG_TOL = 1e-12      # relative off-diagonal convergence threshold
RANK_TOL = 1e-12         # singular values below RANK_TOL*max(s) count as zero


class SvdResult(NamedTuple):
    u: np.ndarray   # left singular vectors, orthonormal columns
    s: np.ndarray   # singular values, descending, >= 0
    vt: np.ndarray  # right singular vectors, transposed


def as_matrix(a, name="matrix"):
    """Coerce to a 2-D float64 array, rejecting other shapes."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


def matmul(a, b):
    """Matrix product with explicit shape checking.

    Args:
        a: (m, k) matrix.
        b: (k, n) matrix.

    Returns:
        (m, n) product, bit-deterministic across threads.
    """
    a = as_matrix(a, "matmul left operand")
    b = as_matrix(b, "matmul right operand")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"matmul dimension mismatch: {a.shape} x {b.shape}"
        )
    return np.einsum("ik,kj->ij", a, b)


def center_columns(a):
    """Return a copy of ``a`` with each column shifted to mean zero.

    Two subtraction passes keep the residual mean far below 1e-12 even
    when the raw column mean is large (e.g. a year column near 2017).
    """
    a = as_matrix(a)
    if a.shape[0] < 1:
        raise ShapeError("center_columns requires at least one row")
    out = a - a.mean(axis=0)
    return out - out.mean(axis=0)


def pairwise_euclidean(x, y, block=256):
    """All Euclidean distances between rows of ``x`` and rows of ``y``.

    Computed from explicit row differences (never the expanded
    ``|x|^2+|y|^2-2xy`` form), which keeps every entry nonnegative and
    makes pairwise(x, y) exactly the transpose of pairwise(y, x).
    Row blocks bound the temporary to ``block * len(y) * dim`` floats.
    """
    x = as_matrix(x, "pairwise x")
    y = as_matrix(y, "pairwise y")
    if x.shape[1] != y.shape[1]:
        raise ShapeError(
            f"pairwise_euclidean feature mismatch: {x.shape[1]} vs {y.shape[1]}"
        )
    out = np.empty((x.shape[0], y.shape[0]))
    for i0 in range(0, x.shape[0], block):
        d = x[i0:i0 + block, None, :] - y[None, :, :]
        out[i0:i0 + block] = np.sqrt(np.einsum("ijk,ijk->ij", d, d))
    return out


@functools.lru_cache(maxsize=128)
def _round_robin(n):
    """Round-robin tournament schedule for n items.

    Returns a tuple of rounds; each round is a pair of index arrays
    (p, q) describing disjoint pairs that jointly cover all C(n,2) pairs
    across the n-1 (or n) rounds.  Odd n is padded with a dummy item
    whose pairings are dropped.
    """
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        ps, qs = [], []
        for i in range(m // 2):
            a, b = players[i], players[m - 1 - i]
            if a < n and b < n:
                ps.append(a)
                qs.append(b)
        if ps:
            rounds.append((np.array(ps, dtype=np.intp), np.array(qs, dtype=np.intp)))
        players = [players[0], players[-1]] + players[1:-1]
    return tuple(rounds)


def _jacobi_tangent(zeta):
    """Stable smaller-root tangent of the Jacobi rotation angle."""
    sign = np.where(zeta >= 0.0, 1.0, -1.0)
    az = np.abs(zeta)
    big = az > 1e154  # zeta**2 would overflow; use the asymptotic root
    az_safe = np.where(big, 1.0, az)
    t = sign / (az_safe + np.sqrt(1.0 + az_safe * az_safe))
    with np.errstate(over="ignore"):  # 2*az may saturate to inf; quotient -> 0
        return np.where(big, sign / (2.0 * np.where(big, az, 1.0)), t)


def _one_sided_jacobi(w):
    """Orthogonalize the columns of tall matrix ``w`` in place.

    Returns the accumulated right-rotation matrix v with w_in = w_out @ v.T
    (columns of w_out orthogonal, norms = singular values).
    """
    m, n = w.shape
    v = np.eye(n)
    if n < 2:
        return v
    rounds = _round_robin(n)
    # numerical-rank deflation scale: columns whose norm falls this far
    # below the (rotation-invariant) Frobenius norm are null-space noise;
    # left alone, such columns stay ~100% mutually correlated at ever
    # smaller magnitudes and the relative criterion below never settles
    dead2 = 1e-28 * float(np.einsum("ij,ij->", w, w))
    for _sweep in range(SWEEP_CAP):
        norms2 = np.einsum("ij,ij->j", w, w)
        w[:, norms2 <= dead2] = 0.0
        rotated = False
        for p_idx, q_idx in rounds:
            wp = w[:, p_idx]
            wq = w[:, q_idx]
            app = np.einsum("ij,ij->j", wp, wp)
            aqq = np.einsum("ij,ij->j", wq, wq)
            apq = np.einsum("ij,ij->j", wp, wq)
            need = np.abs(apq) > OFFDIAG_TOL * np.sqrt(app * aqq)
            if not np.any(need):
                continue
            rotated = True
            denom = np.where(need, 2.0 * apq, 1.0)
            with np.errstate(over="ignore"):  # subnormal denom; guarded above
                zeta = np.where(need, (aqq - app) / denom, 0.0)
            t = np.where(need, _jacobi_tangent(zeta), 0.0)
            cs = 1.0 / np.sqrt(1.0 + t * t)
            sn = t * cs
            w[:, p_idx] = cs * wp - sn * wq
            w[:, q_idx] = sn * wp + cs * wq
            vp = v[:, p_idx]
            vq = v[:, q_idx]
            v[:, p_idx] = cs * vp - sn * vq
            v[:, q_idx] = sn * vp + cs * vq
        if not rotated:
            return v
    raise NumericError(
        f"one-sided Jacobi SVD did not converge in {SWEEP_CAP} sweeps",
        iterations=SWEEP_CAP,
    )


def _complete_basis(u, filled):
    """Fill unfilled columns of ``u`` with orthonormal completions."""
    m = u.shape[0]
    cols = np.nonzero(filled)[0]
    b = u[:, cols].copy()
    for j in np.nonzero(~filled)[0]:
        if b.shape[1]:
            # canonical vector least represented in the current basis
            k = int(np.argmin(np.einsum("ij,ij->i", b, b)))
        else:
            k = 0
        vec = np.zeros(m)
        vec[k] = 1.0
        for _ in range(2):  # twice-is-enough re-orthogonalization
            vec -= np.einsum("ij,j->i", b, np.einsum("ij,i->j", b, vec))
        vec /= np.sqrt(np.einsum("i,i->", vec, vec))
        u[:, j] = vec
        b = np.concatenate([b, vec[:, None]], axis=1)
    return u


def svd(a):
    """Thin SVD via one-sided Jacobi rotations.

    Returns:
        SvdResult(u, s, vt) with u (m, k), s (k,) descending, vt (k, n)
        where k = min(m, n); u.s.vt reconstructs ``a`` to ~1e-15 relative.

    Raises:
        NumericError: non-finite input or no convergence in SWEEP_CAP sweeps.
    """
    a = as_matrix(a, "svd input")
    if a.size == 0:
        raise ShapeError("svd input must be non-empty")
    if not np.isfinite(a).all():
        raise NumericError("svd input contains non-finite entries")
    transpose = a.shape[0] < a.shape[1]
    w = np.array(a.T if transpose else a)
    v = _one_sided_jacobi(w)
    s_all = np.sqrt(np.einsum("ij,ij->j", w, w))
    order = np.argsort(-s_all, kind="stable")
    s = s_all[order]
    w = w[:, order]
    v = v[:, order]
    u = np.zeros_like(w)
    nonzero = s > 0.0
    if np.any(nonzero):
        u[:, nonzero] = w[:, nonzero] / s[nonzero]
    if not nonzero.all():
        u = _complete_basis(u, nonzero)
    if transpose:
        return SvdResult(v, s, u.T)
    return SvdResult(u, s, v.T)


def sym_eig(a):
    """Eigendecomposition of a symmetric matrix via cyclic Jacobi.

    Args:
        a: square matrix, symmetric to ~1e-10.

    Returns:
        (eigenvalues descending, eigenvector matrix with matching columns).

    Raises:
        ContractError: non-square or asymmetric input.
        NumericError: non-finite input or no convergence.
    """
    a = as_matrix(a, "sym_eig input")
    n, n2 = a.shape
    if n != n2:
        raise ContractError(f"sym_eig requires a square matrix, got {a.shape}")
    if n == 0:
        raise ShapeError("sym_eig input must be non-empty")
    if not np.isfinite(a).all():
        raise NumericError("sym_eig input contains non-finite entries")
    scale = np.abs(a).max()
    if np.abs(a - a.T).max() > 1e-10 * max(1.0, scale):
        raise ContractError("sym_eig input is not symmetric within 1e-10")
    w = (a + a.T) / 2.0
    v = np.eye(n)
    if n == 1:
        return w[0, 0:1].copy(), v
    fro = np.sqrt(np.einsum("ij,ij->", w, w))
    if fro == 0.0:
        return np.zeros(n), v
    thresh = OFFDIAG_TOL * fro
    rounds = _round_robin(n)
    converged = False
    for _sweep in range(SWEEP_CAP):
        rotated = False
        for p_idx, q_idx in rounds:
            app = w[p_idx, p_idx]
            aqq = w[q_idx, q_idx]
            apq = w[p_idx, q_idx]
            need = np.abs(apq) > thresh
            if not np.any(need):
                continue
            rotated = True
            denom = np.where(need, 2.0 * apq, 1.0)
            with np.errstate(over="ignore"):  # subnormal denom; guarded above
                zeta = np.where(need, (aqq - app) / denom, 0.0)
            t = np.where(need, _jacobi_tangent(zeta), 0.0)
            cs = 1.0 / np.sqrt(1.0 + t * t)
            sn = t * cs
            # rows, then columns: pairs are disjoint so this equals the
            # full two-sided rotation for the round
            rp = w[p_idx, :]
            rq = w[q_idx, :]
            w[p_idx, :] = cs[:, None] * rp - sn[:, None] * rq
            w[q_idx, :] = sn[:, None] * rp + cs[:, None] * rq
            cp = w[:, p_idx]
            cq = w[:, q_idx]
            w[:, p_idx] = cs * cp - sn * cq
            w[:, q_idx] = sn * cp + cs * cq
            vp = v[:, p_idx]
            vq = v[:, q_idx]
            v[:, p_idx] = cs * vp - sn * vq
            v[:, q_idx] = sn * vp + cs * vq
        w = (w + w.T) / 2.0  # clamp round-off drift
        if not rotated:
            converged = True
            break
    if not converged:
        raise NumericError(
            f"Jacobi eigensolver did not converge in {SWEEP_CAP} sweeps",
            iterations=SWEEP_CAP,
        )
    eigvals = np.diag(w).copy()
    order = np.argsort(-eigvals, kind="stable")
    return eigvals[order], v[:, order]


def effective_rank(s):
    """Number of singular values above RANK_TOL relative to the largest."""
    s = np.asarray(s, dtype=np.float64)
    if s.size == 0 or s[0] <= 0.0:
        return 0
    return int(np.sum(s > RANK_TOL * s[0]))
