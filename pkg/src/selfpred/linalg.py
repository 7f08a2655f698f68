"""Dense matrix kernels built from scratch.

Provides the spectral primitives every other module relies on: a cyclic
Jacobi symmetric eigendecomposition, an SVD derived from it, a
power-iteration operator norm, and the Moore-Penrose pseudo-inverse.

Matrices are plain 2-D numpy float64 arrays (row-major). Elementwise
arithmetic and matrix products go through numpy, but none of the
decompositions call into ``np.linalg``: the spectral quantities consumed by
the predictors, the diagnostics, and the derived test oracles all come from
this one small auditable kernel. Desk scale only (matrices up to ~512x512).
"""

from typing import NamedTuple

import numpy as np

# Fixed seed for the power-iteration start vector so operator_norm is a pure
# function of its input.
_POWER_START_SEED = 1_234_567


def as_matrix(m) -> np.ndarray:
    """Validate and convert input to a 2-D float64 array.

    Args:
        m: Array-like of shape (rows, cols).

    Returns:
        A float64 numpy array of dimension 2.

    Raises:
        ValueError: If the input is not 2-D or contains NaN/Inf.
    """
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={a.ndim}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix contains non-finite entries")
    return a


def matmul(a, b) -> np.ndarray:
    """Matrix product with explicit dimension checking.

    Args:
        a: Left factor, shape (m, k).
        b: Right factor, shape (k, n).

    Returns:
        The (m, n) product.

    Raises:
        ValueError: On inner-dimension mismatch.
    """
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape} x {b.shape}")
    return a @ b


def frobenius_norm(m) -> float:
    """Frobenius norm: square root of the sum of squared entries.

    Computed on entries divided by the largest magnitude so the squares
    cannot overflow for huge-but-finite inputs.
    """
    m = as_matrix(m)
    scale = float(np.max(np.abs(m)))
    if scale == 0.0:
        return 0.0
    ratio = m / scale
    return scale * float(np.sqrt(np.sum(ratio * ratio)))


def operator_norm(m, tol: float = 1e-12, max_iter: int = 10_000) -> float:
    """Largest singular value via power iteration on the Gram matrix.

    Iterates v <- M^T M v (or M M^T v on the smaller side) from a fixed
    pseudo-random start vector and tracks the Rayleigh quotient, stopping
    when its relative change drops below ``tol``.

    Args:
        m: Any matrix; the zero matrix returns 0.
        tol: Relative tolerance on successive Rayleigh-quotient estimates.
        max_iter: Iteration cap.

    Returns:
        The spectral norm |||M|||.
    """
    m = as_matrix(m)
    if not np.any(m):
        return 0.0
    # The norm is absolutely homogeneous, so normalize away the entry scale
    # first: the Gram products below square it, and entries beyond ~1e154
    # would overflow (huge-but-finite training iterates do reach that).
    scale = float(np.max(np.abs(m)))
    m = m / scale
    rows, cols = m.shape
    # Power-iterate on the smaller of M^T M and M M^T.
    if cols <= rows:
        gram_apply = lambda v: m.T @ (m @ v)  # noqa: E731
        n = cols
    else:
        gram_apply = lambda v: m @ (m.T @ v)  # noqa: E731
        n = rows
    rng = np.random.default_rng(_POWER_START_SEED)
    v = rng.standard_normal(n)
    v /= np.sqrt(v @ v)
    lam_prev = 0.0
    lam = 0.0
    for _ in range(max_iter):
        w = gram_apply(v)
        lam = float(v @ w)  # Rayleigh quotient of the Gram matrix
        nw = float(np.sqrt(w @ w))
        if nw == 0.0:
            # Start vector fell exactly into the null space; re-draw once.
            v = rng.standard_normal(n)
            v /= np.sqrt(v @ v)
            w = gram_apply(v)
            nw = float(np.sqrt(w @ w))
            if nw == 0.0:
                return 0.0
        v = w / nw
        if abs(lam - lam_prev) <= tol * max(abs(lam), 1e-300):
            break
        lam_prev = lam
    return scale * float(np.sqrt(max(lam, 0.0)))


class SymEigResult(NamedTuple):
    """Eigendecomposition of a symmetric matrix.

    Attributes:
        eigenvalues: Real eigenvalues sorted descending.
        eigenvectors: Orthonormal eigenvectors as columns, aligned with
            ``eigenvalues``; V diag(lambda) V^T reconstructs the input.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def _check_symmetric(m: np.ndarray, rel_tol: float = 1e-9) -> np.ndarray:
    """Reject asymmetry above ``rel_tol`` relative, then symmetrize exactly."""
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    scale = float(np.sqrt(np.sum(m * m)))
    asym = float(np.sqrt(np.sum((m - m.T) ** 2)))
    if asym > rel_tol * max(scale, 1e-300):
        raise ValueError(
            f"matrix is not symmetric: |M - M^T|_F = {asym:.3e} "
            f"exceeds {rel_tol:g} relative"
        )
    return 0.5 * (m + m.T)


def sym_eig(m, max_sweeps: int = 60) -> SymEigResult:
    """Symmetric eigendecomposition by cyclic Jacobi rotations.

    Sweeps over all (p, q) pairs, annihilating off-diagonal entries with
    plane rotations, until the off-diagonal Frobenius mass falls below
    1e-13 x |M|_F. Converges unconditionally for symmetric input.

    Args:
        m: Square matrix, symmetric within 1e-9 relative (it is symmetrized
            by averaging before factoring; larger asymmetry is rejected).
        max_sweeps: Safety cap on the number of full sweeps.

    Returns:
        SymEigResult with descending eigenvalues and orthonormal columns.

    Raises:
        ValueError: Non-square or materially asymmetric input.
        RuntimeError: If the sweep cap is hit (not expected).
    """
    a = _check_symmetric(as_matrix(m))
    f = a.shape[0]
    v = np.eye(f)
    scale = float(np.sqrt(np.sum(a * a)))
    if scale == 0.0 or f == 1:
        return SymEigResult(np.diag(a).copy(), v)
    target = 1e-13 * scale
    # Entries below this cannot push the off-diagonal mass above target.
    skip_tol = 0.1 * target / f

    def _off_norm() -> float:
        # Sum off-diagonal squares directly: the subtraction form
        # sum(a^2) - sum(diag^2) cancels catastrophically near convergence.
        tmp = a.copy()
        np.fill_diagonal(tmp, 0.0)
        return float(np.sqrt(np.sum(tmp * tmp)))

    converged = False
    for _ in range(max_sweeps):
        if _off_norm() <= target:
            converged = True
            break
        for p in range(f - 1):
            for q in range(p + 1, f):
                apq = a[p, q]
                if abs(apq) <= skip_tol:
                    continue
                # Rotation angle that zeroes a[p, q] (Golub & Van Loan 8.4).
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.copysign(1.0, theta) / (
                    abs(theta) + np.sqrt(theta * theta + 1.0)
                )
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # A <- J^T A J applied as column then row updates.
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    if not converged and _off_norm() > target:
        raise RuntimeError(f"Jacobi sweep cap {max_sweeps} hit without convergence")
    eigvals = np.diag(a).copy()
    order = np.argsort(-eigvals)
    return SymEigResult(eigvals[order], v[:, order])


def svd(m) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin singular value decomposition M = U diag(s) V^T.

    Built on sym_eig of M^T M: right singular vectors are its eigenvectors,
    singular values the clipped square roots of its eigenvalues, and left
    vectors the normalized images M v / s. Directions whose singular value
    is numerically zero are completed by Gram-Schmidt against the computed
    columns, so U always has orthonormal-ish columns of full count.

    Forming the Gram matrix squares the condition number, so singular values
    below ~1e-6.5 of the largest sit at the resolution limit of this route;
    Gram eigenvalues below 1e-13 of the largest are truncated to exactly
    zero rather than reported as noise.

    Args:
        m: Any (rows, cols) matrix.

    Returns:
        Tuple (U, s, V) with U of shape (rows, k), s of length k sorted
        descending and nonnegative, V of shape (cols, k), k = min(rows, cols).
        Note V holds right singular vectors as columns (not V^T).
    """
    m = as_matrix(m)
    rows, cols = m.shape
    k = min(rows, cols)
    evals, vecs = sym_eig(m.T @ m)
    # Eigenvalues of the Gram matrix are only accurate to ~eps * lambda_max
    # absolute; anything below that floor is numerical noise, not rank.
    lam_max = max(float(evals[0]), 0.0) if evals.size else 0.0
    evals = np.where(evals > 1e-13 * lam_max, evals, 0.0)
    s = np.sqrt(np.clip(evals[:k], 0.0, None))
    v = vecs[:, :k]
    u = np.zeros((rows, k))
    smax = s[0] if k > 0 else 0.0
    image_tol = 1e-12 * smax
    defective = []
    for i in range(k):
        if s[i] > image_tol:
            u[:, i] = (m @ v[:, i]) / s[i]
        else:
            defective.append(i)
    # Orthonormal completion for numerically-null directions: sweep the
    # standard basis and keep whatever survives projection removal.
    basis_idx = 0
    for i in defective:
        while basis_idx < rows:
            cand = np.zeros(rows)
            cand[basis_idx] = 1.0
            basis_idx += 1
            for _ in range(2):  # two MGS passes for stability
                cand = cand - u @ (u.T @ cand)
            norm = float(np.sqrt(cand @ cand))
            if norm > 0.1:
                u[:, i] = cand / norm
                break
        else:  # pragma: no cover - impossible: fewer null dirs than rows
            raise RuntimeError("failed to complete orthonormal basis")
    return u, s, v


def pseudo_inverse(m, rel_cutoff: float = 1e-10) -> np.ndarray:
    """Moore-Penrose pseudo-inverse via the SVD.

    Args:
        m: Any matrix.
        rel_cutoff: Singular values at or below rel_cutoff x s_max are
            treated as zero (default 1e-10).

    Returns:
        The (cols, rows) pseudo-inverse V diag(s^+) U^T.

    Raises:
        ValueError: If rel_cutoff is not positive.
    """
    if rel_cutoff <= 0.0:
        raise ValueError(f"rel_cutoff must be positive, got {rel_cutoff}")
    m = as_matrix(m)
    u, s, v = svd(m)
    smax = s[0] if s.size else 0.0
    inv = np.where(s > rel_cutoff * smax, 1.0 / np.where(s > 0, s, 1.0), 0.0)
    return v @ (inv[:, None] * u.T)
