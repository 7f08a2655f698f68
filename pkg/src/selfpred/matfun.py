"""Inverse-free matrix-function iterations.

Visser and Newton-Schulz square roots, the chained NS^2 fourth root, the
first-order Neumann inverse, Stiefel projection, and polar decomposition.
All iterations are multiplication-only: no solves, no inversions, which is
the whole point of using them inside a training step.

``sqrt_eig`` (eigendecomposition square root) is the trusted oracle the
iterative routines are tested against.
"""

from dataclasses import dataclass

import numpy as np

from .linalg import _check_symmetric, as_matrix, frobenius_norm, operator_norm, sym_eig


class DivergenceError(RuntimeError):
    """An iteration's residual grew persistently instead of converging.

    Attributes:
        last_residual: Relative residual |P_k^2 - Sigma|_F / |Sigma|_F at
            the step that triggered detection.
    """

    def __init__(self, message: str, last_residual: float):
        super().__init__(message)
        self.last_residual = last_residual


class NumericFailureError(RuntimeError):
    """Non-finite values appeared mid-iteration.

    Attributes:
        iteration: 1-based index of the iteration that produced NaN/Inf.
    """

    def __init__(self, message: str, iteration: int):
        super().__init__(message)
        self.iteration = iteration


class IllConditionedError(ValueError):
    """Input is too close to rank-deficient for the requested operation."""


@dataclass(frozen=True)
class SqrtIterConfig:
    """Settings for the iterative square roots.

    Attributes:
        n_iters: Number of iterations (>= 1).
        visser_eta: Visser step size eta > 0. The 0.001 default suits
            feature-scale covariances with operator norm in the hundreds;
            unit-scale matrices want eta near min(0.45/sqrt(op), 0.9/op).
        residual_track: When True, callers passing a ``residuals`` list get
            per-iteration (iteration, relative residual) pairs appended.
    """

    n_iters: int = 50
    visser_eta: float = 0.001
    residual_track: bool = False

    def __post_init__(self):
        if self.n_iters < 1:
            raise ValueError(f"n_iters must be >= 1, got {self.n_iters}")
        if self.visser_eta <= 0:
            raise ValueError(f"visser_eta must be positive, got {self.visser_eta}")


@dataclass(frozen=True)
class NsPair:
    """Coupled Newton-Schulz state (A_k, B_k) with its normalization scale.

    A_k converges to (Sigma/|Sigma|_F)^{1/2} and B_k to its inverse, so
    B_k A_k -> I. ``fro_scale`` records |Sigma|_F.

    Attributes:
        a: A_n iterate.
        b: B_n iterate.
        fro_scale: Frobenius norm of the original Sigma.
    """

    a: np.ndarray
    b: np.ndarray
    fro_scale: float

    @property
    def sqrt(self) -> np.ndarray:
        """The square-root estimate A_n * sqrt(|Sigma|_F)."""
        return self.a * np.sqrt(self.fro_scale)

    @property
    def inv_sqrt(self) -> np.ndarray:
        """The inverse-square-root estimate B_n / sqrt(|Sigma|_F)."""
        return self.b / np.sqrt(self.fro_scale)


def sqrt_eig(sigma) -> np.ndarray:
    """Matrix square root by eigendecomposition: V diag(sqrt(lambda)) V^T.

    The trusted reference all iterative square roots are compared against,
    and the DirectPred predictor formula.

    Args:
        sigma: Symmetric PSD matrix. Eigenvalues in [-1e-10 * lambda_max, 0)
            are clamped to zero; more negative values signal a
            non-covariance input and raise.

    Returns:
        The unique PSD square root.

    Raises:
        ValueError: Asymmetric or materially non-PSD input.
    """
    sigma = _check_symmetric(as_matrix(sigma))
    lam, v = sym_eig(sigma)
    lam_max = max(float(lam[0]), 0.0)
    if np.any(lam < -1e-10 * lam_max):
        raise ValueError(
            f"matrix is not PSD: smallest eigenvalue {lam[-1]:.3e} "
            f"below clamp threshold {-1e-10 * lam_max:.3e}"
        )
    lam = np.clip(lam, 0.0, None)
    return v @ (np.sqrt(lam)[:, None] * v.T)


def visser_sqrt(sigma, cfg: SqrtIterConfig, residuals: list | None = None) -> np.ndarray:
    """Visser fixed-point iteration toward Sigma^{1/2}.

    P_0 = I/(2 eta), P_{k+1} = P_k + eta (Sigma - P_k^2). Linear rate, but
    each step is one multiplication and one addition. The scalar recursion
    diverges once eta |||Sigma||| >= 1, so that regime only warns (the
    caller may be probing it deliberately); actual runaway growth raises.

    Args:
        sigma: Symmetric PSD matrix.
        cfg: Iteration settings (n_iters, visser_eta, residual_track).
        residuals: Optional caller-owned list; with cfg.residual_track it
            receives (iteration, |P_k^2 - Sigma|_F / |Sigma|_F) pairs.

    Returns:
        P_n, the square-root estimate.

    Raises:
        ValueError: Asymmetric input.
        DivergenceError: Residual grew on 3 consecutive iterations past
            iteration 10.
    """
    sigma = _check_symmetric(as_matrix(sigma))
    eta = cfg.visser_eta
    scale = frobenius_norm(sigma)
    if eta * operator_norm(sigma) >= 1.0:
        import warnings

        warnings.warn(
            f"visser_sqrt stability guard: eta * |||Sigma||| = "
            f"{eta * operator_norm(sigma):.3g} >= 1; the iteration may diverge",
            RuntimeWarning,
            stacklevel=2,
        )
    f = sigma.shape[0]
    p = np.eye(f) / (2.0 * eta)
    prev_resid = np.inf
    grow_streak = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, cfg.n_iters + 1):
            p_sq = p @ p
            raw = frobenius_norm(p_sq - sigma) if np.all(np.isfinite(p_sq)) else np.inf
            resid = raw / max(scale, 1e-300)
            if not np.isfinite(resid):
                raise DivergenceError(
                    f"visser iteration overflowed at step {k}",
                    last_residual=prev_resid,
                )
            if cfg.residual_track and residuals is not None:
                residuals.append((k, resid))
            # Count material growth only; jitter at the convergence floor is
            # not divergence.
            if resid > prev_resid and resid > 1e-12:
                grow_streak += 1
            else:
                grow_streak = 0
            if k > 10 and grow_streak >= 3:
                raise DivergenceError(
                    f"visser iteration diverging at step {k}: residual {resid:.3e}",
                    last_residual=resid,
                )
            prev_resid = resid
            p = p + eta * (sigma - p_sq)
    return p


def newton_schulz_sqrt(sigma, n: int, residuals: list | None = None) -> NsPair:
    """Coupled Newton-Schulz iteration for the matrix square root.

    A_0 = Sigma/|Sigma|_F, B_0 = I, then
    A_{k+1} = A_k (3I - B_k A_k)/2,  B_{k+1} = (3I - B_k A_k) B_k / 2.
    Quadratically convergent; the pair's ``sqrt``/``inv_sqrt`` properties
    undo the Frobenius normalization.

    Args:
        sigma: Symmetric PSD matrix, nonzero.
        n: Number of iterations (>= 1).
        residuals: Optional caller-owned list receiving per-iteration
            (iteration, |sqrt_k^2 - Sigma|_F / |Sigma|_F) pairs.

    Returns:
        NsPair(a=A_n, b=B_n, fro_scale=|Sigma|_F).

    Raises:
        ValueError: Zero or asymmetric input, or n < 1.
        NumericFailureError: NaN/Inf mid-iteration, with the iteration index.
    """
    sigma = _check_symmetric(as_matrix(sigma))
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    fro = frobenius_norm(sigma)
    if fro == 0.0:
        raise ValueError("newton_schulz_sqrt: zero matrix has no normalization")
    f = sigma.shape[0]
    eye3 = 3.0 * np.eye(f)
    a = sigma / fro
    b = np.eye(f)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, n + 1):
            t = eye3 - b @ a
            a = 0.5 * (a @ t)
            b = 0.5 * (t @ b)
            if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
                raise NumericFailureError(
                    f"newton_schulz_sqrt produced non-finite values "
                    f"at iteration {k}",
                    iteration=k,
                )
            if residuals is not None:
                p_k = a * np.sqrt(fro)
                pk_sq = p_k @ p_k
                defect = (
                    frobenius_norm(pk_sq - sigma) / fro
                    if np.all(np.isfinite(pk_sq))
                    else float("inf")
                )
                residuals.append((k, defect))
    return NsPair(a=a, b=b, fro_scale=fro)


def ns_squared_sqrt(sigma, n_each: int, residuals: list | None = None) -> np.ndarray:
    """Chained Newton-Schulz: an approximation to Sigma^{1/4}.

    Runs newton_schulz_sqrt on Sigma, then again on the rescaled result.

    Args:
        sigma: Symmetric PSD matrix, nonzero.
        n_each: Iterations for each of the two chained runs (default used
            by the predictor catalog is 7).
        residuals: Optional caller-owned list receiving (iteration,
            relative residual) pairs; iterations 1..n_each track the first
            run against Sigma, n_each+1..2*n_each the second run against
            the stage-one square root.

    Returns:
        The fourth-root estimate.
    """
    stage1: list | None = [] if residuals is not None else None
    first = newton_schulz_sqrt(sigma, n_each, residuals=stage1).sqrt
    # The iterate is symmetric up to roundoff (a polynomial in Sigma);
    # resymmetrize so the second run's precondition is exact.
    first = 0.5 * (first + first.T)
    stage2: list | None = [] if residuals is not None else None
    out = newton_schulz_sqrt(first, n_each, residuals=stage2).sqrt
    if residuals is not None:
        residuals.extend(stage1)
        residuals.extend((n_each + k, r) for k, r in stage2)
    return out


def neumann_inverse(m) -> np.ndarray:
    """First-order Neumann approximation of M^{-1} around the identity.

    (I - E)^{-1} = I + E + E^2 + ... truncated at first order gives
    M^{-1} ~= 2I - M for M = I - E; the error is O(|E|^2).

    Args:
        m: Square matrix.

    Returns:
        2I - M.
    """
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    return 2.0 * np.eye(m.shape[0]) - m


@dataclass(frozen=True)
class StiefelResult:
    """Output of the Stiefel projection iteration.

    Attributes:
        p: The normalized predictor B_n Sigma^T / |B_n|_F.
        scale_corrected: (B_n / sqrt(|Sigma^T Sigma|_F)) Sigma^T, the
            estimate of the exact Stiefel projection
            (Sigma^T Sigma)^{-1/2} Sigma^T, whose singular values all
            approach 1.
    """

    p: np.ndarray
    scale_corrected: np.ndarray


def stiefel_project(sigma, n: int, residuals: list | None = None) -> StiefelResult:
    """Inverse-free projection of Sigma^T onto the orthogonal manifold.

    Runs the coupled Newton-Schulz iteration on Sigma^T Sigma and uses the
    B-sequence, which converges to a multiple of (Sigma^T Sigma)^{-1/2}:
    P = B_n Sigma^T / |B_n|_F.

    Args:
        sigma: Square matrix with Sigma^T Sigma nonzero and numerically
            full-rank.
        n: Newton-Schulz iterations (predictor default 9).
        residuals: Optional caller-owned list receiving the underlying
            Newton-Schulz (iteration, relative residual) pairs on
            Sigma^T Sigma.

    Returns:
        StiefelResult with the normalized predictor and the scale-corrected
        product.

    Raises:
        IllConditionedError: Smallest eigenvalue of Sigma^T Sigma below
            1e-12 of the largest.
    """
    sigma = as_matrix(sigma)
    if sigma.shape[0] != sigma.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {sigma.shape}")
    gram = sigma.T @ sigma
    lam, _ = sym_eig(gram)
    if lam[0] <= 0.0 or lam[-1] < 1e-12 * lam[0]:
        raise IllConditionedError(
            f"stiefel_project: Sigma^T Sigma eigenvalue ratio "
            f"{lam[-1]:.3e} / {lam[0]:.3e} below 1e-12"
        )
    pair = newton_schulz_sqrt(gram, n, residuals=residuals)
    p = (pair.b @ sigma.T) / frobenius_norm(pair.b)
    return StiefelResult(p=p, scale_corrected=pair.inv_sqrt @ sigma.T)


def polar_decompose(p, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Polar decomposition P = U H via the Newton-Schulz B-sequence.

    U = P (P^T P)^{-1/2} is the nearest orthogonal matrix to P; H = U^T P
    is symmetric PSD.

    Args:
        p: Square matrix, full rank within 1e-10 relative (singular-value
            ratio).
        n: Newton-Schulz iterations for the inverse square root.

    Returns:
        Tuple (u, h).

    Raises:
        IllConditionedError: Rank-deficient input.
    """
    p = as_matrix(p)
    if p.shape[0] != p.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {p.shape}")
    gram = p.T @ p
    lam, _ = sym_eig(gram)
    # Eigenvalues of P^T P are squared singular values.
    if lam[0] <= 0.0 or lam[-1] < 1e-20 * lam[0]:
        raise IllConditionedError(
            "polar_decompose: input is rank-deficient within 1e-10 relative"
        )
    pair = newton_schulz_sqrt(gram, n)
    u = p @ pair.inv_sqrt
    h = u.T @ p
    return u, h
