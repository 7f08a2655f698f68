"""Stiefel-manifold machinery: Riemannian gradients and retraction.

The two-branch training dynamics push the predictor toward an orthogonal
projection; this module provides the explicit geometry used to interpret
that: the Riemannian gradient on the Stiefel manifold, the polar-factor
retraction (computed inverse-free through the Newton-Schulz B-sequence),
and the quasi-orthogonality defects that quantify how far a matrix is
from being a symmetric orthogonal projection.
"""

from dataclasses import dataclass

import numpy as np

from .linalg import as_matrix, operator_norm, sym_eig
from .matfun import IllConditionedError, newton_schulz_sqrt


@dataclass(frozen=True)
class QuasiOrthoReport:
    """Operator-norm defects of an approximate orthogonal projection.

    Attributes:
        eps_proj: |||P^2 - P|||, the projection defect.
        eps_sym: |||P^T - P|||, the symmetry defect.
        eps_orth: |||P P^T - P|||, the orthogonal-projection defect.
        op_norm: |||P|||.

    An eps_proj-projection that is eps_sym-symmetric is an
    eps-quasi-orthogonal projection with
    eps_orth <= eps_proj + |||P||| * eps_sym (triangle inequality through
    P P^T - P = (P^2 - P) + P (P^T - P)... transposed suitably).
    """

    eps_proj: float
    eps_sym: float
    eps_orth: float
    op_norm: float


def riemannian_grad(euclid_grad, p) -> np.ndarray:
    """Riemannian gradient on the Stiefel manifold: G - P G^T P.

    The formula is evaluated as given even off the manifold; on it, the
    output lies in the tangent space (P^T D + D^T P = 0).

    Args:
        euclid_grad: Euclidean gradient G, same shape as p.
        p: Current point (columns need not be exactly orthonormal).

    Returns:
        G - P G^T P.
    """
    g = as_matrix(euclid_grad)
    p = as_matrix(p)
    if g.shape != p.shape:
        raise ValueError(f"gradient/point shape mismatch: {g.shape} vs {p.shape}")
    return g - p @ g.T @ p


def quasi_orthogonality(p) -> QuasiOrthoReport:
    """Measure how close a square matrix is to an orthogonal projection.

    Args:
        p: Square matrix.

    Returns:
        QuasiOrthoReport with the three operator-norm defects and |||P|||.
    """
    p = as_matrix(p)
    if p.shape[0] != p.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {p.shape}")
    return QuasiOrthoReport(
        eps_proj=operator_norm(p @ p - p),
        eps_sym=operator_norm(p.T - p),
        eps_orth=operator_norm(p @ p.T - p),
        op_norm=operator_norm(p),
    )


def retract_to_stiefel(p, n: int) -> np.ndarray:
    """Polar-factor retraction: the nearest orthonormal-column matrix.

    Computes P (P^T P)^{-1/2} with the inverse square root from the
    Newton-Schulz B-sequence, so no matrix is ever inverted. Works for
    square matrices and tall rank-k frames alike.

    Args:
        p: Full-column-rank matrix, square or tall.
        n: Newton-Schulz iterations.

    Returns:
        Matrix with orthonormal columns (to iteration accuracy).

    Raises:
        IllConditionedError: p is (numerically) column-rank deficient.
    """
    p = as_matrix(p)
    gram = p.T @ p
    evals = sym_eig(gram).eigenvalues
    lam_max = float(np.max(evals)) if evals.size else 0.0
    if lam_max <= 0.0 or float(np.min(evals)) < 1e-20 * lam_max:
        raise IllConditionedError(
            "column-rank-deficient input: polar retraction undefined"
        )
    return p @ newton_schulz_sqrt(gram, n).inv_sqrt


def riemannian_sgd_step(p, euclid_grad, eta: float, n_retract: int) -> np.ndarray:
    """One retracted Riemannian gradient step.

    Args:
        p: Current point with (near-)orthonormal columns.
        euclid_grad: Euclidean gradient at p.
        eta: Step size.
        n_retract: Newton-Schulz iterations inside the retraction.

    Returns:
        retract(p - eta * riemannian_grad(euclid_grad, p)).
    """
    return retract_to_stiefel(p - eta * riemannian_grad(euclid_grad, p), n_retract)
