"""Streaming PCA updates and the rank-1 self-prediction equivalence.

A two-branch loop with a rank-1 predictor p p^T / |p|^2 and stop-gradient
performs exactly Krasulina's streaming PCA update on p (up to a positive
scalar); with a rank-k orthonormal frame it solves a k-PCA problem. This
module implements the classical updates (Oja, Krasulina, matrix
Krasulina), the closed-form rank-1 loss gradient used to check the
equivalence, and a brute-force certificate that the top-k eigenprojector
minimizes the residual-trace objective.

Single samples are row vectors; all step functions also accept a b x f
batch, which acts like the summed update over its rows.
"""

from dataclasses import dataclass

import numpy as np

from .linalg import as_matrix, sym_eig
from .matfun import IllConditionedError
from .riemann import retract_to_stiefel


@dataclass(frozen=True)
class PcaState:
    """State of a streaming PCA iteration.

    Attributes:
        p: Direction estimate - length-f vector (rank-1 case) or f x k
            frame (matrix case).
        eta: Step size used to produce this state.
        step: Number of updates applied.
    """

    p: np.ndarray
    eta: float
    step: int = 0

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        if not np.all(np.isfinite(p)):
            raise ValueError("state contains non-finite entries")
        if p.ndim == 1:
            if p.size == 0 or np.abs(p).max() == 0.0:
                raise ValueError("rank-1 state needs a nonzero vector")
        elif p.ndim != 2:
            raise ValueError(f"state must be a vector or a frame, got ndim={p.ndim}")
        if self.eta <= 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        object.__setattr__(self, "p", p)


def _as_batch(x, f: int) -> np.ndarray:
    """Coerce a sample row vector or b x f batch to 2-D."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != f:
        raise ValueError(f"expected samples of dimension {f}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples contain non-finite entries")
    return x


def oja_step(state: PcaState, x, eta: float) -> PcaState:
    """Oja's update: gradient ascent on p^T C p followed by normalization.

    p <- p + eta * X^T (X p), then p <- p / |p|.

    Args:
        state: Rank-1 state.
        x: Sample row vector or b x f batch.
        eta: Positive step size.

    Returns:
        Updated, unit-norm state.
    """
    p = state.p
    if p.ndim != 1:
        raise ValueError("oja_step needs a rank-1 (vector) state")
    xb = _as_batch(x, p.shape[0])
    p_next = p + eta * (xb.T @ (xb @ p))
    norm = np.sqrt(np.sum(p_next * p_next))
    if norm == 0.0:
        raise ValueError("update produced the zero vector")
    return PcaState(p=p_next / norm, eta=eta, step=state.step + 1)


def krasulina_step(state: PcaState, x, eta: float) -> PcaState:
    """Krasulina's update: Oja with the normalization folded into a term.

    p <- p + eta * (X^T (X p) - p * |X p/|p||^2); no renormalization. The
    added term keeps the norm drift second order in eta.

    Args:
        state: Rank-1 state with |p| >= 1e-300.
        x: Sample row vector or b x f batch.
        eta: Positive step size.

    Returns:
        Updated state (norm close to, but not exactly, preserved).
    """
    p = state.p
    if p.ndim != 1:
        raise ValueError("krasulina_step needs a rank-1 (vector) state")
    norm = float(np.sqrt(np.sum(p * p)))
    if norm < 1e-300:
        raise ValueError("state norm underflow: |p| < 1e-300")
    xb = _as_batch(x, p.shape[0])
    # x (p/|p|) computed through the unit vector so |p|^2 never underflows.
    xu = xb @ (p / norm)
    p_next = p + eta * (xb.T @ (xb @ p) - p * np.sum(xu * xu))
    return PcaState(p=p_next, eta=eta, step=state.step + 1)


def byol_rank1_grad(z, p) -> np.ndarray:
    """Gradient of the rank-1 self-prediction loss with stop-gradient.

    The loss is L(p) = |Z - Z p p^T / |p|^2|_F^2 with the left-hand Z held
    constant; since the projection is idempotent this is
    tr(Z^T Z) - p^T Z^T Z p / |p|^2, and the gradient comes out as

        grad L = -(2 / |p|^2) * (C p - p (p^T C p) / |p|^2),  C = Z^T Z,

    i.e. exactly minus (2/|p|^2) times Krasulina's bracketed update.

    Args:
        z: Latent batch, b x f.
        p: Predictor parameter vector, length f, nonzero.

    Returns:
        Gradient vector of length f (descent direction is its negative).
    """
    z = as_matrix(z)
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.shape[0] != z.shape[1]:
        raise ValueError(
            f"p must be a vector of length {z.shape[1]}, got shape {p.shape}"
        )
    norm_sq = float(np.sum(p * p))
    if norm_sq == 0.0:
        raise ValueError("p must be nonzero")
    cp = z.T @ (z @ p)
    bracket = cp - p * (float(p @ cp) / norm_sq)
    return -(2.0 / norm_sq) * bracket


def _exact_orthonormalize(p: np.ndarray) -> np.ndarray:
    """Symmetric orthonormalization P (P^T P)^{-1/2} via eigendecomposition."""
    gram = sym_eig(p.T @ p)
    lam_max = float(gram.eigenvalues[0])
    if lam_max <= 0.0 or float(gram.eigenvalues[-1]) < 1e-20 * lam_max:
        raise IllConditionedError("frame rank collapse during orthonormalization")
    v = gram.eigenvectors
    inv_sqrt = v @ np.diag(1.0 / np.sqrt(gram.eigenvalues)) @ v.T
    return p @ inv_sqrt


def matrix_krasulina_step(
    state: PcaState, x_batch, eta: float, ortho: str = "polar", n_retract: int = 12
) -> PcaState:
    """Matrix-Krasulina update: covariance step plus orthonormalization.

    P <- orthonormalize(P + eta * X^T X P). With ortho="polar" the
    orthonormalization is the inverse-free Newton-Schulz polar retraction;
    "exact" uses the eigendecomposition-based symmetric orthogonalization
    (same polar factor, kept as an oracle).

    Args:
        state: f x k frame state, k <= f.
        x_batch: Sample batch, b x f (a single row vector also works).
        eta: Positive step size.
        ortho: "polar" or "exact".
        n_retract: Newton-Schulz iterations for the polar route.

    Returns:
        State with orthonormal columns.

    Raises:
        IllConditionedError: The stepped frame lost column rank.
    """
    p = state.p
    if p.ndim != 2:
        raise ValueError("matrix_krasulina_step needs an f x k frame state")
    f, k = p.shape
    if k > f:
        raise ValueError(f"frame must be tall: got shape {p.shape}")
    xb = _as_batch(x_batch, f)
    stepped = p + eta * (xb.T @ (xb @ p))
    if ortho == "polar":
        p_next = retract_to_stiefel(stepped, n_retract)
    elif ortho == "exact":
        p_next = _exact_orthonormalize(stepped)
    else:
        raise ValueError(f"ortho must be 'polar' or 'exact', got {ortho!r}")
    return PcaState(p=p_next, eta=eta, step=state.step + 1)


@dataclass(frozen=True)
class KpcaReport:
    """Outcome of the brute-force k-PCA optimality check.

    Attributes:
        k: Projection rank.
        trials: Number of random competitor frames.
        objective_opt: Residual trace tr((I - P) Sigma) of the top-k
            eigenprojector.
        min_random_objective: Best objective among the random frames.
        all_optimal: True when the eigenprojector's objective is <= every
            random frame's objective plus 1e-10 slack.
    """

    k: int
    trials: int
    objective_opt: float
    min_random_objective: float
    all_optimal: bool


def kpca_bruteforce_check(
    sigma, k: int, trials: int, rng: np.random.Generator | None = None
) -> KpcaReport:
    """Certify that the top-k eigenprojector minimizes tr((I - P) Sigma).

    Draws `trials` random rank-k orthonormal frames and compares their
    residual-trace objective against the eigenprojector's.

    Args:
        sigma: SPD matrix, f <= 8 (brute-force scale).
        k: Projection rank, 1 <= k <= f.
        trials: Number of random frames.
        rng: Source of randomness (fresh default seed when omitted).

    Returns:
        KpcaReport; all_optimal should be True for genuine SPD input.
    """
    sigma = as_matrix(sigma)
    f = sigma.shape[0]
    if not 1 <= k <= f:
        raise ValueError(f"k must be in [1, {f}], got {k}")
    if f > 8:
        raise ValueError(f"brute-force check is limited to f <= 8, got f={f}")
    if rng is None:
        rng = np.random.default_rng(0)

    eig = sym_eig(sigma)
    total = float(np.trace(sigma))
    top = eig.eigenvectors[:, :k]
    objective_opt = total - float(np.trace(top.T @ sigma @ top))

    min_random = np.inf
    all_optimal = True
    for _ in range(trials):
        # Polar factor of a Gaussian matrix is Haar on the Stiefel manifold.
        q = _exact_orthonormalize(rng.standard_normal((f, k)))
        obj = total - float(np.trace(q.T @ sigma @ q))
        min_random = min(min_random, obj)
        if objective_opt > obj + 1e-10:
            all_optimal = False
    return KpcaReport(
        k=k,
        trials=trials,
        objective_opt=objective_opt,
        min_random_objective=float(min_random),
        all_optimal=all_optimal,
    )
