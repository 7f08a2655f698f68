"""The closed-form predictor catalog.

Each predictor is an f x f matrix computed in closed form from the current
latent batches, replacing a gradient-trained predictor network:

- LRP: batchwise linear regression from online to target latents,
- DirectPred: eigendecomposition square root of the online covariance,
- DirectCopy: the online covariance itself,
- NE: first-order Neumann expansion of the regression inverse,
- Visser / NS: iterative square roots of the online covariance,
- NS2: chained Newton-Schulz fourth root,
- Stiefel: inverse-free projection of the covariance onto the orthogonal
  manifold.

Post-processing order is fixed: ridge is added right after the formula,
then the EMA smooths across batches.

Covariance scaling differs by kind: the iterative square-root kinds
(Visser/NS/NS2) take Sigma = Z^T Z / b, while DirectPred/DirectCopy/Stiefel
consume raw Z^T Z; ``scale_direct_cov`` opts the two Direct variants into
the 1/b scaling as well.
"""

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .linalg import as_matrix, frobenius_norm, operator_norm, pseudo_inverse
from .matfun import (
    SqrtIterConfig,
    newton_schulz_sqrt,
    ns_squared_sqrt,
    sqrt_eig,
    stiefel_project,
    visser_sqrt,
)

#: Ridge coefficients covered by the train command's sweep mode.
RIDGE_ALPHA_GRID = (0.0, 0.15, 0.3, 0.45, 0.6, 0.75, 0.9)


class PredictorKind(Enum):
    """The predictor catalog; values are the CLI/config spelling."""

    LRP = "LRP"
    DIRECT_PRED = "DirectPred"
    DIRECT_COPY = "DirectCopy"
    NE = "NE"
    VISSER = "Visser"
    NS = "NS"
    NS2 = "NS2"
    STIEFEL = "Stiefel"


#: Per-kind predictor-EMA defaults (0.8 LRP, 0.99 NE/Visser/NS/NS2,
#: 0.999 Stiefel). The two Direct variants are recomputed every batch,
#: i.e. rho = 0.
_DEFAULT_EMA_RHO = {
    PredictorKind.LRP: 0.8,
    PredictorKind.DIRECT_PRED: 0.0,
    PredictorKind.DIRECT_COPY: 0.0,
    PredictorKind.NE: 0.99,
    PredictorKind.VISSER: 0.99,
    PredictorKind.NS: 0.99,
    PredictorKind.NS2: 0.99,
    PredictorKind.STIEFEL: 0.999,
}

#: Default iteration counts: NS 9, NS2 two times 7, Stiefel 9, Visser 50.
_DEFAULT_N_ITERS = {
    PredictorKind.VISSER: 50,
    PredictorKind.NS: 9,
    PredictorKind.NS2: 7,
    PredictorKind.STIEFEL: 9,
}


@dataclass(frozen=True)
class PredictorParams:
    """Knobs shared by the predictor formulas and their post-processing.

    Attributes:
        ridge_alpha: Ridge coefficient alpha >= 0 added as alpha * I after
            the formula (sweepable over RIDGE_ALPHA_GRID).
        ema_rho: Predictor-EMA coefficient in [0, 1].
        sqrt_cfg: Iteration settings for the Visser/NS/NS2/Stiefel kinds.
        pinv_cutoff: Relative singular-value cutoff for the LRP
            pseudo-inverse.
        spectral_normalize: Divide the final predictor by its operator norm
            (on by default for NE only).
        scale_direct_cov: When True, DirectPred/DirectCopy also use
            Sigma = Z^T Z / b instead of raw Z^T Z (off by default; the
            iterative square-root kinds always divide by b).
    """

    ridge_alpha: float = 0.0
    ema_rho: float = 0.99
    sqrt_cfg: SqrtIterConfig = SqrtIterConfig()
    pinv_cutoff: float = 1e-10
    spectral_normalize: bool = False
    scale_direct_cov: bool = False

    def __post_init__(self):
        if self.ridge_alpha < 0:
            raise ValueError(f"ridge_alpha must be >= 0, got {self.ridge_alpha}")
        if not 0.0 <= self.ema_rho <= 1.0:
            raise ValueError(f"ema_rho must be in [0, 1], got {self.ema_rho}")
        if self.pinv_cutoff <= 0:
            raise ValueError(f"pinv_cutoff must be positive, got {self.pinv_cutoff}")

    @classmethod
    def for_kind(cls, kind: PredictorKind, **overrides) -> "PredictorParams":
        """Standard defaults for one predictor kind, with overrides."""
        base = cls(
            ema_rho=_DEFAULT_EMA_RHO[kind],
            sqrt_cfg=SqrtIterConfig(n_iters=_DEFAULT_N_ITERS.get(kind, 50)),
            spectral_normalize=(kind == PredictorKind.NE),
        )
        return replace(base, **overrides) if overrides else base


@dataclass(frozen=True)
class PredictorState:
    """EMA-smoothed predictor carried across training steps.

    Attributes:
        p: Current f x f predictor matrix.
        kind: Which formula produced the batch values.
        params: Post-processing settings (ema_rho is the one used here).
        step: Number of EMA updates applied.
    """

    p: np.ndarray
    kind: PredictorKind
    params: PredictorParams
    step: int = 0


def _check_batch_pair(z_on, z_tg) -> tuple[np.ndarray, np.ndarray]:
    z_on = as_matrix(z_on)
    z_tg = as_matrix(z_tg)
    if z_on.shape != z_tg.shape:
        raise ValueError(
            f"latent batches must match in shape: {z_on.shape} vs {z_tg.shape}"
        )
    return z_on, z_tg


def lrp_predictor(z_on, z_tg, cutoff: float = 1e-10) -> np.ndarray:
    """Linear-regression predictor: the least-squares map from Z to Z'.

    Both batches are divided by normfactor = |Z|_F/2 + |Z'|_F/2 + 1e-12
    before the pseudo-inverse, which keeps the Gram matrix near unit scale;
    the factor cancels exactly in the product, so the output equals
    (Z^T Z)^{-1} Z^T Z' whenever Z has full column rank.

    Args:
        z_on: Online latents, b x f.
        z_tg: Target latents, b x f.
        cutoff: Relative pseudo-inverse cutoff.

    Returns:
        The f x f regression matrix.
    """
    z_on, z_tg = _check_batch_pair(z_on, z_tg)
    normfactor = 0.5 * frobenius_norm(z_on) + 0.5 * frobenius_norm(z_tg) + 1e-12
    return pseudo_inverse(z_on / normfactor, rel_cutoff=cutoff) @ (z_tg / normfactor)


def compute_predictor(
    kind: PredictorKind,
    z_on,
    z_tg=None,
    params: PredictorParams | None = None,
) -> np.ndarray:
    """Evaluate one batchwise closed-form predictor.

    Args:
        kind: Catalog entry to evaluate.
        z_on: Online latents, b x f.
        z_tg: Target latents, b x f; required for LRP and NE only.
        params: Formula settings; defaults to the kind's standard defaults.

    Returns:
        The f x f predictor (spectrally normalized when
        params.spectral_normalize).

    Raises:
        ValueError: Missing z_tg for LRP/NE, or shape mismatch.
    """
    if params is None:
        params = PredictorParams.for_kind(kind)
    z_on = as_matrix(z_on)
    b = z_on.shape[0]
    if kind in (PredictorKind.LRP, PredictorKind.NE):
        if z_tg is None:
            raise ValueError(f"{kind.value} requires target latents z_tg")
        z_on, z_tg = _check_batch_pair(z_on, z_tg)

    if kind == PredictorKind.LRP:
        p = lrp_predictor(z_on, z_tg, cutoff=params.pinv_cutoff)
    elif kind == PredictorKind.DIRECT_PRED:
        cov = z_on.T @ z_on
        if params.scale_direct_cov:
            cov = cov / b
        p = sqrt_eig(cov)
    elif kind == PredictorKind.DIRECT_COPY:
        p = z_on.T @ z_on
        if params.scale_direct_cov:
            p = p / b
    elif kind == PredictorKind.NE:
        # Spectrally normalize both inputs, then apply the first-order
        # Neumann expansion of the regression inverse.
        z_hat = z_on / max(operator_norm(z_on), 1e-300)
        zt_hat = z_tg / max(operator_norm(z_tg), 1e-300)
        cross = z_hat.T @ zt_hat
        p = 2.0 * cross - (z_hat.T @ z_hat) @ cross
    elif kind == PredictorKind.VISSER:
        p = visser_sqrt((z_on.T @ z_on) / b, params.sqrt_cfg)
    elif kind == PredictorKind.NS:
        p = newton_schulz_sqrt((z_on.T @ z_on) / b, params.sqrt_cfg.n_iters).sqrt
    elif kind == PredictorKind.NS2:
        p = ns_squared_sqrt((z_on.T @ z_on) / b, params.sqrt_cfg.n_iters)
    elif kind == PredictorKind.STIEFEL:
        p = stiefel_project(z_on.T @ z_on, params.sqrt_cfg.n_iters).p
    else:  # pragma: no cover - exhaustive enum
        raise ValueError(f"unknown predictor kind {kind!r}")

    if params.spectral_normalize:
        op = operator_norm(p)
        if op > 0:
            p = p / op
    return p


def apply_ridge(p, alpha: float) -> np.ndarray:
    """Add alpha * I to the predictor.

    Args:
        p: Square predictor matrix.
        alpha: Ridge coefficient >= 0.

    Returns:
        p + alpha * I.
    """
    p = as_matrix(p)
    if p.shape[0] != p.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {p.shape}")
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    return p + alpha * np.eye(p.shape[0])


def ema_update(state: PredictorState, p_batch) -> PredictorState:
    """Smooth the predictor across batches: P <- rho P + (1 - rho) P_batch.

    Args:
        state: Current predictor state.
        p_batch: This batch's closed-form predictor (same shape as state.p).

    Returns:
        New state with the smoothed predictor and incremented step.

    Raises:
        ValueError: Shape mismatch.
    """
    p_batch = as_matrix(p_batch)
    if p_batch.shape != state.p.shape:
        raise ValueError(
            f"predictor shape mismatch: state {state.p.shape} vs "
            f"batch {p_batch.shape}"
        )
    rho = state.params.ema_rho
    return PredictorState(
        p=rho * state.p + (1.0 - rho) * p_batch,
        kind=state.kind,
        params=state.params,
        step=state.step + 1,
    )
