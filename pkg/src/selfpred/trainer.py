"""Desk-scale two-branch self-predictive training loop.

A linear online encoder A_theta and an EMA target encoder A_xi map two
augmented views of the same raw input to latents; a closed-form batchwise
predictor P maps online latents toward target latents, and only the
online branch receives gradient (stop-gradient on the target). The loop
is fully deterministic given the config seed and records the rank/spectrum
diagnostics at a configurable interval.

Randomness is split into named substreams of the config seed so that
changing one consumer never shifts another: [seed, 0] builds the data
model's mixing matrix (used by the config loader), [seed, 1] initializes
weights, [seed, 2] drives batch sampling.
"""

from dataclasses import dataclass, field

import numpy as np

from .diagnostics import SpectrumDiagnostics, spectrum_snapshot, stable_rank
from .linalg import as_matrix, frobenius_norm, sym_eig
from .matfun import DivergenceError, IllConditionedError, NumericFailureError
from .predictors import (
    PredictorKind,
    PredictorParams,
    PredictorState,
    apply_ridge,
    compute_predictor,
    ema_update,
)


def orthonormal_columns(rng: np.random.Generator, d: int, r: int) -> np.ndarray:
    """Random d x r matrix with orthonormal columns (Haar via polar factor).

    The symmetric orthogonalization runs twice: a badly conditioned draw
    can leave the single-pass polar factor with an orthonormality defect
    near 1e-10, and the second pass (on an almost-orthonormal frame, so
    perfectly conditioned) pushes it to machine precision.
    """
    g = rng.standard_normal((d, r))
    for _ in range(2):
        gram = sym_eig(g.T @ g)
        v = gram.eigenvectors
        g = g @ (v @ np.diag(1.0 / np.sqrt(gram.eigenvalues)) @ v.T)
    return g


@dataclass(frozen=True)
class SyntheticDataSpec:
    """Ground-truth linear data model: o = mixing s + obs_noise g.

    Sources s have independent coordinates with variances source_spectrum;
    g is isotropic observation noise.

    Attributes:
        mixing: d x r matrix with orthonormal columns (within 1e-10).
        source_spectrum: r positive, decaying variances (default 1/i).
        obs_noise: Observation noise scale, >= 0.
    """

    mixing: np.ndarray
    source_spectrum: np.ndarray
    obs_noise: float = 0.0

    def __post_init__(self):
        mixing = as_matrix(self.mixing)
        spectrum = np.asarray(self.source_spectrum, dtype=np.float64).ravel()
        d, r = mixing.shape
        if r > d:
            raise ValueError(f"mixing must be tall, got shape {mixing.shape}")
        if spectrum.shape != (r,):
            raise ValueError(
                f"source_spectrum must have length {r}, got {spectrum.shape}"
            )
        if np.any(spectrum <= 0) or not np.all(np.isfinite(spectrum)):
            raise ValueError("source_spectrum must be positive and finite")
        if self.obs_noise < 0:
            raise ValueError(f"obs_noise must be >= 0, got {self.obs_noise}")
        defect = frobenius_norm(mixing.T @ mixing - np.eye(r))
        if defect > 1e-10:
            raise ValueError(
                f"mixing columns must be orthonormal within 1e-10 (defect {defect:.3e})"
            )
        object.__setattr__(self, "mixing", mixing)
        object.__setattr__(self, "source_spectrum", spectrum)

    @property
    def d(self) -> int:
        return self.mixing.shape[0]

    @property
    def latent_rank(self) -> int:
        return self.mixing.shape[1]

    @classmethod
    def make(
        cls,
        d: int,
        latent_rank: int,
        rng: np.random.Generator,
        obs_noise: float = 0.0,
        source_spectrum=None,
    ) -> "SyntheticDataSpec":
        """Build a spec with seeded random orthonormal mixing columns.

        The default source spectrum is the decaying law lambda_i = 1/i.
        """
        if source_spectrum is None:
            source_spectrum = 1.0 / np.arange(1, latent_rank + 1, dtype=np.float64)
        return cls(
            mixing=orthonormal_columns(rng, d, latent_rank),
            source_spectrum=source_spectrum,
            obs_noise=obs_noise,
        )


@dataclass(frozen=True)
class BranchWeights:
    """Online and target linear maps (encoder+projector collapsed).

    Attributes:
        a_online: d x f online weights A_theta.
        a_target: d x f target weights A_xi.
    """

    a_online: np.ndarray
    a_target: np.ndarray

    def __post_init__(self):
        a_on = as_matrix(self.a_online)
        a_tg = as_matrix(self.a_target)
        if a_on.shape != a_tg.shape:
            raise ValueError(
                f"branch shapes differ: {a_on.shape} vs {a_tg.shape}"
            )
        object.__setattr__(self, "a_online", a_on)
        object.__setattr__(self, "a_target", a_tg)


@dataclass(frozen=True)
class TrainConfig:
    """Full specification of one training run.

    Attributes:
        d: Input dimension.
        f: Latent dimension, <= d.
        b: Batch size, >= 2.
        steps: Number of optimization steps.
        lr: Learning rate, >= 0.
        weight_decay: Decoupled weight-decay coefficient lambda, >= 0.
        tau_target: Target EMA coefficient tau in [0, 1].
        predictor_kind: Which closed-form predictor to use.
        predictor_params: Predictor settings; None means the kind's
            standard defaults.
        loss_normalized: Row-normalized loss (cosine form) instead of the
            plain squared Frobenius loss.
        seed: Master seed for all substreams.
        aug_noise_sigma: Additive view-noise scale, >= 0.
        aug_mask_prob: Coordinate-masking probability in [0, 1).
        data_model: Ground-truth synthetic data model.
        ablate_stop_gradient: Let gradient flow through the target term
            (both views encoded with the online weights for the loss).
        ablate_target_ema: Copy A_xi := A_theta each step instead of the
            EMA (equivalent to tau = 0).
        log_interval: Record diagnostics every this many steps (the final
            step always logs).
    """

    d: int
    f: int
    b: int
    steps: int
    lr: float
    data_model: SyntheticDataSpec
    seed: int = 0
    weight_decay: float = 0.0
    tau_target: float = 0.99
    predictor_kind: PredictorKind = PredictorKind.NS
    predictor_params: PredictorParams | None = None
    loss_normalized: bool = False
    aug_noise_sigma: float = 0.0
    aug_mask_prob: float = 0.0
    ablate_stop_gradient: bool = False
    ablate_target_ema: bool = False
    log_interval: int = 10

    def __post_init__(self):
        if self.b < 2:
            raise ValueError(f"batch size must be >= 2, got {self.b}")
        if not 1 <= self.f <= self.d:
            raise ValueError(f"need 1 <= f <= d, got f={self.f}, d={self.d}")
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps}")
        for name in ("lr", "weight_decay", "aug_noise_sigma"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        if not 0.0 <= self.tau_target <= 1.0:
            raise ValueError(f"tau_target must be in [0, 1], got {self.tau_target}")
        if not 0.0 <= self.aug_mask_prob < 1.0:
            raise ValueError(
                f"aug_mask_prob must be in [0, 1), got {self.aug_mask_prob}"
            )
        if self.log_interval < 1:
            raise ValueError(f"log_interval must be >= 1, got {self.log_interval}")
        if self.data_model.d != self.d:
            raise ValueError(
                f"data model dimension {self.data_model.d} != config d {self.d}"
            )

    def resolved_params(self) -> PredictorParams:
        if self.predictor_params is not None:
            return self.predictor_params
        return PredictorParams.for_kind(self.predictor_kind)


@dataclass(frozen=True)
class TrainRecord:
    """One logged diagnostics row.

    Attributes:
        step: 1-indexed step the row was recorded at.
        loss: This step's loss value.
        pred: Spectrum snapshot of the (EMA-smoothed, ridged) predictor.
        latent_srank: Stable rank of the online latent covariance
            Z^T Z / b.
        latent_normalized_svals: Descending eigenvalues of the latent
            covariance divided by the largest (the spectrum-histogram
            input).
        balancing_res: ||A^T A - P^T P||_F / max(||A^T A||_F, 1e-12).
        decorrelation_res: ||A^T A - I||_F / sqrt(f).
    """

    step: int
    loss: float
    pred: SpectrumDiagnostics
    latent_srank: float
    latent_normalized_svals: np.ndarray
    balancing_res: float
    decorrelation_res: float


@dataclass
class TrainLog:
    """Outcome of a training run.

    Attributes:
        config: The config that produced the run.
        records: Diagnostics rows, monotone in step.
        weights: Final (or last finite) branch weights.
        aborted_at: Step index of a numeric abort, or None for a clean run.
    """

    config: TrainConfig
    records: list = field(default_factory=list)
    weights: BranchWeights | None = None
    aborted_at: int | None = None


def sample_batch(
    spec: SyntheticDataSpec,
    b: int,
    rng: np.random.Generator,
    aug_noise_sigma: float = 0.0,
    aug_mask_prob: float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Draw b raw inputs and two augmented views of each.

    Raw inputs are o = s mixing^T + obs_noise g; each view adds isotropic
    noise of scale aug_noise_sigma and independently zeroes coordinates
    with probability aug_mask_prob. All random draws happen
    unconditionally in a fixed order (sources, observation noise, view-1
    noise, view-1 mask, view-2 noise, view-2 mask) so a zero augmentation
    setting consumes the same stream as a nonzero one.

    Args:
        spec: Data model.
        b: Number of raw inputs.
        rng: Source of randomness.
        aug_noise_sigma: Additive view-noise scale.
        aug_mask_prob: Coordinate-masking probability.

    Returns:
        Tuple (X, X') of b x d view matrices sharing raw inputs.
    """
    d, r = spec.d, spec.latent_rank
    s = rng.standard_normal((b, r)) * np.sqrt(spec.source_spectrum)
    g = rng.standard_normal((b, d))
    o = s @ spec.mixing.T + spec.obs_noise * g

    views = []
    for _ in range(2):
        noise = rng.standard_normal((b, d))
        mask = rng.random((b, d)) < aug_mask_prob
        x = o + aug_noise_sigma * noise
        x = np.where(mask, 0.0, x)
        views.append(x)
    return views[0], views[1]


def _normalized_rows(m: np.ndarray, side: str) -> tuple[np.ndarray, np.ndarray]:
    norms = np.sqrt(np.sum(m * m, axis=1))
    if np.any(norms == 0.0):
        raise ValueError(f"normalized mode hit a zero {side} row")
    return m / norms[:, None], norms


def byol_loss(z_on, z_tg, p, normalized: bool) -> float:
    """Two-branch prediction loss; target latents are constants.

    normalized=False: |Z P - Z'|_F^2. normalized=True: the row-cosine form
    sum_i |y_i/|y_i| - z'_i/|z'_i||^2 with y = Z P.

    Args:
        z_on: Online latents, b x f.
        z_tg: Target latents, b x f.
        p: Predictor, f x f.
        normalized: Choose the row-normalized form.

    Returns:
        Scalar loss.

    Raises:
        ValueError: Shape mismatch, or a zero row in normalized mode.
    """
    z_on = as_matrix(z_on)
    z_tg = as_matrix(z_tg)
    p = as_matrix(p)
    if z_on.shape != z_tg.shape or p.shape != (z_on.shape[1], z_on.shape[1]):
        raise ValueError(
            f"inconsistent shapes: z_on {z_on.shape}, z_tg {z_tg.shape}, p {p.shape}"
        )
    y = z_on @ p
    if not normalized:
        return float(frobenius_norm(y - z_tg) ** 2)
    y_hat, _ = _normalized_rows(y, "prediction")
    t_hat, _ = _normalized_rows(z_tg, "target")
    return float(np.sum((y_hat - t_hat) ** 2))


def _loss_grad_wrt_pred_rows(y: np.ndarray, z_tg: np.ndarray) -> np.ndarray:
    """d/dy of the row-normalized loss, rows stacked; target constant."""
    y_hat, y_norms = _normalized_rows(y, "prediction")
    t_hat, _ = _normalized_rows(z_tg, "target")
    inner = np.sum(y_hat * t_hat, axis=1, keepdims=True)
    return (2.0 / y_norms[:, None]) * (y_hat * inner - t_hat)


def encoder_grad(x, z_on, z_tg, p, a_online, normalized: bool) -> np.ndarray:
    """Gradient of the loss with respect to the online weights A_theta.

    The target branch receives no gradient (stop-gradient). Unnormalized
    mode: 2 X^T (Z P - Z') P^T; normalized mode chains the row-normalized
    loss gradient through Y = X A P.

    Args:
        x: Input batch, b x d.
        z_on: Online latents X A_theta (passed in to avoid recomputation).
        z_tg: Target latents, constants.
        p: Predictor, f x f.
        a_online: Online weights, d x f (shape reference).
        normalized: Loss mode.

    Returns:
        d x f gradient matrix.
    """
    x = as_matrix(x)
    z_on = as_matrix(z_on)
    z_tg = as_matrix(z_tg)
    p = as_matrix(p)
    a_online = as_matrix(a_online)
    if x.shape != (z_on.shape[0], a_online.shape[0]) or z_on.shape != z_tg.shape:
        raise ValueError(
            f"inconsistent shapes: x {x.shape}, z_on {z_on.shape}, "
            f"a_online {a_online.shape}"
        )
    y = z_on @ p
    if not normalized:
        g_rows = 2.0 * (y - z_tg)
    else:
        g_rows = _loss_grad_wrt_pred_rows(y, z_tg)
    return x.T @ g_rows @ p.T


def _ablated_grad(x, x_tg, a, p, normalized: bool) -> np.ndarray:
    """Gradient without stop-gradient: both views encoded by A_theta."""
    z = x @ a
    z_tg = x_tg @ a
    y = z @ p
    if not normalized:
        r = y - z_tg
        return 2.0 * (x.T @ r @ p.T) - 2.0 * (x_tg.T @ r)
    g_y = _loss_grad_wrt_pred_rows(y, z_tg)
    # Symmetric counterpart: d/dt of |y_hat - t_hat|^2 with y constant.
    t_hat, t_norms = _normalized_rows(z_tg, "target")
    y_hat, _ = _normalized_rows(y, "prediction")
    inner = np.sum(y_hat * t_hat, axis=1, keepdims=True)
    g_t = (2.0 / t_norms[:, None]) * (t_hat * inner - y_hat)
    return x.T @ g_y @ p.T + x_tg.T @ g_t


def balancing_check(a_online, p) -> tuple[float, float]:
    """Balancing and decorrelation residuals of the online weights.

    Returns (||A^T A - P^T P||_F / max(||A^T A||_F, 1e-12),
    ||A^T A - I||_F / sqrt(f)): how far the feature-space Gram is from the
    predictor Gram, and from identity (decorrelated features).

    Args:
        a_online: Online weights, d x f.
        p: Predictor, f x f.

    Returns:
        Tuple (balancing residual, decorrelation residual).
    """
    a_online = as_matrix(a_online)
    p = as_matrix(p)
    f = a_online.shape[1]
    if p.shape != (f, f):
        raise ValueError(f"predictor shape {p.shape} incompatible with f={f}")
    gram = a_online.T @ a_online
    balancing = frobenius_norm(gram - p.T @ p) / max(frobenius_norm(gram), 1e-12)
    decorrelation = frobenius_norm(gram - np.eye(f)) / np.sqrt(f)
    return float(balancing), float(decorrelation)


def _all_finite(*arrays) -> bool:
    return all(np.all(np.isfinite(a)) for a in arrays)


def train_byol(config: TrainConfig) -> TrainLog:
    """Run the two-branch training loop.

    Per step: sample two views, encode (Z = X A_theta, Z' = X' A_xi),
    compute the batchwise closed-form predictor, apply ridge then the
    predictor EMA (seeded with the first batch's value), take the SGD step
    on A_theta with decoupled weight decay, update A_xi by EMA, and log
    diagnostics every log_interval steps (plus the final step). A
    non-finite weight, predictor, or loss aborts the run, keeping the last
    good records and weights.

    Args:
        config: Run specification.

    Returns:
        TrainLog; `aborted_at` is set on numeric failure.
    """
    params = config.resolved_params()
    init_rng = np.random.default_rng([config.seed, 1])
    batch_rng = np.random.default_rng([config.seed, 2])

    a_on = init_rng.standard_normal((config.d, config.f)) / np.sqrt(config.d)
    a_tg = a_on.copy()
    log = TrainLog(config=config)
    log.weights = BranchWeights(a_online=a_on.copy(), a_target=a_tg.copy())

    # Overflow on a diverging run is an expected, handled path (abort with
    # the last good log), not something to warn about.
    with np.errstate(over="ignore", invalid="ignore"):
        return _run_loop(config, params, batch_rng, a_on, a_tg, log)


def _run_loop(config, params, batch_rng, a_on, a_tg, log) -> TrainLog:
    pred_state: PredictorState | None = None
    for t in range(1, config.steps + 1):
        x_on, x_tg = sample_batch(
            config.data_model,
            config.b,
            batch_rng,
            aug_noise_sigma=config.aug_noise_sigma,
            aug_mask_prob=config.aug_mask_prob,
        )
        z_on = x_on @ a_on
        target_weights = a_on if config.ablate_stop_gradient else a_tg
        z_tg = x_tg @ target_weights

        # Any numeric degeneracy inside the step (diverging square-root
        # iteration, overflowed latents rejected as non-finite, collapsed
        # rows in normalized mode) aborts the run with the last good log.
        try:
            p_batch = compute_predictor(config.predictor_kind, z_on, z_tg, params)
            p_batch = apply_ridge(p_batch, params.ridge_alpha)
            if pred_state is None:
                pred_state = PredictorState(
                    p=p_batch, kind=config.predictor_kind, params=params, step=1
                )
            else:
                pred_state = ema_update(pred_state, p_batch)
            p = pred_state.p
            if not _all_finite(p):
                raise NumericFailureError("non-finite predictor", iteration=t)
            loss = byol_loss(z_on, z_tg, p, config.loss_normalized)
            if config.ablate_stop_gradient:
                grad = _ablated_grad(x_on, x_tg, a_on, p, config.loss_normalized)
            else:
                grad = encoder_grad(
                    x_on, z_on, z_tg, p, a_on, config.loss_normalized
                )
        except (
            ValueError,
            OverflowError,
            DivergenceError,
            NumericFailureError,
            IllConditionedError,
        ):
            log.aborted_at = t
            break
        a_on = a_on - config.lr * (grad + config.weight_decay * a_on)
        if config.ablate_target_ema:
            a_tg = a_on.copy()
        else:
            a_tg = config.tau_target * a_tg + (1.0 - config.tau_target) * a_on

        if not (_all_finite(a_on, a_tg) and np.isfinite(loss)):
            log.aborted_at = t
            break
        log.weights = BranchWeights(a_online=a_on.copy(), a_target=a_tg.copy())

        if t % config.log_interval == 0 or t == config.steps:
            # The diagnostics square the iterates, so they can overflow a
            # step or two before the weights themselves go non-finite;
            # treat that exactly like an in-step numeric abort.
            try:
                cov = (z_on.T @ z_on) / config.b
                cov_eigs = np.clip(sym_eig(cov).eigenvalues, 0.0, None)
                top = cov_eigs[0] if cov_eigs.size else 0.0
                latent_svals = (
                    cov_eigs / top if top > 0 else np.zeros_like(cov_eigs)
                )
                latent_srank = stable_rank(cov) if top > 0 else 0.0
                bal, dec = balancing_check(a_on, p)
                record = TrainRecord(
                    step=t,
                    loss=loss,
                    pred=spectrum_snapshot(p, t),
                    latent_srank=latent_srank,
                    latent_normalized_svals=latent_svals,
                    balancing_res=bal,
                    decorrelation_res=dec,
                )
            except (
                ValueError,
                OverflowError,
                DivergenceError,
                NumericFailureError,
                IllConditionedError,
            ):
                log.aborted_at = t
                break
            log.records.append(record)
    return log


def config_as_dict(config: TrainConfig) -> dict:
    """Flatten a TrainConfig into JSON-serializable primitives (summary echo)."""
    params = config.resolved_params()
    return {
        "d": config.d,
        "f": config.f,
        "b": config.b,
        "steps": config.steps,
        "lr": config.lr,
        "weight_decay": config.weight_decay,
        "tau_target": config.tau_target,
        "predictor_kind": config.predictor_kind.value,
        "ridge_alpha": params.ridge_alpha,
        "ema_rho": params.ema_rho,
        "n_iters": params.sqrt_cfg.n_iters,
        "visser_eta": params.sqrt_cfg.visser_eta,
        "spectral_normalize": params.spectral_normalize,
        "scale_direct_cov": params.scale_direct_cov,
        "loss_normalized": config.loss_normalized,
        "seed": config.seed,
        "aug_noise_sigma": config.aug_noise_sigma,
        "aug_mask_prob": config.aug_mask_prob,
        "latent_rank": config.data_model.latent_rank,
        "obs_noise": config.data_model.obs_noise,
        "ablate_stop_gradient": config.ablate_stop_gradient,
        "ablate_target_ema": config.ablate_target_ema,
        "log_interval": config.log_interval,
    }
