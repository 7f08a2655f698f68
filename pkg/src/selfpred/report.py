"""Figure rendering for CLI reports.

Renders matplotlib figures (PNG, Agg backend) next to the delimited
outputs each command writes: rank/trace dynamics, distance-to-polar
curves, spectrum histograms, square-root residual curves, PCA alignment
traces, and predictor-distance heatmaps. Everything draws from the same
in-memory results that feed the CSVs, so figures and data always match.
"""

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from .diagnostics import spectrum_histogram  # noqa: E402


def _save(fig, out_dir, name: str) -> str:
    path = os.path.join(out_dir, name)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def render_train_figures(log, out_dir, bins: int = 16) -> list[str]:
    """Render the rank/trace, polar-distance, and spectrum figures.

    Args:
        log: TrainLog with at least one record.
        out_dir: Directory for the PNG files.
        bins: Histogram bins for the final-spectrum panel.

    Returns:
        Paths of the written figures (empty list for an empty log).
    """
    if not log.records:
        return []
    steps = np.array([r.step for r in log.records])
    f = log.config.f
    paths = []

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(steps, [r.pred.srank / f for r in log.records], label="srank(P) / f")
    ax.plot(steps, [r.pred.trace / f for r in log.records], label="tr(P) / f")
    ax.plot(
        steps,
        [r.latent_srank / f for r in log.records],
        label="srank(latent cov) / f",
        linestyle="--",
    )
    ax.set_xlabel("step")
    ax.set_ylabel("normalized rank / trace")
    ax.set_title("Predictor and latent rank dynamics")
    ax.legend()
    paths.append(_save(fig, out_dir, "rank_trace.png"))

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(steps, [r.pred.dist_polar for r in log.records], label="dist to polar")
    ax.plot(steps, [r.pred.quasi.eps_proj for r in log.records], label="eps_proj")
    ax.plot(steps, [r.pred.quasi.eps_sym for r in log.records], label="eps_sym")
    ax.plot(steps, [r.pred.quasi.eps_orth for r in log.records], label="eps_orth")
    ax.set_xlabel("step")
    ax.set_yscale("log")
    ax.set_title("Distance to the polar factor and quasi-orthogonality")
    ax.legend()
    paths.append(_save(fig, out_dir, "polar_distance.png"))

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    final = log.records[-1]
    hist = spectrum_histogram(final.latent_normalized_svals, bins)
    centers = 0.5 * (hist.bin_edges[:-1] + hist.bin_edges[1:])
    ax1.bar(centers, hist.counts, width=1.0 / bins * 0.9)
    ax1.set_xlabel("normalized singular value")
    ax1.set_ylabel("count")
    ax1.set_title(f"Latent spectrum at step {final.step}")
    quartiles = np.array(
        [
            spectrum_histogram(r.latent_normalized_svals, bins).percentiles
            for r in log.records
        ]
    )
    ax2.plot(steps, quartiles[:, 1], label="median")
    ax2.fill_between(steps, quartiles[:, 0], quartiles[:, 2], alpha=0.3, label="IQR")
    ax2.set_xlabel("step")
    ax2.set_ylabel("normalized singular value")
    ax2.set_title("Spectrum quartiles over training")
    ax2.legend()
    paths.append(_save(fig, out_dir, "spectrum.png"))
    return paths


def render_ridge_sweep_figure(alphas, pred_sranks, latent_sranks, out_dir) -> str:
    """Terminal stable ranks across the ridge sweep grid."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(alphas, pred_sranks, marker="o", label="srank(P)")
    ax.plot(alphas, latent_sranks, marker="s", label="srank(latent cov)")
    ax.set_xlabel("ridge alpha")
    ax.set_ylabel("terminal stable rank")
    ax.set_title("Ridge sweep")
    ax.legend()
    return _save(fig, out_dir, "ridge_sweep.png")


def render_bench_figure(curves: dict[str, np.ndarray], out_dir) -> str:
    """Residual-vs-iteration curves of the square-root methods.

    Args:
        curves: Method name -> residual array (mean over matrices).
        out_dir: Destination directory.

    Returns:
        Path of the written figure.
    """
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, residuals in sorted(curves.items()):
        ax.plot(np.arange(1, len(residuals) + 1), residuals, label=name)
    ax.set_xlabel("iteration")
    ax.set_ylabel("relative residual")
    ax.set_yscale("log")
    ax.set_title("Square-root iteration residuals")
    ax.legend()
    return _save(fig, out_dir, "sqrt_residuals.png")


def render_pca_figure(steps, alignment, angle, out_dir) -> str:
    """Alignment / principal-angle trace of a streaming PCA run."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(steps, alignment, label="|alignment| to top space")
    ax.plot(steps, angle, label="largest principal angle", linestyle="--")
    ax.axhline(0.99, color="gray", linewidth=0.8)
    ax.set_xlabel("step")
    ax.set_title("Streaming PCA convergence")
    ax.legend()
    return _save(fig, out_dir, "pca_alignment.png")


def render_predictor_heatmap(kinds: list[str], distances: np.ndarray, out_dir) -> str:
    """Pairwise Frobenius-distance heatmap over the predictor catalog."""
    fig, ax = plt.subplots(figsize=(5.5, 5))
    im = ax.imshow(distances, cmap="viridis")
    ax.set_xticks(range(len(kinds)), kinds, rotation=45, ha="right")
    ax.set_yticks(range(len(kinds)), kinds)
    ax.set_title("Pairwise predictor distances")
    fig.colorbar(im, ax=ax, shrink=0.8)
    return _save(fig, out_dir, "predictor_distances.png")


def render_quasi_figure(deltas, reports, out_dir) -> str:
    """Quasi-orthogonality epsilons against perturbation size."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(deltas, [r.eps_proj for r in reports], marker="o", label="eps_proj")
    ax.plot(deltas, [r.eps_sym for r in reports], marker="s", label="eps_sym")
    ax.plot(deltas, [r.eps_orth for r in reports], marker="^", label="eps_orth")
    bound = [r.eps_proj + r.op_norm * r.eps_sym for r in reports]
    ax.plot(deltas, bound, linestyle="--", color="gray", label="bound")
    if len(deltas) and min(deltas) > 0:
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.set_xlabel("perturbation delta")
    ax.set_ylabel("operator-norm defect")
    ax.set_title("Quasi-orthogonality defects")
    ax.legend()
    return _save(fig, out_dir, "quasi_ortho.png")
