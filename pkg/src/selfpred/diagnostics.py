"""Rank and spectrum instrumentation for training runs.

Implements the measured quantities behind the rank-dynamics figures -
stable rank, projection trace, normalized singular-value spectra and their
histograms, distance to the polar factor - plus the CSV serialization used
by the CLI. Numbers are rendered with 17 significant digits so a written
log reloads bit-exactly.
"""

import csv
import json
from dataclasses import dataclass

import numpy as np

from .linalg import as_matrix, frobenius_norm, operator_norm, svd
from .riemann import QuasiOrthoReport, quasi_orthogonality

#: Column order of the per-step training log CSV.
LOG_HEADER = (
    "step",
    "loss",
    "pred_srank",
    "pred_trace",
    "latent_srank",
    "dist_polar",
    "eps_proj",
    "eps_sym",
    "eps_orth",
    "balancing_res",
    "decorrelation_res",
)

#: Column order of the spectrum-histogram CSV.
HIST_HEADER = ("step", "bin_lo", "bin_hi", "count")


def stable_rank(m) -> float:
    """Stable rank srank(M) = |M|_F^2 / |||M|||^2 (a lower bound on rank).

    Args:
        m: Nonzero matrix.

    Returns:
        The stable rank, in [1, rank(M)].

    Raises:
        ValueError: Zero matrix (the ratio is undefined).
    """
    m = as_matrix(m)
    fro = frobenius_norm(m)
    if fro == 0.0:
        raise ValueError("stable rank of the zero matrix is undefined")
    # Square the ratio, not the norms: both can sit near the overflow edge
    # for blown-up training iterates while their quotient stays O(rank).
    return (fro / operator_norm(m)) ** 2


def projection_trace(m) -> float:
    """Trace of a square matrix (equals the rank for exact projections)."""
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"trace needs a square matrix, got shape {m.shape}")
    return float(np.trace(m))


@dataclass(frozen=True)
class HistogramResult:
    """Spectrum histogram over uniform bins of [0, 1].

    Attributes:
        counts: Occupancy per bin; sums to the number of input values.
        bin_edges: bins + 1 edges from 0 to 1; bins are left-closed with a
            right-closed top bin.
        percentiles: (25th, 50th, 75th) percentiles of the input values.
    """

    counts: np.ndarray
    bin_edges: np.ndarray
    percentiles: tuple[float, float, float]


def spectrum_histogram(values, bins: int) -> HistogramResult:
    """Histogram of normalized singular values over [0, 1].

    Args:
        values: Nonempty vector of values in [0, 1] (values are clipped to
            the interval so roundoff at the endpoints cannot drop mass).
        bins: Number of uniform bins, >= 1.

    Returns:
        HistogramResult with counts, edges, and quartiles.

    Raises:
        ValueError: Empty input or bins < 1.
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise ValueError("cannot histogram an empty value set")
    if bins < 1:
        raise ValueError(f"bins must be >= 1, got {bins}")
    if not np.all(np.isfinite(values)):
        raise ValueError("histogram input contains non-finite values")
    clipped = np.clip(values, 0.0, 1.0)
    counts, edges = np.histogram(clipped, bins=bins, range=(0.0, 1.0))
    p25, p50, p75 = np.percentile(clipped, [25.0, 50.0, 75.0])
    return HistogramResult(
        counts=counts,
        bin_edges=edges,
        percentiles=(float(p25), float(p50), float(p75)),
    )


@dataclass(frozen=True)
class SpectrumDiagnostics:
    """Spectrum snapshot of one matrix at one training step.

    Attributes:
        step: Training step the snapshot belongs to.
        srank: Stable rank computed from the singular values.
        trace: Sum of diagonal entries.
        singular_values: Descending singular values.
        normalized_singular_values: Values divided by the largest (all in
            [0, 1]; zeros for a zero matrix).
        dist_polar: Frobenius distance to the polar factor,
            sqrt(sum_i (s_i - 1)^2).
        quasi: Quasi-orthogonality defects of the matrix.
    """

    step: int
    srank: float
    trace: float
    singular_values: np.ndarray
    normalized_singular_values: np.ndarray
    dist_polar: float
    quasi: QuasiOrthoReport


def spectrum_snapshot(m, step: int) -> SpectrumDiagnostics:
    """Compute the full spectrum diagnostics of a square matrix.

    The stable rank is derived from the same singular values that are
    reported, so srank == sum(s^2)/s_1^2 holds exactly; a zero matrix
    yields srank 0 and an all-zero normalized spectrum instead of an
    error, so a degenerate training step still logs.

    Args:
        m: Square matrix (the predictor, typically).
        step: Step index recorded in the snapshot.

    Returns:
        SpectrumDiagnostics for m.
    """
    m = as_matrix(m)
    _, s, _ = svd(m)
    s_top = float(s[0]) if s.size else 0.0
    if s_top > 0.0:
        srank = float(np.sum(s * s) / s_top**2)
        normalized = s / s_top
    else:
        srank = 0.0
        normalized = np.zeros_like(s)
    return SpectrumDiagnostics(
        step=step,
        srank=srank,
        trace=projection_trace(m),
        singular_values=s,
        normalized_singular_values=normalized,
        dist_polar=float(np.sqrt(np.sum((s - 1.0) ** 2))),
        quasi=quasi_orthogonality(m),
    )


def float_repr(x) -> str:
    """Render one number with 17 significant digits (bit-faithful reload)."""
    return "%.17g" % float(x)


def emit_csv(log, path) -> None:
    """Write a training log's per-step records as CSV.

    Accepts any object with a `records` iterable whose items expose the
    fields step, loss, pred (SpectrumDiagnostics), latent_srank,
    balancing_res, decorrelation_res.

    Args:
        log: Training log.
        path: Destination file path.

    Raises:
        OSError: I/O failure, annotated with the path.
    """
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(LOG_HEADER)
            for r in log.records:
                writer.writerow(
                    [str(int(r.step))]
                    + [
                        float_repr(v)
                        for v in (
                            r.loss,
                            r.pred.srank,
                            r.pred.trace,
                            r.latent_srank,
                            r.pred.dist_polar,
                            r.pred.quasi.eps_proj,
                            r.pred.quasi.eps_sym,
                            r.pred.quasi.eps_orth,
                            r.balancing_res,
                            r.decorrelation_res,
                        )
                    ]
                )
    except OSError as exc:
        raise OSError(f"failed writing log CSV to {path}: {exc}") from exc


def emit_histogram_csv(log, path, bins: int = 16) -> None:
    """Write per-record latent-spectrum histograms as CSV.

    One row per (record, bin): step, bin_lo, bin_hi, count. Histograms are
    over each record's normalized latent singular values.

    Args:
        log: Training log whose records expose latent_normalized_svals.
        path: Destination file path.
        bins: Uniform bins over [0, 1].

    Raises:
        OSError: I/O failure, annotated with the path.
    """
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(HIST_HEADER)
            for r in log.records:
                hist = spectrum_histogram(r.latent_normalized_svals, bins)
                for i, count in enumerate(hist.counts):
                    writer.writerow(
                        [
                            str(int(r.step)),
                            float_repr(hist.bin_edges[i]),
                            float_repr(hist.bin_edges[i + 1]),
                            str(int(count)),
                        ]
                    )
    except OSError as exc:
        raise OSError(f"failed writing histogram CSV to {path}: {exc}") from exc


def load_csv(path) -> dict[str, np.ndarray]:
    """Load a CSV written by this module into column arrays.

    Args:
        path: CSV file with a header row.

    Returns:
        Mapping column name -> float64 array (17-digit rendering makes the
        round trip exact).
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        columns = {name: [] for name in header}
        for row in reader:
            for name, cell in zip(header, row):
                columns[name].append(float(cell))
    return {name: np.asarray(vals, dtype=np.float64) for name, vals in columns.items()}


def write_summary(path, payload: dict) -> None:
    """Write a machine-readable run summary as sorted JSON.

    Args:
        path: Destination file path.
        payload: JSON-serializable summary (config echo, terminal metrics,
            tool version, ...). No timestamps are added, keeping reruns
            bitwise identical.
    """
    try:
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"failed writing summary to {path}: {exc}") from exc
