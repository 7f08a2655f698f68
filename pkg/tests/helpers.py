"""Shared test utilities: seeded random matrix factories.

np.linalg is allowed here (tests only) as an independent oracle and for
auxiliary constructions like QR frames.
"""

from pathlib import Path

import numpy as np

#: Committed reference outputs for the fixed-seed reproducibility check.
GOLDEN_DIR = Path(__file__).resolve().parent / "golden"


def random_orthogonal(rng: np.random.Generator, f: int) -> np.ndarray:
    """Haar-ish random orthogonal matrix from QR of a Gaussian."""
    q, r = np.linalg.qr(rng.standard_normal((f, f)))
    # Fix signs so the distribution does not depend on the QR convention.
    return q * np.sign(np.diag(r))


def random_frame(rng: np.random.Generator, f: int, k: int) -> np.ndarray:
    """Random f x k matrix with orthonormal columns."""
    q, r = np.linalg.qr(rng.standard_normal((f, k)))
    return q * np.sign(np.diag(r))


def spd_with_spectrum(rng: np.random.Generator, eigenvalues) -> np.ndarray:
    """Symmetric PSD matrix with the given spectrum in a random basis."""
    lam = np.asarray(eigenvalues, dtype=np.float64)
    q = random_orthogonal(rng, len(lam))
    m = q @ np.diag(lam) @ q.T
    return 0.5 * (m + m.T)


def log_spaced_spd(
    rng: np.random.Generator, f: int, cond: float, lam_max: float = 1.0
) -> np.ndarray:
    """SPD matrix with log-spaced eigenvalues in [lam_max/cond, lam_max]."""
    lam = np.logspace(np.log10(lam_max / cond), np.log10(lam_max), f)[::-1]
    return spd_with_spectrum(rng, lam)
