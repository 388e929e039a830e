"""Dense small-matrix kernels.

Thin SVD with a deterministic sign convention, the exact matrix sign
(orthogonal polar factor), its Newton-Schulz polynomial approximation,
spectral and trace norms, stable rank, and the raw binary matrix layout
used by checkpoints. Everything operates on float64 2-D numpy arrays and
is pure; higher-level modules never call LAPACK directly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInputError

__all__ = [
    "SvdResult",
    "NewtonSchulzCoeffs",
    "NEWTON_SCHULZ_DEFAULT",
    "MUON_QUINTIC",
    "as_matrix",
    "svd_thin",
    "msign_exact",
    "newton_schulz",
    "spectral_norm",
    "trace_norm",
    "stable_rank",
    "save_matrix",
    "load_matrix",
]


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD factors with k = min(m, n).

    Attributes
    ----------
    u : (m, k) array with orthonormal columns.
    s : (k,) nonnegative singular values, nonincreasing.
    v : (n, k) array with orthonormal columns, so that u @ diag(s) @ v.T
        reconstructs the input.
    """

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray


@dataclass(frozen=True)
class NewtonSchulzCoeffs:
    """Polynomial coefficients for one sign-iteration step.

    Each step maps X to a*X + b*(X X^T) X + c*(X X^T)^2 X, applied after the
    input is scaled to unit Frobenius norm.
    """

    a: float
    b: float
    c: float
    iterations: int

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise InvalidInputError("iterations must be >= 1")


# Cubic sign iteration, superattracting at 1; meets the documented accuracy
# bound on inputs with singular-value spread down to 0.1.
NEWTON_SCHULZ_DEFAULT = NewtonSchulzCoeffs(a=1.5, b=-0.5, c=0.0, iterations=30)

# Quintic used by fast Muon implementations. Converges in very few steps but
# only to ~0.3 per singular value, so it trades accuracy for wall clock.
MUON_QUINTIC = NewtonSchulzCoeffs(a=3.4445, b=-4.7750, c=2.0315, iterations=5)


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    """Validate and return ``x`` as a finite float64 2-D array."""
    m = np.asarray(x, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise InvalidInputError(f"{name} must be a 2-D matrix, got shape {m.shape}")
    if not np.isfinite(m).all():
        raise InvalidInputError(f"{name} contains NaN or Inf entries")
    return m


def svd_thin(m) -> SvdResult:
    """Thin SVD with a reproducible sign convention.

    The largest-magnitude entry of each left singular vector is made
    nonnegative (first index wins on magnitude ties) and the corresponding
    right vector is flipped with it, so that repeated factorizations of the
    same input yield identical factors.
    """
    a = as_matrix(m)
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    # Flip signs column by column; equal singular values keep the order
    # LAPACK returned them in.
    for j in range(u.shape[1]):
        i = int(np.argmax(np.abs(u[:, j])))
        if u[i, j] < 0.0:
            u[:, j] = -u[:, j]
            vt[j, :] = -vt[j, :]
    return SvdResult(u=u, s=s, v=vt.T)


def msign_exact(m) -> np.ndarray:
    """Orthogonal polar factor U_r V_r^T over singular values above cutoff.

    Singular triplets with s_i <= 1e-12 * s_max are treated as numerical
    null space and dropped. The all-zero matrix maps to the all-zero matrix,
    which keeps momentum updates well defined when a gradient vanishes.
    """
    a = as_matrix(m)
    res = svd_thin(a)
    if res.s[0] == 0.0:
        return np.zeros_like(a)
    keep = res.s > 1e-12 * res.s[0]
    return res.u[:, keep] @ res.v[:, keep].T


def newton_schulz(m, coeffs: NewtonSchulzCoeffs = NEWTON_SCHULZ_DEFAULT) -> np.ndarray:
    """Approximate the matrix sign by a fixed polynomial iteration.

    Parameters
    ----------
    m : nonzero 2-D array.
    coeffs : iteration polynomial and step count. With the default cubic,
        outputs agree with :func:`msign_exact` to well within
        0.05 * sqrt(min(m, n)) whenever s_min / s_max >= 0.1.

    Raises
    ------
    InvalidInputError
        If the input is zero (the iteration has no scale to normalize by).
    """
    a = as_matrix(m)
    norm = float(np.linalg.norm(a))
    if norm == 0.0:
        raise InvalidInputError("newton_schulz requires a nonzero matrix")
    x = a / norm
    for _ in range(coeffs.iterations):
        g = x @ x.T
        if coeffs.c == 0.0:
            x = coeffs.a * x + (coeffs.b * g) @ x
        else:
            x = coeffs.a * x + (coeffs.b * g + coeffs.c * (g @ g)) @ x
    return x


def spectral_norm(m) -> float:
    """Largest singular value."""
    a = as_matrix(m)
    return float(np.linalg.svd(a, compute_uv=False)[0])


def trace_norm(m) -> float:
    """Sum of singular values."""
    a = as_matrix(m)
    return float(np.linalg.svd(a, compute_uv=False).sum())


def stable_rank(m) -> float:
    """Squared Frobenius norm over squared spectral norm, in [1, min(m, n)]."""
    a = as_matrix(m)
    s = np.linalg.svd(a, compute_uv=False)
    s2 = s * s
    top = float(s2[0])
    if top == 0.0:
        raise InvalidInputError("stable_rank is undefined for the zero matrix")
    return float(s2.sum() / top)


# Binary layout: two little-endian uint64 dims, then the row-major float64
# payload. Shared by checkpoint files and golden fixtures.

def save_matrix(path, m) -> None:
    a = as_matrix(m)
    rows, cols = a.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<QQ", rows, cols))
        fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_matrix(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise InvalidInputError(f"matrix file {path} is truncated")
    rows, cols = struct.unpack("<QQ", raw[:16])
    expected = 16 + rows * cols * 8
    if len(raw) != expected:
        raise InvalidInputError(
            f"matrix file {path} has {len(raw)} bytes, expected {expected}"
        )
    data = np.frombuffer(raw[16:], dtype="<f8").reshape(rows, cols)
    return as_matrix(data, name=str(path))
