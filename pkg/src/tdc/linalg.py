"""Dense matrix factorization kernels used by the decomposition algorithms.

The SVD is LAPACK's (via numpy) with a deterministic sign convention layered
on top: each left singular vector is flipped so that its entry of largest
magnitude is non-negative, which makes every downstream decomposition
reproducible across runs and platforms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD ``a = u @ diag(s) @ vt`` with s sorted non-increasing."""

    u: np.ndarray
    s: np.ndarray
    vt: np.ndarray


def _check_finite(name, a):
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")


def svd(m) -> SvdResult:
    """Deterministic thin SVD with the non-negative-peak sign convention."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError("svd expects a matrix")
    _check_finite("svd input", m)
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    # flip signs so the largest-magnitude entry of each left vector is >= 0
    peaks = np.argmax(np.abs(u), axis=0)
    flip = u[peaks, np.arange(u.shape[1])] < 0
    u[:, flip] *= -1.0
    vt[flip, :] *= -1.0
    return SvdResult(u=u, s=s, vt=vt)


def solve_least_squares(a, b, rcond: float = 1e-12) -> np.ndarray:
    """Return argmin_X ||a X - b||_F via the SVD pseudo-inverse.

    Singular values below ``rcond * s_max`` are treated as zero, so
    rank-deficient systems get the minimum-norm solution.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError("solve_least_squares expects a matrix for a")
    squeeze = b.ndim == 1
    if squeeze:
        b = b[:, None]
    if b.ndim != 2 or b.shape[0] != a.shape[0]:
        raise ValueError(f"shape mismatch: a is {a.shape}, b is {b.shape}")
    _check_finite("lstsq a", a)
    _check_finite("lstsq b", b)
    r = svd(a)
    cutoff = rcond * (r.s[0] if r.s.size else 0.0)
    inv_s = np.where(r.s > cutoff, 1.0 / np.where(r.s > cutoff, r.s, 1.0), 0.0)
    x = r.vt.T @ (inv_s[:, None] * (r.u.T @ b))
    return x[:, 0] if squeeze else x
