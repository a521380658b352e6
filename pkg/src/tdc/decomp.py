"""CP, Tucker, and Tensor-Train decompositions of 4-way convolution weights.

Mode order is fixed throughout: (C, H, W, T) = (input channels, kernel
height, kernel width, output channels).

* CP is fitted with plain ALS (no line search, regularization, or column
  normalization). Factors are initialized uniformly on [0, 1) from a Philox
  counter-based generator, so runs are bit-reproducible for a given seed.
* Tucker is fitted with HOSVD. The canonical stored form contracts the
  spatial factors into the core, giving a core of shape (R1, H, W, R4)
  plus channel factor matrices; parameter counts refer to this form.
* TT is fitted with TT-SVD, sweeping left to right in mode order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import linalg, tensor

ALS_MAX_ITERS = 500
ALS_TOL = 1e-8

MODE_ORDER = ["in_channels", "kernel_h", "kernel_w", "out_channels"]


@dataclass
class CpFactorization:
    """Sum of ``rank`` rank-one tensors; factors are (mode size, rank) matrices."""

    rank: int
    factors: list  # [C x R, H x R, W x R, T x R]
    seed: int | None = None
    iterations_run: int | None = None
    final_relative_error: float | None = None
    error_history: list = field(default_factory=list, repr=False)

    method = "cp"

    @property
    def shape(self):
        return tuple(f.shape[0] for f in self.factors)


@dataclass
class TuckerFactorization:
    """Tucker with the spatial factors contracted into the core.

    ``core`` has shape (R1, H, W, R4); ``c`` is C x R1 and ``t`` is T x R4.
    ``ranks`` records the requested (R1, R2, R3, R4).
    """

    ranks: tuple
    core: np.ndarray
    c: np.ndarray
    t: np.ndarray
    final_relative_error: float | None = None

    method = "tucker"

    @property
    def shape(self):
        return (self.c.shape[0], self.core.shape[1], self.core.shape[2], self.t.shape[0])


@dataclass
class TtFactorization:
    """Linear chain C x R1, R1 x H x R2, R2 x W x R3, R3 x T."""

    ranks: tuple
    cores: list
    final_relative_error: float | None = None

    method = "tt"

    @property
    def shape(self):
        return (self.cores[0].shape[0], self.cores[1].shape[1], self.cores[2].shape[1], self.cores[3].shape[1])


def _require_4way(w) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 4:
        raise ValueError(f"expected a 4-way tensor, got {w.ndim} modes")
    return w


def _khatri_rao(mats):
    # column-wise Kronecker product; later matrices cycle fastest,
    # matching the unfolding convention in tensor.unfold
    out = mats[0]
    cols = out.shape[1]
    for m in mats[1:]:
        out = (out[:, None, :] * m[None, :, :]).reshape(-1, cols)
    return out


def _mttkrp(w, factors, n):
    # contract the largest non-target mode first (BLAS), then fold in the
    # small ones; avoids materializing the full Khatri-Rao matrix
    order = sorted((k for k in range(4) if k != n), key=lambda k: w.shape[k], reverse=True)
    k0 = order[0]
    out = np.tensordot(w, factors[k0], axes=([k0], [0]))
    rem = [k for k in range(4) if k != k0]
    for k in order[1:]:
        ax = rem.index(k)
        shp = [1] * (out.ndim - 1) + [out.shape[-1]]
        shp[ax] = out.shape[ax]
        out = (out * factors[k].reshape(shp)).sum(axis=ax)
        rem.pop(ax)
    return out


def cp_als(w, rank: int, seed: int, max_iters: int = ALS_MAX_ITERS, tol: float = ALS_TOL) -> CpFactorization:
    """Fit a rank-``rank`` CP decomposition by alternating least squares.

    Each sweep updates the four factors in mode order, solving the
    least-squares subproblem against the mode-n unfolding through its
    normal equations. Stops when the relative improvement of the
    reconstruction error drops below ``tol`` or after ``max_iters`` sweeps.
    The recorded error sequence is non-increasing; a sweep that fails to
    improve beyond roundoff ends the loop with the previous factors kept.
    """
    w = _require_4way(w)
    if rank < 1:
        raise ValueError("CP rank must be >= 1")
    wnorm2 = float(np.sum(w * w))
    if wnorm2 == 0.0:
        raise ValueError("cannot decompose an all-zero tensor")

    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    factors = [rng.random((s, rank)) for s in w.shape]
    grams = [f.T @ f for f in factors]

    errors: list[float] = []
    prev = None
    prev_factors = None
    iters = 0
    for _ in range(max_iters):
        for n in range(4):
            g = np.ones((rank, rank))
            for k in range(4):
                if k != n:
                    g *= grams[k]
            m = _mttkrp(w, factors, n)
            try:
                sol = np.linalg.solve(g, m.T)
            except np.linalg.LinAlgError:
                sol = linalg.solve_least_squares(g, m.T)
            factors[n] = np.ascontiguousarray(sol.T)
            grams[n] = factors[n].T @ factors[n]
        # ||w - w_hat||^2 via the Gram identity; m is the mode-3 MTTKRP
        gg = np.ones((rank, rank))
        for k in range(3):
            gg *= grams[k]
        recon2 = float(np.sum(gg * grams[3]))
        inner = float(np.sum(factors[3] * m))
        err = float(np.sqrt(max(wnorm2 - 2.0 * inner + recon2, 0.0) / wnorm2))
        if prev is not None and err > prev * (1.0 + 1e-12):
            factors = prev_factors
            break
        iters += 1
        errors.append(err)
        if prev is not None and (prev - err) < tol * prev:
            break
        prev = err
        prev_factors = [f.copy() for f in factors]

    return CpFactorization(
        rank=rank,
        factors=factors,
        seed=int(seed),
        iterations_run=iters,
        final_relative_error=errors[-1] if errors else None,
        error_history=errors,
    )


def tucker_hosvd(w, ranks) -> TuckerFactorization:
    """Tucker decomposition via HOSVD at per-mode ranks (R1, R2, R3, R4).

    Factor matrices are the leading left singular vectors of each mode-n
    unfolding; the core is the contraction of ``w`` with their transposes.
    The returned core has the spatial factors contracted back in.
    """
    w = _require_4way(w)
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != 4:
        raise ValueError("tucker ranks must be a 4-tuple")
    for i, r in enumerate(ranks):
        if not 1 <= r <= w.shape[i]:
            raise ValueError(f"rank {r} out of range [1, {w.shape[i]}] at mode {i}")

    us = [linalg.svd(tensor.unfold(w, k)).u[:, : ranks[k]] for k in range(4)]
    core = w
    for k in range(4):
        core = tensor.mode_n_product(core, us[k].T, k)
    # contract the spatial factors back into the core: (R1, H, W, R4)
    core = tensor.mode_n_product(core, us[1], 1)
    core = tensor.mode_n_product(core, us[2], 2)

    f = TuckerFactorization(ranks=ranks, core=core, c=us[0], t=us[3])
    wn = tensor.frobenius_norm(w)
    f.final_relative_error = tensor.frobenius_norm(w - reconstruct(f)) / wn if wn > 0 else 0.0
    return f


def tt_max_ranks(shape) -> tuple:
    """Unconditional max TT ranks: min of left and right mode-size products."""
    shape = tuple(int(s) for s in shape)
    out = []
    for i in range(1, len(shape)):
        left = int(np.prod(shape[:i], dtype=np.int64))
        right = int(np.prod(shape[i:], dtype=np.int64))
        out.append(min(left, right))
    return tuple(out)


def tt_svd(w, ranks) -> TtFactorization:
    """TT decomposition by sequential reshaping plus truncated SVD.

    Sweeps left to right in mode order. Ranks are clamped to what the
    chain actually realizes (a requested rank can exceed the dimensions
    of an intermediate matrix when an earlier rank was truncated hard);
    the stored ``ranks`` are the realized ones.
    """
    w = _require_4way(w)
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != 3:
        raise ValueError("tt ranks must be a 3-tuple")
    maxr = tt_max_ranks(w.shape)
    for i, (r, m) in enumerate(zip(ranks, maxr)):
        if not 1 <= r <= m:
            raise ValueError(f"rank {r} out of range [1, {m}] at position {i + 1}")

    cores = []
    realized = []
    carry = w.reshape(w.shape[0], -1)
    r_prev = 1
    for i in range(3):
        rows = r_prev * w.shape[i]
        mat = carry.reshape(rows, -1)
        res = linalg.svd(mat)
        r = min(ranks[i], res.u.shape[1])
        realized.append(r)
        u = res.u[:, :r]
        cores.append(u.reshape(r_prev, w.shape[i], r) if i else u)
        carry = res.s[:r, None] * res.vt[:r, :]
        r_prev = r
    cores.append(carry.reshape(r_prev, w.shape[3]))

    f = TtFactorization(ranks=tuple(realized), cores=cores)
    wn = tensor.frobenius_norm(w)
    f.final_relative_error = tensor.frobenius_norm(w - reconstruct(f)) / wn if wn > 0 else 0.0
    return f


def reconstruct(f) -> np.ndarray:
    """Expand a factorization back to the dense 4-way tensor."""
    if isinstance(f, CpFactorization):
        c, h, x, t = f.factors
        kr = _khatri_rao([c, h, x])
        out = kr @ t.T
        return out.reshape(c.shape[0], h.shape[0], x.shape[0], t.shape[0])
    if isinstance(f, TuckerFactorization):
        out = np.tensordot(f.c, f.core, axes=([1], [0]))  # C,H,W,R4
        return np.ascontiguousarray(np.tensordot(out, f.t, axes=([3], [1])))
    if isinstance(f, TtFactorization):
        g0, g1, g2, g3 = f.cores
        out = np.tensordot(g0, g1, axes=([1], [0]))  # C,H,R2
        out = np.tensordot(out, g2, axes=([2], [0]))  # C,H,W,R3
        return np.ascontiguousarray(np.tensordot(out, g3, axes=([3], [0])))
    raise TypeError(f"not a factorization: {type(f).__name__}")


def param_count(f) -> int:
    """Number of stored parameters of a factorization."""
    if isinstance(f, CpFactorization):
        return int(f.rank * sum(fac.shape[0] for fac in f.factors))
    if isinstance(f, TuckerFactorization):
        c_dim, r1 = f.c.shape
        t_dim, r4 = f.t.shape
        kh, kw = f.core.shape[1], f.core.shape[2]
        return int(r1 * kh * kw * r4 + c_dim * r1 + t_dim * r4)
    if isinstance(f, TtFactorization):
        return int(sum(core.size for core in f.cores))
    raise TypeError(f"not a factorization: {type(f).__name__}")


def cp_param_count(shape, rank: int) -> int:
    return int(rank) * int(sum(shape))


def tucker_param_count(shape, ranks) -> int:
    c, h, w, t = shape
    r1, _, _, r4 = ranks
    return int(r1 * h * w * r4 + c * r1 + t * r4)


def tt_param_count(shape, ranks) -> int:
    c, h, w, t = shape
    r1, r2, r3 = ranks
    return int(c * r1 + r1 * h * r2 + r2 * w * r3 + r3 * t)


_CP_FILES = ["factor_c.tdt", "factor_h.tdt", "factor_w.tdt", "factor_t.tdt"]
_TT_FILES = ["core_0.tdt", "core_1.tdt", "core_2.tdt", "core_3.tdt"]
SIDECAR = "factorization.json"


def save_factorization(f, dirpath) -> None:
    """Write a factorization as a directory of TDT1 files plus a JSON sidecar."""
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    if isinstance(f, CpFactorization):
        for name, mat in zip(_CP_FILES, f.factors):
            tensor.write_tensor(d / name, mat)
        ranks = [f.rank]
    elif isinstance(f, TuckerFactorization):
        tensor.write_tensor(d / "core.tdt", f.core)
        tensor.write_tensor(d / "factor_c.tdt", f.c)
        tensor.write_tensor(d / "factor_t.tdt", f.t)
        ranks = list(f.ranks)
    elif isinstance(f, TtFactorization):
        for name, core in zip(_TT_FILES, f.cores):
            tensor.write_tensor(d / name, core)
        ranks = list(f.ranks)
    else:
        raise TypeError(f"not a factorization: {type(f).__name__}")
    meta = {
        "method": f.method,
        "ranks": ranks,
        "mode_order": MODE_ORDER,
        "seed": getattr(f, "seed", None),
        "iterations_run": getattr(f, "iterations_run", None),
        "final_relative_error": f.final_relative_error,
    }
    (d / SIDECAR).write_text(json.dumps(meta, indent=2) + "\n")


def load_factorization(dirpath):
    """Inverse of :func:`save_factorization`."""
    d = Path(dirpath)
    meta = json.loads((d / SIDECAR).read_text())
    method = meta["method"]
    if method == "cp":
        factors = [tensor.read_tensor(d / name) for name in _CP_FILES]
        f = CpFactorization(rank=int(meta["ranks"][0]), factors=factors, seed=meta.get("seed"))
    elif method == "tucker":
        f = TuckerFactorization(
            ranks=tuple(meta["ranks"]),
            core=tensor.read_tensor(d / "core.tdt"),
            c=tensor.read_tensor(d / "factor_c.tdt"),
            t=tensor.read_tensor(d / "factor_t.tdt"),
        )
    elif method == "tt":
        cores = [tensor.read_tensor(d / name) for name in _TT_FILES]
        f = TtFactorization(ranks=tuple(meta["ranks"]), cores=cores)
    else:
        raise ValueError(f"unknown factorization method {method!r}")
    f.final_relative_error = meta.get("final_relative_error")
    if method == "cp":
        f.iterations_run = meta.get("iterations_run")
    return f
