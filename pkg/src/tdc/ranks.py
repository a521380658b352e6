"""Map a retained parameter fraction to concrete decomposition ranks.

``retained_fraction`` is the fraction of the original layer's parameters
kept by the factorized form (a table entry of 50 means half the parameters
remain). The budget is ``retained_fraction * numel(weights)``.

* CP: closed form, R = round(budget / (C + H + W + T)), half away from zero.
* Tucker: spatial ranks stay at the full kernel size; the channel ranks are
  R1 = round(x * C), R4 = round(x * T) with x the positive root of
  x^2 * C*T*H*W + x * (C^2 + T^2) = budget.
* TT: candidate ranks grow proportionally to the average of the two mode
  sizes adjacent to each interface, are clipped to what a left-to-right
  TT-SVD chain can realize, and the scale is chosen so the achieved
  parameter count is nearest the budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import decomp


@dataclass(frozen=True)
class RankSpec:
    """A solved rank choice for one (shape, method, retained_fraction)."""

    method: str
    shape: tuple
    ranks: tuple  # (R,) for cp, (R1,R2,R3,R4) for tucker, (R1,R2,R3) for tt
    retained_fraction: float
    budget_params: int
    achieved_params: int

    @property
    def display_ranks(self) -> tuple:
        """Ranks padded with the implicit boundary ones for TT."""
        if self.method == "tt":
            return (1,) + self.ranks + (1,)
        return self.ranks

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "shape": list(self.shape),
            "ranks": list(self.ranks),
            "display_ranks": list(self.display_ranks),
            "retained_fraction": self.retained_fraction,
            "budget_params": self.budget_params,
            "achieved_params": self.achieved_params,
        }


def _round_half_away(v: float) -> int:
    return int(math.floor(v + 0.5)) if v >= 0 else -int(math.floor(-v + 0.5))


def _check(shape, retained_fraction):
    shape = tuple(int(s) for s in shape)
    if len(shape) != 4 or any(s < 1 for s in shape):
        raise ValueError(f"expected a 4-way shape, got {shape}")
    if not 0.0 < retained_fraction <= 1.0:
        raise ValueError(f"retained_fraction must be in (0, 1], got {retained_fraction}")
    return shape


def solve_cp_rank(shape, retained_fraction: float) -> RankSpec:
    shape = _check(shape, retained_fraction)
    numel = int(np.prod(shape, dtype=np.int64))
    per_rank = sum(shape)
    r = max(1, _round_half_away(retained_fraction * numel / per_rank))
    return RankSpec(
        method="cp",
        shape=shape,
        ranks=(r,),
        retained_fraction=retained_fraction,
        budget_params=_round_half_away(retained_fraction * numel),
        achieved_params=decomp.cp_param_count(shape, r),
    )


def solve_tucker_ranks(shape, retained_fraction: float) -> RankSpec:
    shape = _check(shape, retained_fraction)
    c, h, w, t = shape
    numel = c * h * w * t
    budget = retained_fraction * numel
    # params(x) = (x*C) * H*W * (x*T) + C*(x*C) + T*(x*T)
    a = float(c * t * h * w)
    b = float(c * c + t * t)
    x = (-b + math.sqrt(b * b + 4.0 * a * budget)) / (2.0 * a)
    r1 = min(max(1, _round_half_away(x * c)), c)
    r4 = min(max(1, _round_half_away(x * t)), t)
    ranks = (r1, h, w, r4)
    return RankSpec(
        method="tucker",
        shape=shape,
        ranks=ranks,
        retained_fraction=retained_fraction,
        budget_params=_round_half_away(budget),
        achieved_params=decomp.tucker_param_count(shape, ranks),
    )


def _tt_clip(raw, shape):
    # left-to-right chain feasibility: R_k <= R_{k-1} * I_{k-1} and
    # R_k <= prod of the remaining mode sizes to the right
    clipped = []
    r_prev = 1
    for i in range(3):
        right = int(np.prod(shape[i + 1 :], dtype=np.int64))
        r = max(1, min(raw[i], r_prev * shape[i], right))
        clipped.append(r)
        r_prev = r
    return tuple(clipped)


def solve_tt_ranks(shape, retained_fraction: float) -> RankSpec:
    shape = _check(shape, retained_fraction)
    numel = int(np.prod(shape, dtype=np.int64))
    budget = retained_fraction * numel
    # interface k sits between modes k-1 and k
    v = [(shape[i] + shape[i + 1]) / 2.0 for i in range(3)]

    # enumerate the breakpoints of x -> round(x * v_k); between consecutive
    # breakpoints the candidate tuple is constant. Raw values beyond a
    # component's unconditional max are clipped anyway, so breakpoints stop
    # there, and the scan ends once the (nondecreasing) parameter count is
    # far past every meaningful budget.
    maxr = decomp.tt_max_ranks(shape)
    x_hi = max((m + 1.0) / vk for m, vk in zip(maxr, v))
    cuts = sorted({(n + 0.5) / vk for m, vk in zip(maxr, v) for n in range(m + 1)})
    xs = [c + 1e-9 for c in cuts if c < x_hi] + [x_hi]

    best = None
    for x in xs:
        raw = [_round_half_away(x * vk) for vk in v]
        ranks = _tt_clip(raw, shape)
        params = decomp.tt_param_count(shape, ranks)
        # nearest achieved count to the budget; prefer the larger on a tie
        key = (abs(params - budget), -params)
        if best is None or key < best[0]:
            best = (key, ranks, params)
        if params > 2 * numel:
            break

    _, ranks, params = best
    return RankSpec(
        method="tt",
        shape=shape,
        ranks=ranks,
        retained_fraction=retained_fraction,
        budget_params=_round_half_away(budget),
        achieved_params=params,
    )


_SOLVERS = {"cp": solve_cp_rank, "tucker": solve_tucker_ranks, "tt": solve_tt_ranks}


def solve_ranks(method: str, shape, retained_fraction: float) -> RankSpec:
    """Dispatch to the solver for ``method`` ('cp', 'tucker', or 'tt')."""
    try:
        solver = _SOLVERS[method.lower()]
    except KeyError:
        raise ValueError(f"unknown method {method!r}; expected one of {sorted(_SOLVERS)}") from None
    return solver(shape, retained_fraction)
