"""Truthful payments for bidders with a hard ex post return constraint.

Write p~(v) = v x(v) - integral_0^v x(z) dz for the classical envelope payment
of a monotone rule. A bidder who must earn ``ratio`` times any payment accepts
p(v) = ratio * p~(v) - rebate(v), where the rebate is the largest constraint
violation left at lower reports:

    rebate(v) = max_{0 <= z <= v} [ ratio * p~(z) - z x(z) ].

The max is taken over an explicit candidate set: a uniform grid, every segment
endpoint (right-continuous, so post-jump values are included), the stationary
points of the violation curve on linear pieces, and the query point itself.
Candidates make the rebate exact for all structured shapes, and a single
left-to-right running max turns the pointwise formula into a schedule.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import IO

import numpy as np

from .allocation import AllocationRule
from .errors import ConstructionError
from .formatting import fmt

DEFAULT_GRID_N = 10_001

#: Feasibility slack for the hard constraint v * x >= p, fixed package-wide.
FEASIBILITY_TOL = 1e-12


@dataclass(frozen=True)
class RoiTarget:
    """Return multiple demanded by the bidder; must satisfy 1 < ratio < inf."""

    ratio: float

    def __post_init__(self):
        ok = (
            isinstance(self.ratio, (int, float))
            and not isinstance(self.ratio, bool)
            and math.isfinite(self.ratio)
            and self.ratio > 1.0
        )
        if not ok:
            raise ConstructionError(f"ROI ratio must satisfy 1 < ratio < inf, got {self.ratio!r}")
        object.__setattr__(self, "ratio", float(self.ratio))


def myerson_payment(rule: AllocationRule, v):
    """Envelope payment v x(v) - integral_0^v x, exact via prefix integrals."""
    return v * rule.evaluate(v) - rule.prefix_integral(v)


def roi_violation(rule: AllocationRule, m: RoiTarget, z):
    """ratio * p~(z) - z x(z); positive where scaled envelope payments break even."""
    zx = z * rule.evaluate(z)
    return m.ratio * (zx - rule.prefix_integral(z)) - zx


@lru_cache(maxsize=128)
def _candidate_grid(rule: AllocationRule, ratio: float, grid_n: int) -> np.ndarray:
    if grid_n < 2:
        raise ConstructionError("payment grids need at least two points")
    pieces = [
        np.linspace(0.0, rule.vmax, grid_n),
        np.asarray(rule.knots()),
        np.asarray(rule.stationary_candidates(ratio)),
    ]
    return np.unique(np.concatenate([p for p in pieces if p.size]))


def rebate(rule: AllocationRule, m: RoiTarget, v: float, grid_n: int = DEFAULT_GRID_N) -> float:
    """Largest violation at or below v over the candidate set (never negative)."""
    grid = _candidate_grid(rule, m.ratio, grid_n)
    cands = grid[grid <= v]
    zs = np.concatenate([cands, [v]])
    x = rule.evaluate(zs)
    pt = zs * x - rule.prefix_integral(zs)
    g = m.ratio * pt - zs * x
    return max(float(np.max(g)), 0.0)


def roi_payment(rule: AllocationRule, m: RoiTarget, v: float, grid_n: int = DEFAULT_GRID_N) -> float:
    """Truthful payment at v for the given rule and ROI target."""
    x = rule.evaluate(v)
    pt = v * x - rule.prefix_integral(v)
    return m.ratio * pt - rebate(rule, m, v, grid_n)


def payment_schedule(
    rule: AllocationRule, m: RoiTarget, grid_n: int = DEFAULT_GRID_N
) -> PaymentSchedule:
    """Vectorized payments on the candidate grid via one running-max sweep."""
    grid = _candidate_grid(rule, m.ratio, grid_n)
    x = rule.evaluate(grid)
    pt = grid * x - rule.prefix_integral(grid)
    g = m.ratio * pt - grid * x
    reb = np.maximum.accumulate(g)
    payments = m.ratio * pt - reb
    return PaymentSchedule(
        grid=grid,
        allocations=x,
        myerson=pt,
        rebates=reb,
        payments=payments,
        allocation=rule,
        m=m,
        derived=True,
    )


@dataclass(frozen=True, eq=False)
class PaymentSchedule:
    """Sampled payment curve tied to its allocation rule and ROI target.

    ``derived`` schedules evaluate off-grid payments by exact recomputation
    (the running max is a prefix of the stored sweep, plus the query point);
    hand-supplied schedules interpolate their stored grid instead.
    """

    grid: np.ndarray
    allocations: np.ndarray
    myerson: np.ndarray
    rebates: np.ndarray
    payments: np.ndarray
    allocation: AllocationRule
    m: RoiTarget
    derived: bool = True

    def value_many(self, vs, side: str = "right") -> np.ndarray:
        a = np.atleast_1d(np.asarray(vs, dtype=float))
        if not self.derived:
            return np.interp(a, self.grid, self.payments)
        rule = self.allocation
        x = rule.left_value(a) if side == "left" else rule.evaluate(a)
        pt = a * x - rule.prefix_integral(a)
        g = self.m.ratio * pt - a * x
        idx = np.searchsorted(self.grid, a, side="right") - 1
        if side == "left":
            exact = (idx >= 0) & (self.grid[np.maximum(idx, 0)] == a)
            idx = np.where(exact, idx - 1, idx)
        prev = np.where(idx >= 0, self.rebates[np.maximum(idx, 0)], 0.0)
        reb = np.maximum(np.maximum(prev, g), 0.0)
        return self.m.ratio * pt - reb

    def value_at(self, v: float, side: str = "right") -> float:
        return float(self.value_many(np.asarray([v]), side=side)[0])

    def rebate_at(self, v: float) -> float:
        if not self.derived:
            raise ConstructionError("rebates of a hand-supplied schedule are not defined")
        a = np.asarray([v], dtype=float)
        rule = self.allocation
        x = rule.evaluate(a)
        pt = a * x - rule.prefix_integral(a)
        g = self.m.ratio * pt - a * x
        idx = int(np.searchsorted(self.grid, a, side="right")[0]) - 1
        prev = self.rebates[idx] if idx >= 0 else 0.0
        return max(float(g[0]), float(prev), 0.0)

    def with_payments(self, payments: np.ndarray) -> PaymentSchedule:
        """Copy with replaced payment values; the result interpolates, never recomputes."""
        new = np.asarray(payments, dtype=float)
        if new.shape != self.grid.shape:
            raise ConstructionError("replacement payments must match the grid length")
        return PaymentSchedule(
            grid=self.grid,
            allocations=self.allocations,
            myerson=self.myerson,
            rebates=self.rebates,
            payments=new,
            allocation=self.allocation,
            m=self.m,
            derived=False,
        )

    def csv_text(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()

    def write_csv(self, fp: IO[str]) -> None:
        fp.write("v,x,p_myerson,p_roi,rebate\n")
        for v, x, pm, pr, rb in zip(
            self.grid, self.allocations, self.myerson, self.payments, self.rebates
        ):
            fp.write(f"{fmt(v)},{fmt(x)},{fmt(pm)},{fmt(pr)},{fmt(rb)}\n")
