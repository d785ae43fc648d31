"""Revenue-optimal threshold mechanisms under a return-on-investment target.

For target ratio M over a DMR distribution the optimizer is a power ramp
(v / D)^(1/(M-1)) capped at one from the threshold D on. The threshold makes
the weighted integral of the marginal-revenue curve vanish:

    H(D) = integral_0^D psi(v) v^(1/(M-1)) dv = 0,  psi(v) = v f(v) + F(v) - 1.

All root finding happens on the rescaled form G(D) = H(D) / D^(c+1) with
c = 1 / (M - 1), i.e. G(D) = integral_0^1 psi(D s) s^c ds; unlike H it does
not underflow as M -> 1, and the revenue derivative is its fixed multiple
-(c + 1) G(D), so the bisected sign is the quantity that actually matters.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .allocation import AllocationRule, make_power_ramp
from .audit import AuditCheck, AuditReport, Mechanism
from .distributions import ValueDistribution
from .errors import ConditioningWarning, DomainError, PreconditionError, QuadratureError
from .formatting import json_ready
from .numerics import adaptive_simpson, bisect_root
from .payments import DEFAULT_GRID_N, PaymentSchedule, RoiTarget, payment_schedule
from .revenue import expected_revenue_quadrature

_STEEP_EXPONENT = 50.0


class BoundaryCase(enum.Enum):
    INTERIOR_ROOT = "interior_root"
    FULL_SUPPORT = "full_support"


def _psi_left(dist: ValueDistribution, v: float) -> float:
    # left limit of the weighted curve; only the density factor can jump
    return v * dist.pdf_left(v) + dist.cdf(v) - 1.0


def _scaled_integral(
    dist: ValueDistribution, m: RoiTarget, threshold: float, abs_tol: float
) -> float:
    """G(threshold) = integral_0^1 psi(threshold * s) s^c ds."""
    c = 1.0 / (m.ratio - 1.0)
    if threshold <= 0.0:
        return dist.marginal_revenue(0.0) / (c + 1.0)
    if c > _STEEP_EXPONENT:
        warnings.warn(
            f"weight exponent {c:.3g} is steep (ratio near 1); "
            "integrating in transformed coordinates",
            ConditioningWarning,
            stacklevel=3,
        )
        return _scaled_integral_steep(dist, c, threshold, abs_tol)
    cuts = sorted(
        {k / threshold for k in dist.density_kinks() if 0.0 < k < threshold} | {0.0, 1.0}
    )
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):

        def piece(s: float, _hi: float = hi) -> float:
            v = threshold * s
            if s == _hi and _hi < 1.0:
                return _psi_left(dist, v) * s**c
            return dist.marginal_revenue(v) * s**c

        total += adaptive_simpson(piece, lo, hi, abs_tol * (hi - lo))
    return total


def _scaled_integral_steep(
    dist: ValueDistribution, c: float, threshold: float, abs_tol: float
) -> float:
    # substitute u = s^c, which spreads the mass the weight concentrates at s = 1
    inv_c = 1.0 / c

    def integrand(u: float) -> float:
        s = u**inv_c
        return dist.marginal_revenue(threshold * s) * s * inv_c

    cuts = sorted(
        {(k / threshold) ** c for k in dist.density_kinks() if 0.0 < k < threshold}
        | {0.0, 1.0}
    )
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi > lo:
            total += adaptive_simpson(integrand, lo, hi, abs_tol * (hi - lo))
    return total


def threshold_integral(
    dist: ValueDistribution, m: RoiTarget, upper: float, abs_tol: float = 1e-10
) -> float:
    """H(upper) = integral_0^upper psi(v) v^(1/(ratio-1)) dv."""
    if not 0.0 <= upper <= dist.vmax * (1.0 + 1e-12):
        raise DomainError(f"upper limit {upper!r} outside [0, {dist.vmax}]")
    if upper <= 0.0:
        return 0.0
    c = 1.0 / (m.ratio - 1.0)
    scale = upper ** (c + 1.0)
    g_tol = abs_tol / min(max(scale, 1.0), 1e15)
    return scale * _scaled_integral(dist, m, upper, g_tol)


def revenue_derivative(
    dist: ValueDistribution, m: RoiTarget, threshold: float, abs_tol: float = 1e-10
) -> float:
    """Sensitivity of expected revenue to the threshold: -(c + 1) G(threshold).

    Differentiating the ramp revenue in D and integrating by parts collapses
    the distribution terms to R'(D) = -(c + 1) H(D) / D^(c+1) with
    c = 1 / (ratio - 1); stated through G the prefactor never divides by a
    threshold power, so the value stays well-scaled for every ratio.
    """
    if not 0.0 < threshold <= dist.vmax * (1.0 + 1e-12):
        raise DomainError(f"threshold {threshold!r} outside (0, {dist.vmax}]")
    c = 1.0 / (m.ratio - 1.0)
    return -(c + 1.0) * _scaled_integral(dist, m, threshold, abs_tol)


def solve_threshold(
    dist: ValueDistribution, m: RoiTarget, tol: float = 1e-9, dmr_grid_n: int = 1001
) -> tuple[float, BoundaryCase]:
    """Threshold where the weighted marginal-revenue integral vanishes.

    Refuses non-DMR inputs: without a monotone weighted curve the sign of G
    no longer brackets a unique root and the ramp is not optimal.
    """
    report = dist.check_dmr(dmr_grid_n)
    if not report.passed:
        raise PreconditionError(
            "threshold solver needs non-decreasing marginal revenue; " + report.summary(),
            report=report,
        )
    vmax = dist.vmax
    if dist.marginal_revenue(0.0) >= 0.0:
        # F(0) = 0 forces the curve to start at -1; anything else is degenerate
        raise PreconditionError("marginal revenue must start negative at v = 0")
    g_tol = min(tol, 1e-10)
    if _scaled_integral(dist, m, vmax, g_tol) <= 0.0:
        return vmax, BoundaryCase.FULL_SUPPORT
    if dist.marginal_revenue(vmax) <= 0.0:
        return vmax, BoundaryCase.FULL_SUPPORT
    lo = bisect_root(dist.marginal_revenue, 0.0, vmax, x_tol=1e-13 * max(1.0, vmax))
    hi = vmax
    c = 1.0 / (m.ratio - 1.0)
    mid = 0.5 * (lo + hi)
    residual = math.inf
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        g_mid = _scaled_integral(dist, m, mid, g_tol)
        if g_mid > 0.0:
            hi = mid
        else:
            lo = mid
        residual = g_mid * mid ** (c + 1.0)
        if hi - lo <= 0.5 * tol * max(1.0, vmax) and abs(residual) <= tol:
            return mid, BoundaryCase.INTERIOR_ROOT
    raise QuadratureError(
        f"threshold residual stalled at {residual:.3e} (target {tol:.3e})",
        achieved_tol=abs(residual),
    )


@dataclass(frozen=True, eq=False)
class OptimalSolution:
    """Solved threshold plus the mechanism built from it."""

    threshold: float
    boundary_case: BoundaryCase
    allocation: AllocationRule
    schedule: PaymentSchedule
    expected_revenue: float

    def mechanism(self) -> Mechanism:
        return Mechanism(self.allocation, self.schedule, self.schedule.m)

    def descriptor(self, schedule_csv_path: str | None = None) -> dict:
        return json_ready(
            {
                "D": self.threshold,
                "boundary_case": self.boundary_case.value,
                "revenue": self.expected_revenue,
                "allocation": self.allocation.descriptor(),
                "schedule_csv_path": schedule_csv_path,
            }
        )


def optimal_mechanism(
    dist: ValueDistribution,
    m: RoiTarget,
    grid_n: int = DEFAULT_GRID_N,
    tol: float = 1e-9,
) -> OptimalSolution:
    """Solve for the threshold and assemble the capped power-ramp mechanism."""
    threshold, case = solve_threshold(dist, m, tol=tol)
    rule = make_power_ramp(threshold, m.ratio, dist.vmax)
    schedule = payment_schedule(rule, m, grid_n)
    mech = Mechanism(rule, schedule, m)
    revenue = expected_revenue_quadrature(mech, dist, abs_tol=min(tol, 1e-9)).mean
    return OptimalSolution(
        threshold=threshold,
        boundary_case=case,
        allocation=rule,
        schedule=schedule,
        expected_revenue=revenue,
    )


def structural_audit(
    sol: OptimalSolution,
    dist: ValueDistribution,
    grid_n: int = 2001,
    tol: float = 1e-7,
) -> AuditReport:
    """Shape checks any optimizer must satisfy, applied to a candidate solution.

    Flat detection works on forward-difference slopes, so a ramp steeper than
    tol per cell everywhere (true for ratio >= 1.5 on these grids) is never
    mistaken for a plateau.
    """
    rule = sol.allocation
    sched = sol.schedule
    ratio = sched.m.ratio
    vmax = rule.vmax
    threshold = min(sol.threshold, vmax)
    grid = np.unique(
        np.concatenate([np.linspace(0.0, vmax, grid_n), np.asarray(rule.knots()), [threshold]])
    )
    x = rule.evaluate(grid)
    p = sched.value_many(grid)
    pre_myerson = grid * x - rule.prefix_integral(grid)
    checks: list[AuditCheck] = []

    cap = ratio * pre_myerson - grid * x
    i = int(np.argmax(cap))
    worst = max(float(cap[i]), 0.0)
    checks.append(
        AuditCheck(
            "payment_cap", worst <= tol, worst, {"v": float(grid[i])} if worst > 0.0 else None
        )
    )

    slopes = np.abs(np.diff(x)) / np.diff(grid)
    slope_at = np.append(slopes, slopes[-1])
    tight = np.abs(p - grid * x)
    vio = np.minimum(slope_at, tight)
    i = int(np.argmax(vio))
    worst = float(vio[i])
    checks.append(
        AuditCheck(
            "first_price_or_flat",
            worst <= tol,
            worst,
            {"v": float(grid[i])} if worst > tol else None,
        )
    )

    flat = slopes <= tol
    n_runs = int(np.sum(flat[1:] & ~flat[:-1])) + int(flat[0] if flat.size else False)
    ends_at_top = bool(flat[-1]) if flat.size else True
    tail_ok = n_runs == 0 or (n_runs == 1 and ends_at_top)
    checks.append(
        AuditCheck(
            "single_flat_tail",
            tail_ok,
            0.0 if tail_ok else float(n_runs - int(ends_at_top)),
            None if tail_ok else {"flat_runs": n_runs, "ends_at_vmax": ends_at_top},
        )
    )

    x_at_threshold = float(rule.evaluate(threshold))
    below = grid <= threshold * (1.0 + 1e-15)
    if threshold > 0.0:
        expected = (grid[below] / threshold) ** (1.0 / (ratio - 1.0)) * x_at_threshold
    else:
        expected = np.full(int(np.sum(below)), x_at_threshold)
    dev = np.abs(x[below] - expected)
    i = int(np.argmax(dev)) if dev.size else 0
    worst = float(dev[i]) if dev.size else 0.0
    checks.append(
        AuditCheck(
            "power_ramp_shape",
            worst <= tol,
            worst,
            {"v": float(grid[below][i])} if worst > tol else None,
        )
    )

    worst = abs(x_at_threshold - 1.0)
    checks.append(
        AuditCheck(
            "full_allocation_at_threshold",
            worst <= tol,
            worst,
            {"x_at_threshold": x_at_threshold} if worst > tol else None,
        )
    )

    if sol.boundary_case is BoundaryCase.INTERIOR_ROOT:
        residual = abs(threshold_integral(dist, sched.m, threshold, abs_tol=min(tol, 1e-10)))
        checks.append(
            AuditCheck(
                "threshold_stationarity",
                residual <= tol,
                residual,
                {"threshold": threshold} if residual > tol else None,
            )
        )
    else:
        # at the boundary the integral need not vanish, only point the right way
        checks.append(AuditCheck("threshold_stationarity", True, 0.0, None))
    return AuditReport(tuple(checks))
