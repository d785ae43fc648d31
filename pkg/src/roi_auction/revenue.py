"""Expected revenue, two ways, plus the posted-price baseline.

Quadrature integrates payment(v) * density(v) piecewise between allocation
knots and density kinks, taking left limits at each piece's right endpoint so
jumps in either factor never poison the Simpson error estimate. Monte Carlo
draws values by quantile transform from counter-based substreams, so results
are byte-identical for a given seed regardless of chunking order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .audit import Mechanism, mechanism_for
from .allocation import make_step
from .distributions import ValueDistribution
from .errors import ConstructionError, PreconditionError, RoiAuctionError
from .numerics import adaptive_simpson, bisect_root
from .payments import DEFAULT_GRID_N, RoiTarget

_MC_CHUNK = 1 << 16


@dataclass(frozen=True)
class RevenueEstimate:
    mean: float
    stderr: float
    method: str
    n_samples: int | None = None
    seed: int | None = None

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "stderr": self.stderr,
            "method": self.method,
            "n_samples": self.n_samples,
            "seed": self.seed,
        }


def expected_revenue_quadrature(
    mech: Mechanism, dist: ValueDistribution, abs_tol: float = 1e-9
) -> RevenueEstimate:
    """Integrate the truthful payment against the value density."""
    vmax = mech.allocation.vmax
    if abs(dist.vmax - vmax) > 1e-9 * max(1.0, vmax):
        raise ConstructionError(
            f"distribution support [0, {dist.vmax}] does not match the rule's [0, {vmax}]"
        )
    cuts = sorted(set(mech.allocation.knots()) | set(dist.density_kinks()) | {0.0, vmax})
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi <= lo:
            continue

        def piece(v: float, _hi: float = hi) -> float:
            if v == _hi:
                return mech.schedule.value_at(v, side="left") * dist.pdf_left(v)
            return mech.schedule.value_at(v) * dist.pdf(v)

        total += adaptive_simpson(piece, lo, hi, abs_tol * (hi - lo) / vmax)
    return RevenueEstimate(mean=total, stderr=0.0, method="quadrature")


def expected_revenue_mc(
    mech: Mechanism, dist: ValueDistribution, n: int, seed: int = 0
) -> RevenueEstimate:
    """Sample-mean revenue with its standard error.

    Each 65536-draw chunk runs on its own Philox key derived from (seed,
    chunk index), so the stream for chunk k never depends on how many draws
    preceded it.
    """
    if n < 1:
        raise ConstructionError(f"need at least one sample, got {n}")
    if seed < 0:
        raise ConstructionError(f"seed must be non-negative, got {seed}")
    vmax = mech.allocation.vmax
    if abs(dist.vmax - vmax) > 1e-9 * max(1.0, vmax):
        raise ConstructionError(
            f"distribution support [0, {dist.vmax}] does not match the rule's [0, {vmax}]"
        )
    pays = np.empty(n)
    for k, start in enumerate(range(0, n, _MC_CHUNK)):
        stop = min(start + _MC_CHUNK, n)
        gen = np.random.Generator(np.random.Philox(key=seed * 2**64 + k))
        u = gen.random(stop - start)
        pays[start:stop] = mech.schedule.value_many(dist.quantile(u))
    mean = float(np.mean(pays))
    stderr = float(np.std(pays, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return RevenueEstimate(mean=mean, stderr=stderr, method="monte_carlo", n_samples=n, seed=seed)


def myerson_baseline(
    dist: ValueDistribution, m: RoiTarget | None = None, grid_n: int = DEFAULT_GRID_N
) -> Mechanism:
    """Posted price at the root of the density-weighted virtual value.

    The step rule's truthful payment equals the price itself for every
    target ratio, so the bundled ratio (default 2) only labels the schedule.
    """
    report = dist.check_dmr()
    if not report.passed:
        raise PreconditionError(
            "posted-price baseline needs non-decreasing marginal revenue; " + report.summary(),
            report=report,
        )
    psi_lo = dist.marginal_revenue(0.0)
    psi_hi = dist.marginal_revenue(dist.vmax)
    if psi_lo >= 0.0 or psi_hi <= 0.0:
        raise PreconditionError(
            "marginal revenue does not change sign on the support; no interior posted price"
        )
    price = bisect_root(
        dist.marginal_revenue, 0.0, dist.vmax, x_tol=1e-13 * max(1.0, dist.vmax)
    )
    rule = make_step(price, dist.vmax)
    return mechanism_for(rule, m if m is not None else RoiTarget(2.0), grid_n)


@dataclass(frozen=True)
class ComparisonRow:
    name: str
    threshold: float
    rev_quad: float
    rev_mc: float | None
    stderr: float | None


@dataclass(frozen=True)
class ComparisonTable:
    rows: tuple[ComparisonRow, ...]

    def to_dict(self) -> dict:
        return {
            "rows": [
                {
                    "name": r.name,
                    "threshold": r.threshold,
                    "rev_quad": r.rev_quad,
                    "rev_mc": r.rev_mc,
                    "stderr": r.stderr,
                }
                for r in self.rows
            ]
        }

    def csv_text(self) -> str:
        from .formatting import fmt

        lines = ["name,threshold,rev_quad,rev_mc,stderr"]
        for r in self.rows:
            mc = fmt(r.rev_mc) if r.rev_mc is not None else ""
            se = fmt(r.stderr) if r.stderr is not None else ""
            lines.append(f"{r.name},{fmt(r.threshold)},{fmt(r.rev_quad)},{mc},{se}")
        return "\n".join(lines) + "\n"

    def text(self) -> str:
        lines = []
        for r in self.rows:
            parts = [f"{r.name:<14}", f"threshold={r.threshold:.6f}", f"rev(quad)={r.rev_quad:.6f}"]
            if r.rev_mc is not None:
                parts.append(f"rev(mc)={r.rev_mc:.6f} +/- {r.stderr:.6f}")
            lines.append("  ".join(parts))
        return "\n".join(lines) + "\n"


def compare(
    dist: ValueDistribution,
    m: RoiTarget,
    *,
    mc_samples: int = 100_000,
    seed: int = 0,
    grid_n: int = DEFAULT_GRID_N,
    abs_tol: float = 1e-9,
) -> ComparisonTable:
    """Posted-price baseline versus the threshold-optimal mechanism."""
    from .optimal import optimal_mechanism  # deferred: optimal builds on this module

    base = myerson_baseline(dist, m, grid_n)
    jumps = base.allocation.jump_points()
    base_threshold = jumps[0][0] if jumps else 0.0
    sol = optimal_mechanism(dist, m, grid_n=grid_n)
    rows = []
    for name, mech, threshold in (
        ("posted_price", base, base_threshold),
        ("roi_optimal", sol.mechanism(), sol.threshold),
    ):
        quad = expected_revenue_quadrature(mech, dist, abs_tol)
        if mc_samples > 0:
            mc = expected_revenue_mc(mech, dist, mc_samples, seed)
            rows.append(ComparisonRow(name, threshold, quad.mean, mc.mean, mc.stderr))
        else:
            rows.append(ComparisonRow(name, threshold, quad.mean, None, None))
    if rows[1].rev_quad < rows[0].rev_quad - 1e-9:
        raise RoiAuctionError(
            f"threshold mechanism earned {rows[1].rev_quad!r}, below the posted-price "
            f"baseline {rows[0].rev_quad!r}; this indicates a solver defect"
        )
    return ComparisonTable(tuple(rows))
