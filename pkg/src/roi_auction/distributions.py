"""Value distributions on [0, vmax] and their revenue-theory curves.

Every distribution exposes the CDF F, a density f, the virtual value
v - (1 - F(v)) / f(v), and the density-weighted virtual value
v f(v) + F(v) - 1 whose monotonicity (the DMR property) gates the
threshold solver. Tabulated and piecewise kinds store the density and
integrate it exactly; no numerical differentiation happens at runtime.
"""

from __future__ import annotations

import abc
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Any

import numpy as np

from .errors import ConstructionError, DescriptorError, DomainError, SingularityError
from .numerics import bisect_root

_SUPPORT_SLACK = 1e-12


def _prepare(v: Any, vmax: float) -> tuple[np.ndarray, bool]:
    """Coerce to a float array, reject points outside [0, vmax], clip roundoff."""
    arr = np.asarray(v, dtype=float)
    scalar = arr.ndim == 0
    a = np.atleast_1d(arr)
    if a.size:
        slack = _SUPPORT_SLACK * max(1.0, vmax)
        lo = float(np.min(a))
        hi = float(np.max(a))
        if lo < -slack or hi > vmax + slack:
            bad = lo if lo < -slack else hi
            raise DomainError(f"value {bad!r} outside support [0, {vmax}]")
    return np.clip(a, 0.0, vmax), scalar


def _ret(a: np.ndarray, scalar: bool):
    return float(a[0]) if scalar else a


@dataclass(frozen=True)
class DmrReport:
    """Outcome of a grid check that v f(v) + F(v) - 1 is non-decreasing."""

    passed: bool
    worst_drop: float
    worst_at: float | None
    first_violation_at: float | None
    grid_n: int
    tol: float

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "worst_drop": self.worst_drop,
            "worst_at": self.worst_at,
            "first_violation_at": self.first_violation_at,
            "grid_n": self.grid_n,
            "tol": self.tol,
        }

    def summary(self) -> str:
        if self.passed:
            return f"DMR: pass (worst drop {self.worst_drop:.3e} on {self.grid_n}-point grid)"
        return (
            f"DMR: FAIL (worst drop {self.worst_drop:.6g} at v={self.worst_at:.6g}, "
            f"first violation at v={self.first_violation_at:.6g})"
        )


class ValueDistribution(abc.ABC):
    """A value distribution on [0, vmax] with F(0) = 0 and F(vmax) = 1."""

    vmax: float

    @abc.abstractmethod
    def _cdf(self, v: np.ndarray) -> np.ndarray: ...

    @abc.abstractmethod
    def _pdf(self, v: np.ndarray) -> np.ndarray: ...

    @abc.abstractmethod
    def descriptor(self) -> dict: ...

    def cdf(self, v):
        a, scalar = _prepare(v, self.vmax)
        return _ret(self._cdf(a), scalar)

    def pdf(self, v):
        a, scalar = _prepare(v, self.vmax)
        return _ret(self._pdf(a), scalar)

    def virtual_value(self, v):
        """v - (1 - F(v)) / f(v). Raises SingularityError where f vanishes."""
        a, scalar = _prepare(v, self.vmax)
        f = self._pdf(a)
        if np.any(f <= 0.0):
            where = float(a[int(np.argmax(f <= 0.0))])
            raise SingularityError(
                f"density vanishes at v={where:.6g}; virtual value is undefined there"
            )
        return _ret(a - (1.0 - self._cdf(a)) / f, scalar)

    def marginal_revenue(self, v):
        """Density-weighted virtual value v f(v) + F(v) - 1."""
        a, scalar = _prepare(v, self.vmax)
        return _ret(a * self._pdf(a) + self._cdf(a) - 1.0, scalar)

    def quantile(self, u):
        """Generalized inverse of the CDF; exact where closed forms exist."""
        arr = np.asarray(u, dtype=float)
        scalar = arr.ndim == 0
        a = np.atleast_1d(arr)
        if a.size and (float(np.min(a)) < -1e-15 or float(np.max(a)) > 1.0 + 1e-15):
            raise DomainError("quantile argument outside [0, 1]")
        a = np.clip(a, 0.0, 1.0)
        return _ret(self._quantile(a), scalar)

    def _quantile(self, u: np.ndarray) -> np.ndarray:
        # bisection fallback for kinds without a closed form
        out = np.empty_like(u)
        for i, ui in enumerate(u):
            if ui <= 0.0:
                out[i] = 0.0
            elif ui >= 1.0:
                out[i] = self.vmax
            else:
                out[i] = bisect_root(
                    lambda z: float(self._cdf(np.asarray([z]))[0]) - ui,
                    0.0,
                    self.vmax,
                    x_tol=1e-14 * max(1.0, self.vmax),
                )
        return out

    def check_dmr(self, grid_n: int = 1001) -> DmrReport:
        """Grid test that the density-weighted virtual value never decreases."""
        if grid_n < 2:
            raise ConstructionError("check_dmr needs at least two grid points")
        grid = np.linspace(0.0, self.vmax, grid_n)
        psi = grid * self._pdf(grid) + self._cdf(grid) - 1.0
        tol = 1e-9 * max(1.0, abs(float(psi[-1])))
        drops = psi[:-1] - psi[1:]
        worst = float(np.max(drops)) if drops.size else 0.0
        worst_idx = int(np.argmax(drops)) if drops.size else 0
        violating = drops > tol
        passed = not bool(np.any(violating))
        return DmrReport(
            passed=passed,
            worst_drop=max(worst, 0.0),
            worst_at=float(grid[worst_idx]) if worst > 0.0 else None,
            first_violation_at=None if passed else float(grid[int(np.argmax(violating))]),
            grid_n=grid_n,
            tol=tol,
        )

    def density_kinks(self) -> tuple[float, ...]:
        """Interior kink locations of the density, for forced quadrature nodes."""
        return ()

    def pdf_left(self, v):
        """Density by left limit; differs from pdf only where the density jumps."""
        return self.pdf(v)


@dataclass(frozen=True)
class UniformDistribution(ValueDistribution):
    vmax: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.vmax) and self.vmax > 0.0):
            raise ConstructionError(f"vmax must be positive and finite, got {self.vmax}")

    def _cdf(self, v):
        return v / self.vmax

    def _pdf(self, v):
        return np.full_like(v, 1.0 / self.vmax)

    def _quantile(self, u):
        return u * self.vmax

    def descriptor(self) -> dict:
        return {"kind": "uniform", "vmax": self.vmax}


@dataclass(frozen=True)
class PowerCdfDistribution(ValueDistribution):
    """F(v) = (v / vmax)^exponent with exponent >= 1, so the density is bounded."""

    exponent: float
    vmax: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.vmax) and self.vmax > 0.0):
            raise ConstructionError(f"vmax must be positive and finite, got {self.vmax}")
        if not (math.isfinite(self.exponent) and self.exponent >= 1.0):
            raise ConstructionError(f"exponent must be >= 1, got {self.exponent}")

    def _cdf(self, v):
        return (v / self.vmax) ** self.exponent

    def _pdf(self, v):
        k = self.exponent
        return k * v ** (k - 1.0) / self.vmax**k

    def _quantile(self, u):
        return self.vmax * u ** (1.0 / self.exponent)

    def descriptor(self) -> dict:
        return {"kind": "power_cdf", "vmax": self.vmax, "exponent": self.exponent}


@dataclass(frozen=True)
class PiecewiseLinearDensity(ValueDistribution):
    """Density interpolated linearly between breakpoints; CDF integrated exactly."""

    breakpoints: tuple[float, ...]
    densities: tuple[float, ...]

    def __post_init__(self):
        b = np.asarray(self.breakpoints, dtype=float)
        d = np.asarray(self.densities, dtype=float)
        if b.size < 2 or b.size != d.size:
            raise ConstructionError("need matching breakpoints and densities, at least two")
        if b[0] != 0.0:
            raise ConstructionError("support must start at 0")
        if np.any(np.diff(b) <= 0.0):
            raise ConstructionError("breakpoints must be strictly increasing")
        if np.any(d < 0.0) or not np.all(np.isfinite(d)):
            raise ConstructionError("densities must be finite and non-negative")
        mass = float(np.sum(0.5 * (d[:-1] + d[1:]) * np.diff(b)))
        if abs(mass - 1.0) > 1e-9:
            raise ConstructionError(f"density integrates to {mass!r}, expected 1")
        object.__setattr__(self, "breakpoints", tuple(float(x) for x in b))
        object.__setattr__(self, "densities", tuple(float(x) for x in d))

    @property
    def vmax(self) -> float:
        return self.breakpoints[-1]

    @cached_property
    def _cum(self) -> np.ndarray:
        b = np.asarray(self.breakpoints)
        d = np.asarray(self.densities)
        areas = 0.5 * (d[:-1] + d[1:]) * np.diff(b)
        return np.concatenate([[0.0], np.cumsum(areas)])

    def _segment_index(self, v: np.ndarray) -> np.ndarray:
        b = np.asarray(self.breakpoints)
        return np.clip(np.searchsorted(b, v, side="right") - 1, 0, b.size - 2)

    def _pdf(self, v):
        return np.interp(v, self.breakpoints, self.densities)

    def _cdf(self, v):
        b = np.asarray(self.breakpoints)
        d = np.asarray(self.densities)
        i = self._segment_index(v)
        width = b[i + 1] - b[i]
        slope = (d[i + 1] - d[i]) / width
        t = v - b[i]
        return np.minimum(self._cum[i] + d[i] * t + 0.5 * slope * t * t, 1.0)

    def _quantile(self, u):
        b = np.asarray(self.breakpoints)
        d = np.asarray(self.densities)
        cum = self._cum
        i = np.clip(np.searchsorted(cum, u, side="right") - 1, 0, b.size - 2)
        width = b[i + 1] - b[i]
        slope = (d[i + 1] - d[i]) / width
        du = u - cum[i]
        # root of 0.5 s t^2 + f t - du in its stable form, valid for every slope sign
        disc = np.maximum(d[i] ** 2 + 2.0 * slope * du, 0.0)
        denom = d[i] + np.sqrt(disc)
        t = np.where(denom > 0.0, 2.0 * du / np.where(denom > 0.0, denom, 1.0), 0.0)
        return np.minimum(b[i] + np.minimum(t, width), self.vmax)

    def density_kinks(self) -> tuple[float, ...]:
        return self.breakpoints[1:-1]

    def descriptor(self) -> dict:
        return {
            "kind": "piecewise_linear_density",
            "vmax": self.vmax,
            "breakpoints": list(self.breakpoints),
            "densities": list(self.densities),
        }


@dataclass(frozen=True)
class TabulatedCdf(ValueDistribution):
    """CDF given at sorted sample points and interpolated linearly between them.

    The implied density is the per-segment slope, hence piecewise constant.
    """

    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        pts = tuple((float(v), float(F)) for v, F in self.points)
        if len(pts) < 2:
            raise ConstructionError("need at least two (v, F) points")
        vs = np.asarray([p[0] for p in pts])
        Fs = np.asarray([p[1] for p in pts])
        if vs[0] != 0.0 or abs(Fs[0]) > 1e-12:
            raise ConstructionError("tabulated CDF must start at (0, 0)")
        if abs(Fs[-1] - 1.0) > 1e-12:
            raise ConstructionError("tabulated CDF must end at (vmax, 1)")
        if np.any(np.diff(vs) <= 0.0):
            raise ConstructionError("value points must be strictly increasing")
        if np.any(np.diff(Fs) < 0.0) or np.any(Fs < 0.0) or np.any(Fs > 1.0 + 1e-12):
            raise ConstructionError("CDF values must be non-decreasing within [0, 1]")
        pts = tuple(pts[:-1]) + ((pts[-1][0], 1.0),)
        object.__setattr__(self, "points", pts)

    @property
    def vmax(self) -> float:
        return self.points[-1][0]

    @cached_property
    def _vs(self) -> np.ndarray:
        return np.asarray([p[0] for p in self.points])

    @cached_property
    def _Fs(self) -> np.ndarray:
        return np.asarray([p[1] for p in self.points])

    @cached_property
    def _slopes(self) -> np.ndarray:
        return np.diff(self._Fs) / np.diff(self._vs)

    def _cdf(self, v):
        return np.interp(v, self._vs, self._Fs)

    def _pdf(self, v):
        # right-continuous: at a knot the next segment's slope applies
        i = np.clip(np.searchsorted(self._vs, v, side="right") - 1, 0, self._slopes.size - 1)
        return self._slopes[i]

    def _quantile(self, u):
        Fs = self._Fs
        vs = self._vs
        i = np.clip(np.searchsorted(Fs, u, side="left"), 0, Fs.size - 1)
        exact = Fs[i] == u
        lo = np.clip(i - 1, 0, Fs.size - 1)
        dF = Fs[i] - Fs[lo]
        frac = np.where(dF > 0.0, (u - Fs[lo]) / np.where(dF > 0.0, dF, 1.0), 0.0)
        interp = vs[lo] + frac * (vs[i] - vs[lo])
        return np.where(exact, vs[i], interp)

    def density_kinks(self) -> tuple[float, ...]:
        return tuple(float(v) for v in self._vs[1:-1])

    def pdf_left(self, v):
        a, scalar = _prepare(v, self.vmax)
        i = np.clip(np.searchsorted(self._vs, a, side="left") - 1, 0, self._slopes.size - 1)
        return _ret(self._slopes[i], scalar)

    def descriptor(self) -> dict:
        return {
            "kind": "tabulated_cdf",
            "vmax": self.vmax,
            "points": [[v, F] for v, F in self.points],
        }


_REQUIRED_FIELDS = {
    "uniform": frozenset({"kind", "vmax"}),
    "power_cdf": frozenset({"kind", "vmax", "exponent"}),
    "piecewise_linear_density": frozenset({"kind", "vmax", "breakpoints", "densities"}),
    "tabulated_cdf": frozenset({"kind", "vmax", "points"}),
}


def _require_number(data: dict, key: str) -> float:
    x = data[key]
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise DescriptorError(f"field {key!r} must be a number, got {x!r}")
    return float(x)


def distribution_from_descriptor(data: dict) -> ValueDistribution:
    """Build a distribution from its JSON-friendly descriptor; strict about fields."""
    if not isinstance(data, dict):
        raise DescriptorError(f"descriptor must be an object, got {type(data).__name__}")
    kind = data.get("kind")
    if kind not in _REQUIRED_FIELDS:
        raise DescriptorError(f"unknown distribution kind {kind!r}")
    expected = _REQUIRED_FIELDS[kind]
    got = set(data)
    if got != expected:
        unknown = sorted(got - expected)
        missing = sorted(expected - got)
        raise DescriptorError(
            f"descriptor fields for kind {kind!r}: unknown {unknown}, missing {missing}"
        )
    vmax = _require_number(data, "vmax")
    try:
        if kind == "uniform":
            return UniformDistribution(vmax=vmax)
        if kind == "power_cdf":
            return PowerCdfDistribution(exponent=_require_number(data, "exponent"), vmax=vmax)
        if kind == "piecewise_linear_density":
            dist = PiecewiseLinearDensity(
                breakpoints=tuple(float(x) for x in data["breakpoints"]),
                densities=tuple(float(x) for x in data["densities"]),
            )
        else:
            dist = TabulatedCdf(points=tuple((float(v), float(F)) for v, F in data["points"]))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConstructionError):
            raise
        raise DescriptorError(f"malformed {kind!r} descriptor: {exc}") from exc
    if abs(dist.vmax - vmax) > 1e-9 * max(1.0, vmax):
        raise DescriptorError(
            f"declared vmax {vmax!r} disagrees with the data endpoint {dist.vmax!r}"
        )
    return dist
