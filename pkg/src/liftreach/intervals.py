"""Scalar and vector interval arithmetic with outward-safe semantics.

Endpoints are plain floats (no directed rounding); downstream tolerances
absorb ulp-level error.  All values are immutable and all operations pure,
so everything here is safe to share across threads.

The module exposes two layers:

* ``Interval`` / ``Box`` -- validated scalar/vector interval values.
* ``v*`` kernels -- vectorized endpoint arithmetic on raw ndarrays, used by
  the expression-graph evaluator and the refinement operators.  The scalar
  ``Interval`` operations delegate to the same kernels so there is a single
  source of truth for each formula.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, DivisionByZeroInterval, DomainError

_TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# vectorized kernels on (lo, hi) ndarray pairs
# ---------------------------------------------------------------------------

def vadd(alo, ahi, blo, bhi):
    return alo + blo, ahi + bhi


def vsub(alo, ahi, blo, bhi):
    return alo - bhi, ahi - blo


def vneg(alo, ahi):
    return -ahi, -alo


def vmul(alo, ahi, blo, bhi):
    p1 = alo * blo
    p2 = alo * bhi
    p3 = ahi * blo
    p4 = ahi * bhi
    lo = np.minimum(np.minimum(p1, p2), np.minimum(p3, p4))
    hi = np.maximum(np.maximum(p1, p2), np.maximum(p3, p4))
    return lo, hi


def vscale(c, alo, ahi):
    """Multiply by an exact scalar (or array of scalars) c."""
    p1 = np.asarray(c) * alo
    p2 = np.asarray(c) * ahi
    return np.minimum(p1, p2), np.maximum(p1, p2)


def vdiv(alo, ahi, blo, bhi):
    if np.any((np.asarray(blo) <= 0.0) & (np.asarray(bhi) >= 0.0)):
        raise DivisionByZeroInterval("division by an interval containing 0")
    return vmul(alo, ahi, 1.0 / bhi, 1.0 / blo)


def vsin(alo, ahi):
    slo = np.sin(alo)
    shi = np.sin(ahi)
    lo = np.minimum(slo, shi)
    hi = np.maximum(slo, shi)
    # peak at pi/2 + 2k*pi, trough at -pi/2 + 2k*pi enclosed?
    has_peak = np.floor((ahi - math.pi / 2.0) / _TWO_PI) >= np.ceil(
        (alo - math.pi / 2.0) / _TWO_PI
    )
    has_trough = np.floor((ahi + math.pi / 2.0) / _TWO_PI) >= np.ceil(
        (alo + math.pi / 2.0) / _TWO_PI
    )
    return np.where(has_trough, -1.0, lo), np.where(has_peak, 1.0, hi)


def vcos(alo, ahi):
    clo = np.cos(alo)
    chi = np.cos(ahi)
    lo = np.minimum(clo, chi)
    hi = np.maximum(clo, chi)
    has_peak = np.floor(ahi / _TWO_PI) >= np.ceil(alo / _TWO_PI)
    has_trough = np.floor((ahi - math.pi) / _TWO_PI) >= np.ceil(
        (alo - math.pi) / _TWO_PI
    )
    return np.where(has_trough, -1.0, lo), np.where(has_peak, 1.0, hi)


def vtanh(alo, ahi):
    return np.tanh(alo), np.tanh(ahi)


def vexp(alo, ahi):
    return np.exp(alo), np.exp(ahi)


def vsqrt(alo, ahi):
    if np.any(np.asarray(alo) < 0.0):
        raise DomainError("sqrt of an interval with negative lower endpoint")
    return np.sqrt(alo), np.sqrt(ahi)


def vpowi(alo, ahi, k):
    if k < 0:
        lo, hi = vpowi(alo, ahi, -k)
        return vdiv(np.ones_like(lo), np.ones_like(hi), lo, hi)
    if k == 0:
        return np.ones_like(np.asarray(alo, dtype=float)), np.ones_like(
            np.asarray(ahi, dtype=float)
        )
    plo = np.asarray(alo) ** k
    phi = np.asarray(ahi) ** k
    if k % 2 == 1:
        return plo, phi
    hi = np.maximum(plo, phi)
    lo = np.minimum(plo, phi)
    straddles = (np.asarray(alo) <= 0.0) & (np.asarray(ahi) >= 0.0)
    return np.where(straddles, 0.0, lo), hi


# ---------------------------------------------------------------------------
# scalar intervals
# ---------------------------------------------------------------------------

def _check_endpoints(lo, hi):
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ValueError(f"interval endpoints must be finite, got [{lo}, {hi}]")
    if lo > hi:
        raise ValueError(f"interval lower endpoint exceeds upper: [{lo}, {hi}]")


@dataclass(frozen=True)
class Interval:
    """Closed scalar interval [lo, hi] with finite endpoints."""

    lo: float
    hi: float

    def __post_init__(self):
        object.__setattr__(self, "lo", float(self.lo))
        object.__setattr__(self, "hi", float(self.hi))
        _check_endpoints(self.lo, self.hi)

    @classmethod
    def point(cls, x: float) -> "Interval":
        return cls(x, x)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def contains(self, x: float, tol: float = 0.0) -> bool:
        return self.lo - tol <= x <= self.hi + tol

    def contains_interval(self, other: "Interval", tol: float = 0.0) -> bool:
        return self.lo - tol <= other.lo and other.hi <= self.hi + tol

    def __add__(self, other: "Interval") -> "Interval":
        lo, hi = vadd(self.lo, self.hi, other.lo, other.hi)
        return Interval(float(lo), float(hi))

    def __sub__(self, other: "Interval") -> "Interval":
        lo, hi = vsub(self.lo, self.hi, other.lo, other.hi)
        return Interval(float(lo), float(hi))

    def __neg__(self) -> "Interval":
        return Interval(-self.hi, -self.lo)

    def __mul__(self, other: "Interval") -> "Interval":
        lo, hi = vmul(self.lo, self.hi, other.lo, other.hi)
        return Interval(float(lo), float(hi))

    def __truediv__(self, other: "Interval") -> "Interval":
        lo, hi = vdiv(self.lo, self.hi, other.lo, other.hi)
        return Interval(float(lo), float(hi))

    def scale(self, c: float) -> "Interval":
        """Multiply by an exact scalar; negative c swaps the endpoints."""
        lo, hi = vscale(float(c), self.lo, self.hi)
        return Interval(float(lo), float(hi))

    def intersect(self, other: "Interval") -> "Interval | None":
        """Intersection, or None when the intervals are disjoint."""
        lo = max(self.lo, other.lo)
        hi = min(self.hi, other.hi)
        if lo > hi:
            return None
        return Interval(lo, hi)


def sin(a: Interval) -> Interval:
    lo, hi = vsin(a.lo, a.hi)
    return Interval(float(lo), float(hi))


def cos(a: Interval) -> Interval:
    lo, hi = vcos(a.lo, a.hi)
    return Interval(float(lo), float(hi))


def tanh(a: Interval) -> Interval:
    return Interval(math.tanh(a.lo), math.tanh(a.hi))


def sqrt(a: Interval) -> Interval:
    lo, hi = vsqrt(a.lo, a.hi)
    return Interval(float(lo), float(hi))


def exp(a: Interval) -> Interval:
    return Interval(math.exp(a.lo), math.exp(a.hi))


def powi(a: Interval, k: int) -> Interval:
    lo, hi = vpowi(a.lo, a.hi, k)
    return Interval(float(lo), float(hi))


# ---------------------------------------------------------------------------
# boxes (interval vectors)
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Box:
    """Axis-aligned interval vector: lo <= hi elementwise, all finite."""

    lo: np.ndarray
    hi: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, Box):
            return NotImplemented
        return np.array_equal(self.lo, other.lo) and np.array_equal(self.hi, other.hi)

    def __post_init__(self):
        lo = np.array(self.lo, dtype=float, copy=True).reshape(-1)
        hi = np.array(self.hi, dtype=float, copy=True).reshape(-1)
        if lo.shape != hi.shape:
            raise DimensionMismatch(
                f"box endpoint lengths differ: {lo.shape[0]} vs {hi.shape[0]}"
            )
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("box endpoints must be finite")
        if np.any(lo > hi):
            bad = int(np.argmax(lo > hi))
            raise ValueError(
                f"box lower endpoint exceeds upper in component {bad}: "
                f"[{lo[bad]}, {hi[bad]}]"
            )
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def point(cls, x) -> "Box":
        x = np.asarray(x, dtype=float)
        return cls(x, x)

    @classmethod
    def from_intervals(cls, intervals) -> "Box":
        return cls([iv.lo for iv in intervals], [iv.hi for iv in intervals])

    def __len__(self) -> int:
        return self.lo.shape[0]

    def __getitem__(self, i: int) -> Interval:
        return Interval(self.lo[i], self.hi[i])

    @property
    def widths(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def mid(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def with_component(self, i: int, iv: Interval) -> "Box":
        lo = self.lo.copy()
        hi = self.hi.copy()
        lo[i] = iv.lo
        hi[i] = iv.hi
        return Box(lo, hi)

    def contains_point(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(self.lo - tol <= x) and np.all(x <= self.hi + tol))

    def contains_box(self, other: "Box", tol: float = 0.0) -> bool:
        return bool(
            np.all(self.lo - tol <= other.lo) and np.all(other.hi <= self.hi + tol)
        )

    def intersect(self, other: "Box") -> "Box | None":
        lo = np.maximum(self.lo, other.lo)
        hi = np.minimum(self.hi, other.hi)
        if np.any(lo > hi):
            return None
        return Box(lo, hi)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Uniform samples, shape (size, len(self))."""
        return rng.uniform(self.lo, self.hi, size=(size, len(self)))


def interval_hull_matvec(M: np.ndarray, box: Box) -> Box:
    """Tight interval hull of {M x : x in box}, row by row."""
    M = np.asarray(M, dtype=float)
    if M.shape[1] != len(box):
        raise DimensionMismatch(
            f"matrix has {M.shape[1]} columns but box has {len(box)} components"
        )
    p1 = M * box.lo
    p2 = M * box.hi
    return Box(np.minimum(p1, p2).sum(axis=1), np.maximum(p1, p2).sum(axis=1))
