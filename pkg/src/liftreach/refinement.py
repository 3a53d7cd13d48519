"""Interval refinement operators for lifted boxes.

Both operators shrink a box while keeping every point of the invariant
subspace {Hx} that the box contains (the refinement sandwich): the
sampling strategy solves each null-space row for each coordinate with
interval arithmetic, the LP operator computes the exact per-coordinate
extrema over the polytope {x : lo <= Hx <= hi}.

When the box misses the subspace entirely the refinement is vacuous and
any output is admissible; we return the degenerate singleton [lo, lo] and
flag it.

The sampling kernel walks a CSR view of A so zero entries are skipped
entirely; with the identity-block bases produced by the lifting module
this is what keeps the operator cheap.  Everything here is pure; the
per-row / per-component work inside one call is data-parallel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import DimensionMismatch, LpNumericalFailure
from .intervals import Box
from .lifting import ZERO_TOL, Lifting, RefinementMatrix
from .simplex import INFEASIBLE, OPTIMAL, BoundedVariableSimplex, lp_solve

__all__ = [
    "RefinementOutcome",
    "refine_sampling",
    "refine_lp",
    "lp_solve",
    "IdentityRefiner",
    "SamplingRefiner",
    "LpRefiner",
]


@dataclass(frozen=True)
class RefinementOutcome:
    """Refined box; ``vacuous`` marks the singleton fallback output."""

    box: Box
    vacuous: bool


def _sanitize(matrix) -> np.ndarray:
    """Zero out sub-tolerance entries so they are skipped, not divided by."""
    if isinstance(matrix, RefinementMatrix):
        matrix = matrix.matrix
    A = np.array(matrix, dtype=float)
    A[np.abs(A) < ZERO_TOL] = 0.0
    return A


def _csr(A):
    """Row-sorted CSR triple (indptr, cols, vals) of the nonzero entries."""
    rows, cols = np.nonzero(A)
    vals = A[rows, cols]
    indptr = np.zeros(A.shape[0] + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    np.cumsum(indptr, out=indptr)
    return indptr, cols.astype(np.int64), vals.astype(np.float64)


@njit(cache=True)
def _refine_faces_kernel(indptr, cols, vals, lo, hi, out_lo, out_hi, vac):
    """Per-component direct evaluation of the sampling refinement.

    For every row i and every column j with a nonzero entry, the sum over
    the row's other nonzero terms is accumulated left to right; no term is
    ever subtracted back out, so each bound is an exact interval-arithmetic
    sum of the k != j products.  Candidates from all rows are intersected
    into the input box.

    Emptiness is only declared beyond a roundoff allowance relative to the
    box magnitude: on degenerate boxes the candidates reproduce the box
    values only up to float error, and treating that as vacuous would
    discard reachable points.  Sub-tolerance inversions are closed outward.
    """
    F, m = lo.shape
    N = indptr.size - 1
    for f in range(F):
        scale = 1.0
        for j in range(m):
            out_lo[f, j] = lo[f, j]
            out_hi[f, j] = hi[f, j]
            a1 = abs(lo[f, j])
            a2 = abs(hi[f, j])
            if a1 > scale:
                scale = a1
            if a2 > scale:
                scale = a2
        for i in range(N):
            start = indptr[i]
            end = indptr[i + 1]
            for a in range(start, end):
                j = cols[a]
                slo = 0.0
                shi = 0.0
                for b in range(start, end):
                    if b == a:
                        continue
                    k = cols[b]
                    p1 = vals[b] * lo[f, k]
                    p2 = vals[b] * hi[f, k]
                    if p1 <= p2:
                        slo += p1
                        shi += p2
                    else:
                        slo += p2
                        shi += p1
                q = -1.0 / vals[a]
                c1 = q * slo
                c2 = q * shi
                if c1 > c2:
                    c1, c2 = c2, c1
                if c1 > out_lo[f, j]:
                    out_lo[f, j] = c1
                if c2 < out_hi[f, j]:
                    out_hi[f, j] = c2
        vacuous = False
        tol = 1e-9 * scale
        for j in range(m):
            if out_lo[f, j] - out_hi[f, j] > tol:
                vacuous = True
                break
        vac[f] = vacuous
        if vacuous:
            for j in range(m):
                out_lo[f, j] = lo[f, j]
                out_hi[f, j] = lo[f, j]
        else:
            for j in range(m):
                if out_lo[f, j] > out_hi[f, j]:
                    mid_lo = out_hi[f, j]
                    out_hi[f, j] = out_lo[f, j]
                    out_lo[f, j] = mid_lo


def _refine_sampling_core(A, lo, hi):
    """Batched sampling refinement on (F, m) endpoint arrays."""
    F, m = lo.shape
    out_lo = np.empty_like(lo)
    out_hi = np.empty_like(hi)
    vac = np.zeros(F, dtype=np.bool_)
    if A.shape[0] == 0:
        out_lo[:] = lo
        out_hi[:] = hi
        return out_lo, out_hi, vac
    indptr, cols, vals = _csr(A)
    _refine_faces_kernel(
        indptr,
        cols,
        vals,
        np.ascontiguousarray(lo),
        np.ascontiguousarray(hi),
        out_lo,
        out_hi,
        vac,
    )
    return out_lo, out_hi, vac


def _refine_sampling_row_indexed(A, box: Box):
    """Literal row-indexed reading of the sum: row i skips column i (when it
    exists) no matter which component is being solved.  Kept only so the two
    readings of the formula can be compared; not used by the integrators."""
    m = len(box)
    new_lo = box.lo.copy()
    new_hi = box.hi.copy()
    for i in range(A.shape[0]):
        nz = np.nonzero(A[i])[0]
        slo = 0.0
        shi = 0.0
        for k in nz:
            if k == i:
                continue
            p1 = A[i, k] * box.lo[k]
            p2 = A[i, k] * box.hi[k]
            slo += min(p1, p2)
            shi += max(p1, p2)
        for j in nz:
            q = -1.0 / A[i, j]
            c1, c2 = q * slo, q * shi
            new_lo[j] = max(new_lo[j], min(c1, c2))
            new_hi[j] = min(new_hi[j], max(c1, c2))
    tol = 1e-9 * max(1.0, np.max(np.abs(box.lo)), np.max(np.abs(box.hi)))
    if np.any(new_lo - new_hi > tol):
        return box.lo.copy(), box.lo.copy(), True
    return np.minimum(new_lo, new_hi), np.maximum(new_lo, new_hi), False


def refine_sampling(A, box: Box, exclude: str = "component") -> RefinementOutcome:
    """Sampling-strategy refinement of ``box`` with null-space rows ``A``.

    For each component j the box interval is intersected with
    (-1/A[i,j]) * sum_{k != j} A[i,k] [lo_k, hi_k] over every row i with a
    nonzero j-th entry; zero entries (|entry| < 1e-12) are skipped
    entirely.  An empty intersection in any component makes the whole
    outcome vacuous.

    ``exclude`` selects which index the sum skips: "component" (solve row i
    for coordinate j, the default) or "row" (skip column i instead; kept
    only for comparing the two readings of the formula).
    """
    A = _sanitize(A)
    if A.ndim != 2 or (A.shape[0] and A.shape[1] != len(box)):
        raise DimensionMismatch(
            f"refinement matrix has {A.shape[1] if A.ndim == 2 else '?'} columns, "
            f"box has {len(box)}"
        )
    if exclude == "component":
        rlo, rhi, vac = _refine_sampling_core(A, box.lo[None, :], box.hi[None, :])
        return RefinementOutcome(box=Box(rlo[0], rhi[0]), vacuous=bool(vac[0]))
    if exclude == "row":
        rlo, rhi, vac = _refine_sampling_row_indexed(A, box)
        return RefinementOutcome(box=Box(rlo, rhi), vacuous=bool(vac))
    raise ValueError(f"unknown exclude mode {exclude!r}")


def refine_lp(lift: Lifting, box: Box) -> RefinementOutcome:
    """Exact per-coordinate refinement via 2m linear programs.

    Component j of the result is the range of (Hx)_j over the polytope
    {x : lo <= Hx <= hi}; an empty polytope yields the vacuous singleton.
    This is the tightest refinement for the subspace {Hx}.

    Raises LpNumericalFailure when the solver gives up; callers should then
    keep the unrefined box.
    """
    if lift.m != len(box):
        raise DimensionMismatch(f"lifting has m={lift.m}, box has {len(box)}")
    H = np.asarray(lift.H)
    solver = BoundedVariableSimplex(H, box.lo, box.hi)
    feas = solver.ensure_feasible()
    if feas == INFEASIBLE:
        return RefinementOutcome(box=Box(box.lo, box.lo), vacuous=True)
    if feas != OPTIMAL:
        raise LpNumericalFailure("phase-1 solve failed")

    new_lo = np.empty(lift.m)
    new_hi = np.empty(lift.m)
    for j in range(lift.m):
        rmin = solver.minimize(H[j])
        rmax = solver.minimize(-H[j])
        if rmin.status != OPTIMAL or rmax.status != OPTIMAL:
            raise LpNumericalFailure(f"LP for component {j} failed")
        new_lo[j] = rmin.value
        new_hi[j] = -rmax.value
    # clip into the input box: containment must hold exactly, and solver
    # roundoff must not produce lo > hi
    new_lo = np.clip(new_lo, box.lo, box.hi)
    new_hi = np.clip(new_hi, new_lo, box.hi)
    return RefinementOutcome(box=Box(new_lo, new_hi), vacuous=False)


# ---------------------------------------------------------------------------
# operator objects used by the embedding integrator (batched over faces)
# ---------------------------------------------------------------------------

class IdentityRefiner:
    """No-op refinement (plain interval reachability baseline)."""

    label = "none"
    is_identity = True

    def refine_batch(self, lo, hi):
        return lo, hi, np.zeros(lo.shape[0], dtype=bool)


class SamplingRefiner:
    """Sampling-strategy refinement bound to a fixed matrix A."""

    is_identity = False

    def __init__(self, A, label: str = "sampling"):
        self.A = _sanitize(A)
        self._csr = _csr(self.A)
        self.label = label

    def refine_batch(self, lo, hi):
        F, m = lo.shape
        out_lo = np.empty_like(lo)
        out_hi = np.empty_like(hi)
        vac = np.zeros(F, dtype=np.bool_)
        if self.A.shape[0] == 0:
            out_lo[:] = lo
            out_hi[:] = hi
            return out_lo, out_hi, vac
        indptr, cols, vals = self._csr
        _refine_faces_kernel(
            indptr,
            cols,
            vals,
            np.ascontiguousarray(lo),
            np.ascontiguousarray(hi),
            out_lo,
            out_hi,
            vac,
        )
        return out_lo, out_hi, vac


class LpRefiner:
    """LP refinement bound to a lifting; falls back per face on failure."""

    label = "lp"
    is_identity = False

    def __init__(self, lift: Lifting):
        self.lift = lift
        self.fallbacks = 0

    def refine_batch(self, lo, hi):
        F = lo.shape[0]
        rlo = np.empty_like(lo)
        rhi = np.empty_like(hi)
        vac = np.zeros(F, dtype=bool)
        for f in range(F):
            try:
                out = refine_lp(self.lift, Box(lo[f], hi[f]))
            except LpNumericalFailure:
                self.fallbacks += 1
                rlo[f] = lo[f]
                rhi[f] = hi[f]
                continue
            rlo[f] = out.box.lo
            rhi[f] = out.box.hi
            vac[f] = out.vacuous
        return rlo, rhi, vac
