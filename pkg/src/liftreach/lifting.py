"""Liftings y = Hx, their left inverses, and left-null-space machinery.

A lifting stores H (m x n, full column rank, invertible leading block H_V),
the default left inverse H+ = [H_V^-1  0], and the row blocks H_V / H_A.
Other left inverses are representable by constructing ``Lifting`` directly
with a custom ``H_plus``; only the default is built automatically.

``null_basis`` returns the sparse basis L = [-H_A H_V^-1 | I] of the left
null space; its identity right block is what keeps each auxiliary variable
isolated in its own row, so bases of nested liftings share their leading
rows.  ``subspace_sample_matrix`` extends L with pairwise combinations of
its rows sampled on a quarter-circle angle grid.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, RankDeficient, SingularBlock

# refinement treats |entry| below this as exactly zero (see refinement.py)
ZERO_TOL = 1e-12

_COND_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class Lifting:
    """The tuple (H, H+, H_V, H_A) with m lifted and n base coordinates."""

    H: np.ndarray
    H_plus: np.ndarray
    H_V: np.ndarray
    H_A: np.ndarray
    m: int
    n: int

    def __post_init__(self):
        for name in ("H", "H_plus", "H_V", "H_A"):
            arr = np.array(getattr(self, name), dtype=float, copy=True)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.H.shape != (self.m, self.n):
            raise DimensionMismatch(f"H must be {self.m}x{self.n}")
        if self.H_plus.shape != (self.n, self.m):
            raise DimensionMismatch(f"H_plus must be {self.n}x{self.m}")
        resid = self.H_plus @ self.H - np.eye(self.n)
        if np.max(np.abs(resid)) > 1e-9:
            raise ValueError("H_plus is not a left inverse of H (residual > 1e-9)")

    @property
    def n_aux(self) -> int:
        return self.m - self.n


def make_lifting(H) -> Lifting:
    """Build a lifting from H, using the left inverse [H_V^-1  0]."""
    H = np.array(H, dtype=float)
    if H.ndim != 2:
        raise DimensionMismatch("H must be a 2-D matrix")
    m, n = H.shape
    if m < n:
        raise DimensionMismatch(f"H must have at least as many rows as columns, got {m}x{n}")

    sv = np.linalg.svd(H, compute_uv=False)
    if sv[-1] == 0.0 or sv[0] > _COND_LIMIT * sv[-1]:
        raise RankDeficient(f"H is not full column rank (singular values {sv})")

    H_V = H[:n, :]
    H_A = H[n:, :]
    sv_v = np.linalg.svd(H_V, compute_uv=False)
    if sv_v[-1] == 0.0 or sv_v[0] > _COND_LIMIT * sv_v[-1]:
        raise SingularBlock(
            f"leading {n}x{n} block of H is numerically singular "
            f"(singular values {sv_v})"
        )
    # LU with partial pivoting via solve against the identity
    H_V_inv = np.linalg.solve(H_V, np.eye(n))
    H_plus = np.hstack([H_V_inv, np.zeros((n, m - n))])
    return Lifting(H=H, H_plus=H_plus, H_V=H_V, H_A=H_A, m=m, n=n)


def null_basis(lift: Lifting) -> np.ndarray:
    """Sparse left-null-space basis L = [-H_A H_V^-1 | I], rows satisfy LH=0.

    Rows are computed independently so a basis row depends only on its own
    auxiliary row of H; bases of liftings sharing leading rows agree bitwise
    on those rows.
    """
    k = lift.n_aux
    H_V_inv = lift.H_plus[:, : lift.n]
    left = np.array([-(lift.H_A[i] @ H_V_inv) for i in range(k)]).reshape(k, lift.n)
    return np.hstack([left, np.eye(k)])


def svd_null_basis(lift: Lifting) -> np.ndarray:
    """Orthonormal-rows left-null-space basis via SVD.

    Kept as a contrast to ``null_basis``: orthonormal bases do not preserve
    leading rows when auxiliary rows are appended to H.
    """
    if lift.n_aux == 0:
        return np.zeros((0, lift.m))
    _, _, vh = np.linalg.svd(lift.H.T)
    return vh[lift.n:, :]


@dataclass(frozen=True, eq=False)
class RefinementMatrix:
    """N x m matrix A with AH = 0, the input of the sampling refinement."""

    matrix: np.ndarray

    def __post_init__(self):
        arr = np.array(self.matrix, dtype=float, copy=True)
        if arr.ndim != 2:
            raise DimensionMismatch("refinement matrix must be 2-D")
        arr.setflags(write=False)
        object.__setattr__(self, "matrix", arr)
        if arr.shape[0] and np.any(np.max(np.abs(arr), axis=1) < ZERO_TOL):
            raise ValueError("refinement matrix contains an all-zero row")

    @property
    def rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def cols(self) -> int:
        return self.matrix.shape[1]

    def check_annihilates(self, H, tol: float = 1e-9) -> None:
        resid = np.max(np.abs(self.matrix @ np.asarray(H))) if self.rows else 0.0
        if resid > tol:
            raise ValueError(f"A H != 0 (max residual {resid:.3g})")


def expected_row_count(n_aux: int, s: int) -> int:
    """Row count of ``subspace_sample_matrix``: (m-n) + s (m-n)(m-n-1)."""
    return n_aux + s * n_aux * max(n_aux - 1, 0)


def subspace_sample_matrix(lift: Lifting, s: int) -> RefinementMatrix:
    """Stack the null basis with pairwise angular samples of its row space.

    Returns [L; A2] where A2 holds, for every ordered pair p of basis rows
    (lexicographic order) and every i in 1..s, the combination
    cos(i*pi/(s+1)) L[p0] + sin(i*pi/(s+1)) L[p1].  The angle grid excludes
    0 and pi, so no sampled row duplicates a basis row.  With fewer than two
    auxiliary variables or s = 0 the result is just L.

    Row order is deterministic: basis rows first, then blocks by pair order,
    rows within a block by angle index.
    """
    if s < 0:
        raise ValueError("sample count s must be nonnegative")
    L = null_basis(lift)
    k = lift.n_aux
    if k < 2 or s == 0:
        return RefinementMatrix(L)
    angles = np.arange(1, s + 1) * (np.pi / (s + 1))
    cos_w = np.cos(angles)
    sin_w = np.sin(angles)
    blocks = [L]
    for p0, p1 in itertools.permutations(range(k), 2):
        blocks.append(np.outer(cos_w, L[p0]) + np.outer(sin_w, L[p1]))
    A = np.vstack(blocks)
    assert A.shape[0] == expected_row_count(k, s)
    return RefinementMatrix(A)
