"""Bounded-variable revised simplex for box-polytope linear programs.

Solves   min c.x   s.t.   lb <= G x <= ub,   x in R^n free,
by introducing z = Gx (bounded) and artificial variables for phase 1:

    G x - z + D a = 0,   lb <= z <= ub,   a >= 0.

For the refinement use case G has full column rank and the box constraints
bound Gx, hence x, so the objective is always bounded; an unbounded ray can
only arise from numerical degradation and is reported as a failure.

Bland's rule (smallest index entering, smallest variable index among ratio
ties) prevents cycling.  The iteration cap defaults to 50*(n+2m).  The
basis inverse is maintained by rank-one pivot updates and refreshed
periodically from scratch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_AT_LO, _AT_UP, _BASIC, _FREE = 0, 1, 2, 3

_DJ_TOL = 1e-9
_PIV_TOL = 1e-11
_FEAS_TOL = 1e-8
_REFRESH_EVERY = 40

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
NUMERICAL_FAILURE = "numerical_failure"


@dataclass(frozen=True)
class LpResult:
    status: str
    value: float | None = None
    x: np.ndarray | None = None


class BoundedVariableSimplex:
    """One polytope {lb <= Gx <= ub}; supports re-solving many objectives.

    After the first solve the optimal basis is kept, so subsequent calls to
    :meth:`minimize` start from a primal-feasible vertex and skip phase 1.
    """

    def __init__(self, G, lb, ub, max_iter=None):
        G = np.asarray(G, dtype=float)
        lb = np.asarray(lb, dtype=float)
        ub = np.asarray(ub, dtype=float)
        m, n = G.shape
        if lb.shape != (m,) or ub.shape != (m,):
            raise ValueError("bound vectors must match the number of rows of G")
        if np.any(lb > ub):
            raise ValueError("lower bounds exceed upper bounds")
        if not (np.all(np.isfinite(lb)) and np.all(np.isfinite(ub))):
            raise ValueError("bounds must be finite")
        self.m, self.n = m, n
        self.n_tot = n + 2 * m
        self.max_iter = max_iter if max_iter is not None else 50 * (n + 2 * m)

        self.A = np.zeros((m, self.n_tot))
        self.A[:, :n] = G
        self.A[:, n : n + m] = -np.eye(m)
        # artificial signs chosen so the initial artificial values are >= 0
        z0 = np.where(np.abs(lb) <= np.abs(ub), lb, ub)
        d_sign = np.where(z0 >= 0.0, 1.0, -1.0)
        self.A[:, n + m :] = np.diag(d_sign)

        inf = np.inf
        self.lo = np.concatenate([np.full(n, -inf), lb, np.zeros(m)])
        self.up = np.concatenate([np.full(n, inf), ub, np.full(m, inf)])

        self.vstat = np.empty(self.n_tot, dtype=np.int8)
        self.vstat[:n] = _FREE
        self.vstat[n : n + m] = np.where(np.abs(lb) <= np.abs(ub), _AT_LO, _AT_UP)
        self.vstat[n + m :] = _BASIC
        self.basis = np.arange(n + m, self.n_tot)
        self.Binv = np.diag(d_sign)  # inverse of diag(+-1) is itself
        self.xB = np.abs(z0)

        self._pivots = 0
        self._feasible = None  # None = phase 1 not run yet
        self._rebuild_direction_masks()

    def _rebuild_direction_masks(self):
        # eligibility by status alone; recomputed only when statuses change
        pinned = self.lo == self.up
        stat = self.vstat
        self._inc_ok = ((stat == _AT_LO) | (stat == _FREE)) & ~pinned
        self._dec_ok = ((stat == _AT_UP) | (stat == _FREE)) & ~pinned

    # -- state helpers -----------------------------------------------------

    def _nonbasic_values(self):
        v = np.where(self.vstat == _AT_UP, self.up, self.lo)
        v[self.vstat == _FREE] = 0.0
        v[self.vstat == _BASIC] = 0.0
        v[~np.isfinite(v)] = 0.0
        return v

    def _refresh(self):
        """Recompute the basis inverse and basic values from scratch."""
        B = self.A[:, self.basis]
        self.Binv = np.linalg.inv(B)
        self.xB = self.Binv @ -(self.A @ self._nonbasic_values())

    def _full_solution(self):
        v = self._nonbasic_values()
        v[self.basis] = self.xB
        return v

    # -- core pivot loop ---------------------------------------------------

    def _run(self, c):
        """Returns OPTIMAL / NUMERICAL_FAILURE; mutates the basis state."""
        scale = max(1.0, float(np.max(np.abs(c))) if c.size else 1.0)
        dj_tol = _DJ_TOL * scale
        A = self.A
        for _ in range(self.max_iter):
            y = c[self.basis] @ self.Binv
            r = c - y @ A

            can_inc = self._inc_ok & (r < -dj_tol)
            can_dec = self._dec_ok & (r > dj_tol)
            eligible = np.nonzero(can_inc | can_dec)[0]
            if eligible.size == 0:
                return OPTIMAL
            e = int(eligible[0])  # Bland: smallest index
            direction = 1.0 if can_inc[e] else -1.0

            d = self.Binv @ A[:, e]
            drop = direction * d  # basic values move by -drop * t

            t_own = np.inf
            if np.isfinite(self.lo[e]) and np.isfinite(self.up[e]):
                t_own = self.up[e] - self.lo[e]
            lo_b = self.lo[self.basis]
            up_b = self.up[self.basis]
            tk = np.full(self.m, np.inf)
            sel_lo = (drop > _PIV_TOL) & np.isfinite(lo_b)
            sel_up = (drop < -_PIV_TOL) & np.isfinite(up_b)
            tk[sel_lo] = np.maximum((self.xB[sel_lo] - lo_b[sel_lo]) / drop[sel_lo], 0.0)
            tk[sel_up] = np.maximum((up_b[sel_up] - self.xB[sel_up]) / (-drop[sel_up]), 0.0)
            tk[~np.isfinite(tk)] = np.inf
            t_basic = tk.min() if self.m else np.inf

            if t_basic < t_own - 1e-12:
                # pivot; Bland ties go to the smallest variable index
                tie = np.nonzero(tk <= t_basic + 1e-12)[0]
                leave_row = int(tie[np.argmin(self.basis[tie])])
                if abs(d[leave_row]) < _PIV_TOL:
                    return NUMERICAL_FAILURE
                enter_value = self._value_of(e) + direction * t_basic
                self.xB -= (direction * t_basic) * d
                leaving = self.basis[leave_row]
                self.vstat[leaving] = _AT_LO if drop[leave_row] > 0.0 else _AT_UP
                self.basis[leave_row] = e
                self.vstat[e] = _BASIC
                self.xB[leave_row] = enter_value
                # rank-one update of the basis inverse
                piv = self.Binv[leave_row] / d[leave_row]
                self.Binv -= np.outer(d, piv)
                self.Binv[leave_row] = piv
                self._rebuild_direction_masks()
                self._pivots += 1
                if self._pivots % _REFRESH_EVERY == 0:
                    self._refresh()
            elif np.isfinite(t_own):
                # entering variable travels to its opposite bound
                self.xB -= (direction * t_own) * d
                self.vstat[e] = _AT_UP if self.vstat[e] == _AT_LO else _AT_LO
                self._rebuild_direction_masks()
            else:
                # cannot happen for bounded instances; numerical degradation
                return NUMERICAL_FAILURE
        return NUMERICAL_FAILURE  # iteration cap hit

    def _value_of(self, j):
        if self.vstat[j] == _AT_UP:
            return self.up[j]
        if self.vstat[j] == _AT_LO and np.isfinite(self.lo[j]):
            return self.lo[j]
        return 0.0

    # -- public ------------------------------------------------------------

    def ensure_feasible(self):
        """Phase 1; returns OPTIMAL (feasible), INFEASIBLE, or failure."""
        if self._feasible is not None:
            return self._feasible
        c1 = np.zeros(self.n_tot)
        c1[self.n + self.m :] = 1.0
        status = self._run(c1)
        if status != OPTIMAL:
            self._feasible = status
            return status
        bound_scale = max(
            1.0, float(np.max(np.abs(self.lo[self.n : self.n + self.m]))),
            float(np.max(np.abs(self.up[self.n : self.n + self.m]))),
        )
        if float(c1 @ self._full_solution()) > _FEAS_TOL * bound_scale:
            self._feasible = INFEASIBLE
            return INFEASIBLE
        # pin artificials at zero for all later objectives
        self.up[self.n + self.m :] = 0.0
        self._rebuild_direction_masks()
        self._feasible = OPTIMAL
        return OPTIMAL

    def minimize(self, cx) -> LpResult:
        """Minimize cx . x over the polytope (phase 2, warm-started)."""
        cx = np.asarray(cx, dtype=float)
        if cx.shape != (self.n,):
            raise ValueError(f"objective must have {self.n} components")
        feas = self.ensure_feasible()
        if feas != OPTIMAL:
            return LpResult(status=feas)
        c = np.zeros(self.n_tot)
        c[: self.n] = cx
        status = self._run(c)
        if status != OPTIMAL:
            return LpResult(status=NUMERICAL_FAILURE)
        x = self._full_solution()[: self.n].copy()
        return LpResult(status=OPTIMAL, value=float(cx @ x), x=x)


def lp_solve(c, G, lb, ub, max_iter=None) -> LpResult:
    """One-shot LP:  min c.x  s.t.  lb <= Gx <= ub  (x free).

    Returns an optimal value and attaining point, or infeasibility, or a
    numerical failure (iteration cap / singular basis).
    """
    solver = BoundedVariableSimplex(G, lb, ub, max_iter=max_iter)
    return solver.minimize(c)
