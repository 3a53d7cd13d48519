"""Facewise embedding system for lifted boxes and its fixed-step integrators.

The embedding state is a pair (lo, hi) bounding the lifted trajectory.  Each
derivative component is computed on one face of the hyperrectangle: the i-th
lower face pins the i-th upper endpoint to lo[i] (and symmetrically for the
upper face), the face is refined, the natural inclusion function of the
lifted dynamics is evaluated on it, and component i of the appropriate bound
is taken.  Refinement runs inside every derivative evaluation, i.e. in every
stage of a Runge–Kutta step.

A Monte-Carlo validator integrates the original system for sampled initial
conditions, parameters, and piecewise-constant disturbances, and reports the
worst containment violation of H x(t) against the tube; this is the
empirical soundness check used throughout the test-suite.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, StepFailure
from .exprgraph import DynamicsSystem
from .intervals import Box
from .lifting import Lifting


@dataclass
class EmbeddingState:
    """Lower/upper endpoint pair of the lifted box.

    lo <= hi is required of initial states; the integrator monitors later
    violations itself (see the collapse handling in ``integrate``).
    """

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=float).reshape(-1)
        self.hi = np.asarray(self.hi, dtype=float).reshape(-1)
        if self.lo.shape != self.hi.shape:
            raise DimensionMismatch("embedding state endpoints differ in length")

    @property
    def m(self) -> int:
        return self.lo.shape[0]

    def as_box(self) -> Box:
        return Box(self.lo, self.hi)


@dataclass
class IntegrationStats:
    wallclock_s: float = 0.0
    steps: int = 0
    refinement_calls: int = 0
    collapsed_steps: int = 0
    lp_fallbacks: int = 0
    vacuous_faces: int = 0

    def as_dict(self) -> dict:
        return {
            "wallclock_s": self.wallclock_s,
            "steps": self.steps,
            "refinement_calls": self.refinement_calls,
            "collapsed_steps": self.collapsed_steps,
            "lp_fallbacks": self.lp_fallbacks,
            "vacuous_faces": self.vacuous_faces,
        }


@dataclass
class EmbeddingTrajectory:
    times: np.ndarray
    states: list
    refinement_label: str
    vacuous_at: float | None
    stats: IntegrationStats

    def lo_array(self) -> np.ndarray:
        return np.array([s.lo for s in self.states])

    def hi_array(self) -> np.ndarray:
        return np.array([s.hi for s in self.states])

    @property
    def final(self) -> EmbeddingState:
        return self.states[-1]


@dataclass(frozen=True)
class BoxSchedule:
    """Zero-order-hold sequence of boxes over time."""

    times: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if t.ndim != 1 or lo.shape != hi.shape or lo.shape[0] != t.shape[0]:
            raise DimensionMismatch("schedule arrays must share their leading length")
        if np.any(np.diff(t) <= 0.0):
            raise ValueError("schedule times must be strictly increasing")
        if np.any(lo > hi):
            raise ValueError("schedule lower bounds exceed upper bounds")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.shape[1]

    def box_at(self, t: float) -> Box:
        idx = int(np.searchsorted(self.times, t + 1e-12, side="right") - 1)
        idx = min(max(idx, 0), self.lo.shape[0] - 1)
        return Box(self.lo[idx], self.hi[idx])


def _resolve_box(box_or_schedule, t: float) -> Box:
    if isinstance(box_or_schedule, BoxSchedule):
        return box_or_schedule.box_at(t)
    return box_or_schedule


_EMPTY = Box(np.zeros(0), np.zeros(0))


def _rhs_arrays(g: DynamicsSystem, refiner, lo, hi, wbox: Box, thetabox: Box, stats=None):
    """Derivatives (dlo, dhi) of the embedding state, arrays in/out."""
    m = g.n
    faces_lo = np.tile(lo, (2 * m, 1))
    faces_hi = np.tile(hi, (2 * m, 1))
    rng = np.arange(m)
    faces_hi[rng, rng] = lo  # lower faces: pin upper endpoint i to lo[i]
    faces_lo[m + rng, rng] = hi  # upper faces: pin lower endpoint i to hi[i]

    rlo, rhi, vac = refiner.refine_batch(faces_lo, faces_hi)
    out_lo, out_hi = g.tape().eval_interval(
        rlo, rhi, wbox.lo[None, :], wbox.hi[None, :],
        thetabox.lo[None, :], thetabox.hi[None, :],
    )
    dlo = out_lo[rng, rng]
    dhi = out_hi[m + rng, rng]
    if stats is not None:
        if not refiner.is_identity:
            stats.refinement_calls += 1
        stats.vacuous_faces += int(vac.sum())
    return dlo, dhi, bool(vac.any())


def embedding_rhs(
    g: DynamicsSystem,
    refiner,
    state: EmbeddingState,
    wbox: Box | None = None,
    thetabox: Box | None = None,
):
    """Facewise embedding derivative at ``state``; returns (dlo, dhi)."""
    wbox = wbox if wbox is not None else _EMPTY
    thetabox = thetabox if thetabox is not None else _EMPTY
    if state.m != g.n:
        raise DimensionMismatch(f"state has {state.m} components, system has {g.n}")
    if np.any(state.lo > state.hi):
        raise ValueError("embedding state must satisfy lo <= hi")
    dlo, dhi, _ = _rhs_arrays(g, refiner, state.lo, state.hi, wbox, thetabox)
    return dlo, dhi


def _clamp_ordered(lo, hi):
    """Clamp any inverted components to their midpoint; True if clamped."""
    bad = lo > hi
    if not bad.any():
        return lo, hi, False
    mid = 0.5 * (lo + hi)
    lo = np.where(bad, mid, lo)
    hi = np.where(bad, mid, hi)
    return lo, hi, True


def integrate(
    g: DynamicsSystem,
    refiner,
    y0: EmbeddingState,
    wbox=None,
    thetabox=None,
    t_final: float = 1.0,
    dt: float = 0.01,
    method: str = "rk4",
    post_step_refine: bool = False,
) -> EmbeddingTrajectory:
    """Fixed-step integration of the embedding system.

    ``method`` is "euler" or "rk4"; refinement is applied inside every
    derivative evaluation (every RK stage).  ``wbox``/``thetabox`` may be a
    Box or a BoxSchedule (resolved once per step, at the step start).  A
    trailing short step lands exactly on ``t_final``.

    If a step produces lo[i] > hi[i], both are clamped to their midpoint,
    the step is flagged in the stats, and integration continues; a flagged
    run is usable but no longer certified.  ``post_step_refine`` applies a
    whole-box refinement pass after every step (off by default, matching
    the facewise formulation).
    """
    if dt <= 0.0 or t_final <= 0.0:
        raise ValueError("dt and t_final must be positive")
    if method not in ("euler", "rk4"):
        raise ValueError(f"unknown method {method!r}")
    wbox = wbox if wbox is not None else _EMPTY
    thetabox = thetabox if thetabox is not None else _EMPTY
    if y0.m != g.n:
        raise DimensionMismatch(f"initial state has {y0.m} components, need {g.n}")
    if np.any(y0.lo > y0.hi):
        raise ValueError("initial embedding state must satisfy lo <= hi")

    stats = IntegrationStats()
    vacuous_at = None
    lo = y0.lo.copy()
    hi = y0.hi.copy()
    times = [0.0]
    states = [EmbeddingState(lo.copy(), hi.copy())]

    n_full = int(np.floor(t_final / dt + 1e-12))
    step_sizes = [dt] * n_full
    rem = t_final - n_full * dt
    if rem > 1e-12 * max(1.0, t_final):
        step_sizes.append(rem)

    start = time.perf_counter()
    t = 0.0
    for h in step_sizes:
        wb = _resolve_box(wbox, t)
        tb = _resolve_box(thetabox, t)
        clamped = False

        def rhs(slo, shi):
            nonlocal clamped, vacuous_at
            slo, shi, c = _clamp_ordered(slo, shi)
            clamped = clamped or c
            dlo, dhi, vac = _rhs_arrays(g, refiner, slo, shi, wb, tb, stats)
            if vac and vacuous_at is None:
                vacuous_at = t
            if not (np.all(np.isfinite(dlo)) and np.all(np.isfinite(dhi))):
                bad = np.nonzero(~(np.isfinite(dlo) & np.isfinite(dhi)))[0]
                raise StepFailure(
                    f"non-finite derivative at t={t:.6g}, component {int(bad[0])}",
                    time=t,
                    component=int(bad[0]),
                )
            return dlo, dhi

        if method == "euler":
            dlo, dhi = rhs(lo, hi)
            lo = lo + h * dlo
            hi = hi + h * dhi
        else:
            k1lo, k1hi = rhs(lo, hi)
            k2lo, k2hi = rhs(lo + 0.5 * h * k1lo, hi + 0.5 * h * k1hi)
            k3lo, k3hi = rhs(lo + 0.5 * h * k2lo, hi + 0.5 * h * k2hi)
            k4lo, k4hi = rhs(lo + h * k3lo, hi + h * k3hi)
            lo = lo + (h / 6.0) * (k1lo + 2.0 * k2lo + 2.0 * k3lo + k4lo)
            hi = hi + (h / 6.0) * (k1hi + 2.0 * k2hi + 2.0 * k3hi + k4hi)

        lo, hi, c = _clamp_ordered(lo, hi)
        clamped = clamped or c
        if post_step_refine and not refiner.is_identity:
            rlo, rhi, vac = refiner.refine_batch(lo[None, :], hi[None, :])
            lo, hi = rlo[0], rhi[0]
            if vac[0] and vacuous_at is None:
                vacuous_at = t + h
        if clamped:
            stats.collapsed_steps += 1

        t += h
        stats.steps += 1
        times.append(t)
        states.append(EmbeddingState(lo.copy(), hi.copy()))

    stats.wallclock_s = time.perf_counter() - start
    stats.lp_fallbacks = getattr(refiner, "fallbacks", 0)
    return EmbeddingTrajectory(
        times=np.array(times),
        states=states,
        refinement_label=refiner.label,
        vacuous_at=vacuous_at,
        stats=stats,
    )


def bound_size(state: EmbeddingState, n_base: int | None = None, mode: str = "base") -> float:
    """Sum of component widths: the first ``n_base`` (default) or all of them."""
    widths = state.hi - state.lo
    if mode == "lifted":
        return float(widths.sum())
    if mode != "base":
        raise ValueError(f"unknown mode {mode!r}")
    if n_base is None:
        raise ValueError("mode='base' needs n_base")
    return float(widths[:n_base].sum())


# ---------------------------------------------------------------------------
# Monte-Carlo validation
# ---------------------------------------------------------------------------

@dataclass
class ValidationReport:
    trials: int
    seed: int
    max_violation: float
    per_component: np.ndarray
    failures: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "trials": self.trials,
            "seed": self.seed,
            "max_violation": self.max_violation,
            "per_component": [float(v) for v in self.per_component],
            "failures": self.failures,
        }


def _trial_rng(seed: int, trial: int) -> np.random.Generator:
    # counter-based bit generator keyed by (seed, trial): independent,
    # reproducible streams without sequential splitting
    key = np.array([seed % 2**64, trial], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _sample_x0_in_tube(rng, lift: Lifting, y0lo, y0hi, max_attempts=20000):
    """Rejection-sample x with y0lo <= Hx <= y0hi via the base block."""
    H_V_inv = lift.H_plus[:, : lift.n]
    for _ in range(max_attempts):
        u = rng.uniform(y0lo[: lift.n], y0hi[: lift.n])
        x = H_V_inv @ u
        y = lift.H @ x
        if np.all(y >= y0lo - 1e-12) and np.all(y <= y0hi + 1e-12):
            return x
    raise ValueError("rejection sampling of the initial tube failed")


def monte_carlo_validate(
    sys: DynamicsSystem,
    lift: Lifting,
    traj: EmbeddingTrajectory,
    x0box: Box | None,
    wbox=None,
    thetabox=None,
    trials: int = 100,
    seed: int = 0,
    method: str = "rk4",
) -> ValidationReport:
    """Check sampled true trajectories against the computed tube.

    Initial states are sampled uniformly in ``x0box`` (or by rejection
    inside the initial tube when absent), parameters uniformly in
    ``thetabox``, and disturbances piecewise-constant per integration step,
    uniformly within the (possibly scheduled) ``wbox``.  The original
    system is integrated on the trajectory's own time grid with RK4 by
    default; pass method="euler" to validate an Euler tube against the
    matching discrete flow (a fixed-step tube only bounds its own
    discretization order).  The worst componentwise violation of H x(t)
    against [lo(t), hi(t)] is reported.  Zero trials produce an empty
    report with zero violation.
    """
    if method not in ("euler", "rk4"):
        raise ValueError(f"unknown method {method!r}")
    m = lift.m
    report = ValidationReport(
        trials=trials, seed=seed, max_violation=0.0, per_component=np.zeros(m)
    )
    if trials == 0:
        return report

    wbox = wbox if wbox is not None else _EMPTY
    thetabox = thetabox if thetabox is not None else _EMPTY
    times = traj.times
    n_steps = len(times) - 1
    p, q = sys.p, sys.q

    # per-trial draws in a fixed order: x0, theta, then one w row per step
    X = np.empty((trials, sys.n))
    TH = np.empty((trials, q))
    W = np.empty((trials, n_steps, p))
    w_lo = np.empty((n_steps, p))
    w_hi = np.empty((n_steps, p))
    for k in range(n_steps):
        wb = _resolve_box(wbox, times[k])
        w_lo[k] = wb.lo
        w_hi[k] = wb.hi
    y0 = traj.states[0]
    for trial in range(trials):
        rng = _trial_rng(seed, trial)
        if x0box is not None:
            X[trial] = rng.uniform(x0box.lo, x0box.hi)
        else:
            X[trial] = _sample_x0_in_tube(rng, lift, y0.lo, y0.hi)
        TH[trial] = rng.uniform(thetabox.lo, thetabox.hi)
        W[trial] = rng.uniform(w_lo, w_hi)

    H = np.asarray(lift.H)
    per_comp = np.full(m, -np.inf)  # true margins; negative means inside
    tape = sys.tape()

    def record(k):
        Y = X @ H.T
        lo_k = traj.states[k].lo
        hi_k = traj.states[k].hi
        viol = np.maximum(Y - hi_k[None, :], lo_k[None, :] - Y)
        np.maximum(per_comp, viol.max(axis=0), out=per_comp)

    record(0)
    for k in range(n_steps):
        h = times[k + 1] - times[k]
        wk = W[:, k, :]
        if method == "euler":
            X = X + h * tape.eval_point(X, wk, TH)
        else:
            k1 = tape.eval_point(X, wk, TH)
            k2 = tape.eval_point(X + 0.5 * h * k1, wk, TH)
            k3 = tape.eval_point(X + 0.5 * h * k2, wk, TH)
            k4 = tape.eval_point(X + h * k3, wk, TH)
            X = X + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        record(k + 1)

    report.per_component = per_comp
    report.max_violation = float(per_comp.max())
    return report


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def trajectory_to_csv(traj: EmbeddingTrajectory, path) -> None:
    """Write `t, y_lo_1..y_lo_m, y_hi_1..y_hi_m` with round-trip-exact floats."""
    m = traj.states[0].m
    header = (
        ["t"]
        + [f"y_lo_{i + 1}" for i in range(m)]
        + [f"y_hi_{i + 1}" for i in range(m)]
    )
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for t, s in zip(traj.times, traj.states):
            row = [f"{t:.17g}"]
            row += [f"{v:.17g}" for v in s.lo]
            row += [f"{v:.17g}" for v in s.hi]
            fh.write(",".join(row) + "\n")
