"""Benchmark systems wired up as DynamicsSystem + Lifting pairs.

State ordering conventions are frozen here:

* van der Pol: (x1, x2).
* enzymatic reaction: (A, F, F:A, A', R, R:A') with six rate parameters.
* platoon: agent-major blocks (p_x, p_y, v_x, v_y); agent 1 is the leader.
  Disturbance vector = (u_x, u_y, w_x^1, w_y^1, ..., w_x^P, w_y^P): the two
  feedforward channels ride along as degenerate, time-scheduled
  "disturbances" so the same machinery samples/bounds them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .embedding import BoxSchedule, EmbeddingTrajectory
from .errors import FeedforwardLoadError
from .exprgraph import (
    Const,
    DistVar,
    DynamicsSystem,
    ParamVar,
    StateVar,
    powi,
    sqrt,
    tanh,
)
from .intervals import Box
from .lifting import Lifting, make_lifting


@dataclass(frozen=True)
class ObstacleSpec:
    center: tuple
    radius: float
    agent_position_indices: tuple

    def __post_init__(self):
        if self.radius <= 0.0:
            raise ValueError("obstacle radius must be positive")


@dataclass(frozen=True)
class SafetyVerdict:
    agent: int
    safe: bool
    min_distance: float
    first_unsafe_time: float | None


@dataclass
class ModelSpec:
    name: str
    sys: DynamicsSystem
    lift: Lifting
    x0box: Box
    wbox: object  # Box or BoxSchedule
    thetabox: Box
    t_final: float
    dt: float
    default_method: str
    invariant_aux: frozenset = frozenset()
    safety: ObstacleSpec | None = None

    def __post_init__(self):
        if self.lift.n != self.sys.n:
            raise ValueError("lifting base dimension must match the system")


_EMPTY = Box(np.zeros(0), np.zeros(0))


# ---------------------------------------------------------------------------
# van der Pol oscillator
# ---------------------------------------------------------------------------

def vanderpol(l: int = 4, mu: float = 1.0) -> ModelSpec:
    """Van der Pol oscillator lifted by l evenly spread direction rows.

    The i-th auxiliary row of H is [cos(i*pi/(l+1)), sin(i*pi/(l+1))]; this
    lifting applies to any planar system, no domain knowledge needed.
    l = 0 gives the plain interval-reachability baseline.
    """
    if l < 0:
        raise ValueError("l must be nonnegative")
    if mu <= 0.0:
        raise ValueError("mu must be positive")
    x1, x2 = StateVar(0), StateVar(1)
    f1 = Const(mu) * (x1 - powi(x1, 3) / 3.0 - x2)
    f2 = x1 / Const(mu)
    sys = DynamicsSystem(n=2, p=0, q=0, outputs=(f1, f2))

    rows = [np.eye(2)]
    for i in range(1, l + 1):
        ang = i * math.pi / (l + 1)
        rows.append(np.array([[math.cos(ang), math.sin(ang)]]))
    lift = make_lifting(np.vstack(rows))

    return ModelSpec(
        name=f"vanderpol(l={l}, mu={mu:g})",
        sys=sys,
        lift=lift,
        x0box=Box([0.9, -0.1], [1.1, 0.1]),
        wbox=_EMPTY,
        thetabox=_EMPTY,
        t_final=2.0 * math.pi,
        dt=0.01,
        default_method="rk4",
    )


# ---------------------------------------------------------------------------
# enzymatic reaction
# ---------------------------------------------------------------------------

# printed to two decimals in its source; row 2 is not exactly a conserved
# direction of the reaction network, so rows are projected below
ENZYME_K_PRINTED = np.array(
    [
        [-0.48, -0.14, -0.62, -0.48, 0.24, -0.24],
        [-0.31, 0.75, 0.43, -0.31, 0.15, -0.15],
        [0.0, 0.0, 0.0, 0.0, 0.70, 0.70],
    ]
)

ENZYME_K_HAT = np.array([0.1, 0.033, 16.0, 5.0, 0.5, 0.3])

# conserved directions c of the network: c . f(x, k) = 0 for every x, k.
# The reaction fluxes span constraints c3 = c1 + c2, c4 = c1, c6 = c4 + c5,
# so the invariant subspace is spanned by:
ENZYME_INVARIANT_BASIS = np.array(
    [
        [1.0, 0.0, 1.0, 1.0, 0.0, 1.0],
        [0.0, 1.0, 1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 1.0, 1.0],
    ]
)


def enzyme_invariant_projection(K) -> np.ndarray:
    """Orthogonal projection of each row onto the conserved-direction span."""
    V = ENZYME_INVARIANT_BASIS
    gram = V @ V.T
    K = np.atleast_2d(np.asarray(K, dtype=float))
    return np.linalg.solve(gram, V @ K.T).T @ V


def enzyme_lifting_rows() -> np.ndarray:
    """The 3x6 auxiliary block actually used: printed rows, re-projected
    onto exact conserved directions wherever the printed precision broke
    invariance."""
    K = ENZYME_K_PRINTED.copy()
    proj = enzyme_invariant_projection(K)
    for i in range(K.shape[0]):
        if np.max(np.abs(K[i] - proj[i])) > 1e-9:
            K[i] = proj[i]
    return K


def enzyme() -> ModelSpec:
    """Six-species enzymatic reaction with rate constants known to within
    an order of magnitude: k in [k_hat, 10 k_hat]."""
    xA, xF, xFA, xAp, xR, xRAp = (StateVar(i) for i in range(6))
    k1, k2, k3, k4, k5, k6 = (ParamVar(i) for i in range(6))
    r1 = k1 * xA * xF
    r2 = k2 * xFA
    r3 = k3 * xFA
    r4 = k4 * xAp * xR
    r5 = k5 * xRAp
    r6 = k6 * xRAp
    outputs = (
        -r1 + r2 + r6,
        -r1 + r2 + r3,
        r1 - r2 - r3,
        r3 - r4 + r5,
        -r4 + r5 + r6,
        r4 - r5 - r6,
    )
    sys = DynamicsSystem(n=6, p=0, q=6, outputs=outputs)
    K = enzyme_lifting_rows()
    lift = make_lifting(np.vstack([np.eye(6), K]))
    x0 = np.array([34.0, 20.0, 0.0, 0.0, 16.0, 0.0])
    return ModelSpec(
        name="enzyme",
        sys=sys,
        lift=lift,
        x0box=Box.point(x0),
        wbox=_EMPTY,
        thetabox=Box(ENZYME_K_HAT, 10.0 * ENZYME_K_HAT),
        t_final=0.04,
        dt=1e-3,
        default_method="rk4",
        invariant_aux=frozenset({6, 7, 8}),
    )


# ---------------------------------------------------------------------------
# multi-agent platoon
# ---------------------------------------------------------------------------

PLATOON_U_MAX = 5.0
PLATOON_KP = 5.0
PLATOON_KV = 5.0
PLATOON_SPACING = 0.5
PLATOON_W_BOUND = 0.01
# lower clip for the speed in the follower unit-vector term; every true
# trajectory keeps ||v|| well above this, so the clipped dynamics coincide
# with the plain PD law along all realizable motion while interval boxes
# wide enough to straddle v = 0 still evaluate (division stays defined)
PLATOON_SPEED_FLOOR = 0.5
DEFAULT_OBSTACLE_CENTER = (4.0, 3.5)
DEFAULT_OBSTACLE_RADIUS = 1.0


def saturate(u, u_max: float = PLATOON_U_MAX):
    """Smooth input saturation u_max * tanh(u / u_max), bounded by u_max."""
    return Const(u_max) * tanh(u / Const(u_max))


def smooth_max(a, c: float):
    """max(a, c) for a >= 0 via (a + c + |a - c|)/2 with |x| = sqrt(x^2).

    On intervals the result's lower endpoint is at least c/2, so a quotient
    with this as denominator is always defined."""
    diff = a - Const(c)
    return Const(0.5) * (a + Const(c) + sqrt(powi(diff, 2)))


def platoon_initial_state(P: int) -> np.ndarray:
    x0 = np.empty(4 * P)
    for a in range(P):
        x0[4 * a + 0] = 8.0 + 0.2 * math.sqrt(3.0) * a
        x0[4 * a + 1] = 7.0 + 0.2 * a
        x0[4 * a + 2] = -math.sqrt(3.0)
        x0[4 * a + 3] = -1.0
    return x0


def _platoon_dynamics(P: int) -> DynamicsSystem:
    p_dim = 2 + 2 * P
    outputs = []
    # leader
    outputs.append(StateVar(2))
    outputs.append(StateVar(3))
    outputs.append(saturate(DistVar(0)) + DistVar(2))
    outputs.append(saturate(DistVar(1)) + DistVar(3))
    for a in range(1, P):
        base = 4 * a
        prev = 4 * (a - 1)
        vpx, vpy = StateVar(prev + 2), StateVar(prev + 3)
        speed = sqrt(powi(vpx, 2) + powi(vpy, 2))
        norm = smooth_max(speed, PLATOON_SPEED_FLOOR)  # shared by both axes
        outputs.append(StateVar(base + 2))
        outputs.append(StateVar(base + 3))
        for d in range(2):
            gap = StateVar(prev + d) - StateVar(base + d)
            offset = Const(PLATOON_SPACING) * (StateVar(prev + 2 + d) / norm)
            track = Const(PLATOON_KP) * (gap - offset)
            damp = Const(PLATOON_KV) * (StateVar(prev + 2 + d) - StateVar(base + 2 + d))
            outputs.append(track + damp + DistVar(2 + 2 * a + d))
    return DynamicsSystem(n=4 * P, p=p_dim, q=0, outputs=tuple(outputs))


def platoon_lifting(P: int) -> Lifting:
    """I_{4P} stacked with per-agent position+velocity coupling rows."""
    n = 4 * P
    rows = [np.eye(n)]
    for a in range(P):
        r1 = np.zeros(n)
        r1[4 * a + 0] = 1.0
        r1[4 * a + 2] = 1.0
        r2 = np.zeros(n)
        r2[4 * a + 1] = 1.0
        r2[4 * a + 3] = 1.0
        rows.append(np.vstack([r1, r2]))
    return make_lifting(np.vstack(rows))


def default_feedforward(t_final: float, dt: float) -> tuple:
    """Feedforward toward the origin for the nominal leader.

    u = -0.5 p - 1.2 v evaluated along the undisturbed point-initial leader
    trajectory simulated with the same saturated dynamics, stored as a
    zero-order-hold table on the dt grid.  Returns (times, u) arrays.
    """
    n_steps = int(math.ceil(t_final / dt - 1e-12))
    times = np.arange(n_steps + 1) * dt
    u = np.empty((n_steps + 1, 2))
    p = np.array([8.0, 7.0])
    v = np.array([-math.sqrt(3.0), -1.0])
    for k in range(n_steps + 1):
        u[k] = -0.5 * p - 1.2 * v
        acc = PLATOON_U_MAX * np.tanh(u[k] / PLATOON_U_MAX)
        p = p + dt * v
        v = v + dt * acc
    return times, u


def load_feedforward_csv(path) -> tuple:
    """Read a `t,u_x,u_y` table (strictly increasing t, zero-order hold)."""
    rows = []
    try:
        with open(path) as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                parts = line.split(",")
                if len(parts) != 3:
                    raise FeedforwardLoadError(
                        f"{path}:{line_no}: expected 3 comma-separated columns"
                    )
                try:
                    rows.append([float(v) for v in parts])
                except ValueError:
                    if line_no == 1:
                        continue  # header
                    raise FeedforwardLoadError(
                        f"{path}:{line_no}: non-numeric value in {line!r}"
                    ) from None
    except OSError as exc:
        raise FeedforwardLoadError(f"cannot read feedforward file {path}: {exc}") from exc
    if not rows:
        raise FeedforwardLoadError(f"{path}: no feedforward samples")
    data = np.array(rows)
    times = data[:, 0]
    if np.any(np.diff(times) <= 0.0):
        raise FeedforwardLoadError(f"{path}: times must be strictly increasing")
    return times, data[:, 1:]


def platoon_disturbance_schedule(P: int, ff_times, ff_u) -> BoxSchedule:
    K = len(ff_times)
    p_dim = 2 + 2 * P
    lo = np.empty((K, p_dim))
    hi = np.empty((K, p_dim))
    lo[:, :2] = ff_u
    hi[:, :2] = ff_u
    lo[:, 2:] = -PLATOON_W_BOUND
    hi[:, 2:] = PLATOON_W_BOUND
    return BoxSchedule(times=np.asarray(ff_times, dtype=float), lo=lo, hi=hi)


def platoon(
    P: int = 6,
    t_final: float = 3.0,
    dt: float = 0.01,
    feedforward=None,
    obstacle: ObstacleSpec | None = None,
) -> ModelSpec:
    """Leader plus P-1 followers under PD tracking with spacing 0.5.

    ``feedforward`` may be None (built-in origin-seeking table), a CSV path,
    or a (times, u) pair.  4P base states plus 2P auxiliary rows give 6P
    lifted states.
    """
    if P < 1:
        raise ValueError("P must be at least 1")
    if feedforward is None:
        ff_times, ff_u = default_feedforward(t_final, dt)
    elif isinstance(feedforward, (str, bytes)) or hasattr(feedforward, "__fspath__"):
        ff_times, ff_u = load_feedforward_csv(feedforward)
    else:
        ff_times, ff_u = feedforward
        ff_times = np.asarray(ff_times, dtype=float)
        ff_u = np.asarray(ff_u, dtype=float)

    sys = _platoon_dynamics(P)
    lift = platoon_lifting(P)
    if obstacle is None:
        obstacle = ObstacleSpec(
            center=DEFAULT_OBSTACLE_CENTER,
            radius=DEFAULT_OBSTACLE_RADIUS,
            agent_position_indices=tuple((4 * a, 4 * a + 1) for a in range(P)),
        )
    return ModelSpec(
        name=f"platoon(P={P})",
        sys=sys,
        lift=lift,
        x0box=Box.point(platoon_initial_state(P)),
        wbox=platoon_disturbance_schedule(P, ff_times, ff_u),
        thetabox=_EMPTY,
        t_final=t_final,
        dt=dt,
        default_method="euler",
        safety=obstacle,
    )


# ---------------------------------------------------------------------------
# obstacle clearance
# ---------------------------------------------------------------------------

def check_obstacle_clearance(traj: EmbeddingTrajectory, obs: ObstacleSpec) -> list:
    """Per-agent safety: SAFE iff the position bound rectangle never touches
    the closed disc (boundary contact counts as intersection)."""
    lo = traj.lo_array()
    hi = traj.hi_array()
    cx, cy = obs.center
    verdicts = []
    for agent, (ix, iy) in enumerate(obs.agent_position_indices):
        nearest_x = np.clip(cx, lo[:, ix], hi[:, ix])
        nearest_y = np.clip(cy, lo[:, iy], hi[:, iy])
        dist = np.hypot(nearest_x - cx, nearest_y - cy)
        unsafe = dist <= obs.radius
        if unsafe.any():
            first = int(np.argmax(unsafe))
            verdicts.append(
                SafetyVerdict(
                    agent=agent,
                    safe=False,
                    min_distance=float(dist.min()),
                    first_unsafe_time=float(traj.times[first]),
                )
            )
        else:
            verdicts.append(
                SafetyVerdict(
                    agent=agent,
                    safe=True,
                    min_distance=float(dist.min()),
                    first_unsafe_time=None,
                )
            )
    return verdicts
