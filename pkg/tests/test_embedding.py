import math

import numpy as np
import pytest

from liftreach import vanderpol
from liftreach.embedding import (
    BoxSchedule,
    EmbeddingState,
    bound_size,
    embedding_rhs,
    integrate,
    monte_carlo_validate,
    trajectory_to_csv,
)
from liftreach.errors import StepFailure
from liftreach.exprgraph import (
    Const,
    DistVar,
    DynamicsSystem,
    Neg,
    PowI,
    StateVar,
    build_lifted,
)
from liftreach.intervals import Box, interval_hull_matvec
from liftreach.lifting import make_lifting, subspace_sample_matrix
from liftreach.refinement import IdentityRefiner, LpRefiner, SamplingRefiner


def scalar_decay():
    """x' = -x with the trivial lifting."""
    sys = DynamicsSystem(n=1, p=0, q=0, outputs=(Neg(StateVar(0)),))
    return sys, make_lifting(np.eye(1))


def lifted_vdp(l=2, s=10):
    m = vanderpol(l=l)
    g = build_lifted(m.sys, m.lift)
    y0b = interval_hull_matvec(m.lift.H, m.x0box)
    A = subspace_sample_matrix(m.lift, s)
    return m, g, EmbeddingState(y0b.lo, y0b.hi), A


# --- embedding_rhs ----------------------------------------------------------

def test_rhs_scalar_faces_are_points():
    sys, _ = scalar_decay()
    dlo, dhi = embedding_rhs(sys, IdentityRefiner(), EmbeddingState([1.0], [2.0]))
    assert dlo[0] == pytest.approx(-1.0, abs=1e-14)
    assert dhi[0] == pytest.approx(-2.0, abs=1e-14)


def test_rhs_degenerate_state_matches_point():
    m, g, _, A = lifted_vdp()
    x = np.array([1.0, 0.05])
    y = np.asarray(m.lift.H) @ x
    state = EmbeddingState(y, y)
    for ref in (IdentityRefiner(), SamplingRefiner(A)):
        dlo, dhi = embedding_rhs(g, ref, state)
        assert np.max(np.abs(dlo - dhi)) < 1e-10


def test_rhs_face_containment_monte_carlo():
    # dlo/dhi bound H f(x) over sampled x whose image lies in the refined face
    m, g, state0, A = lifted_vdp()
    H = np.asarray(m.lift.H)
    ref = SamplingRefiner(A)
    state = EmbeddingState(state0.lo - 0.05, state0.hi + 0.05)
    dlo, dhi = embedding_rhs(g, ref, state)
    mlift = m.lift.m
    rng = np.random.default_rng(0)
    X = rng.uniform(0.6, 1.4, size=(1000, 2))
    X[:, 1] = rng.uniform(-0.4, 0.4, size=1000)
    Y = X @ H.T
    F = (np.stack([m.sys.tape().eval_point(X, np.zeros((1, 0)), np.zeros((1, 0)))])[0]) @ H.T
    for i in range(mlift):
        # lower face i: image must bound component i from below
        faces_lo, faces_hi = state.lo.copy(), state.hi.copy()
        faces_hi[i] = faces_lo[i]
        rlo, rhi, vac = ref.refine_batch(faces_lo[None, :], faces_hi[None, :])
        if vac[0]:
            continue
        inside = np.all(Y >= rlo[0], axis=1) & np.all(Y <= rhi[0], axis=1)
        if inside.any():
            assert F[inside, i].min() >= dlo[i] - 1e-9


def test_rhs_rejects_inverted_state():
    sys, _ = scalar_decay()
    with pytest.raises(ValueError):
        embedding_rhs(sys, IdentityRefiner(), EmbeddingState([2.0], [1.0]))


# --- integrate --------------------------------------------------------------

def test_constant_dynamics_constant_trajectory():
    sys = DynamicsSystem(n=2, p=0, q=0, outputs=(Const(0.0), Const(0.0)))
    y0 = EmbeddingState([0.0, -1.0], [1.0, 1.0])
    for method in ("euler", "rk4"):
        traj = integrate(sys, IdentityRefiner(), y0, t_final=1.0, dt=0.1, method=method)
        assert np.array_equal(traj.states[-1].lo, y0.lo)
        assert np.array_equal(traj.states[-1].hi, y0.hi)


def test_exponential_decay_oracle():
    sys, _ = scalar_decay()
    traj = integrate(sys, IdentityRefiner(), EmbeddingState([1.0], [2.0]),
                     t_final=1.0, dt=0.01, method="euler")
    assert traj.states[-1].lo[0] == pytest.approx(math.exp(-1.0), abs=1e-2)
    assert traj.states[-1].hi[0] == pytest.approx(2.0 * math.exp(-1.0), abs=1e-2)


def test_linear_width_matches_closed_form():
    # degenerate initial box, no disturbance: width follows the flow within
    # a discretization allowance of 10*dt
    sys, _ = scalar_decay()
    dt = 0.01
    traj = integrate(sys, IdentityRefiner(), EmbeddingState([1.0], [1.5]),
                     t_final=2.0, dt=dt, method="rk4")
    for t, s in zip(traj.times, traj.states):
        width = s.hi[0] - s.lo[0]
        assert abs(width - 0.5 * math.exp(-t)) <= 10.0 * dt


def test_step_grid_hits_t_final_exactly():
    sys, _ = scalar_decay()
    traj = integrate(sys, IdentityRefiner(), EmbeddingState([0.0], [1.0]),
                     t_final=2.0 * math.pi, dt=0.01, method="euler")
    assert traj.times[-1] == pytest.approx(2.0 * math.pi, abs=1e-12)
    assert traj.stats.steps == 629  # 628 full steps plus a short closer


def test_stats_accounting_identity():
    m, g, y0, A = lifted_vdp()
    traj = integrate(g, SamplingRefiner(A), y0, t_final=0.1, dt=0.01, method="rk4")
    assert traj.stats.refinement_calls == traj.stats.steps * 4
    traj_e = integrate(g, SamplingRefiner(A), y0, t_final=0.1, dt=0.01, method="euler")
    assert traj_e.stats.refinement_calls == traj_e.stats.steps


@pytest.mark.filterwarnings("ignore:overflow encountered")
def test_step_failure_on_overflow():
    sys = DynamicsSystem(n=1, p=0, q=0, outputs=(PowI(StateVar(0), 2),))
    y0 = EmbeddingState([1e200], [2e200])
    with pytest.raises(StepFailure) as err:
        integrate(sys, IdentityRefiner(), y0, t_final=1.0, dt=0.5, method="euler")
    assert err.value.component == 0


def test_collapse_clamp_flags_step():
    # a huge step on contracting dynamics inverts the endpoints; the
    # integrator clamps to the midpoint and keeps going
    sys, _ = scalar_decay()
    traj = integrate(sys, IdentityRefiner(), EmbeddingState([1.0], [1.0 + 1e-9]),
                     t_final=3.0, dt=1.5, method="euler")
    assert traj.stats.collapsed_steps > 0
    assert np.all(traj.states[-1].lo <= traj.states[-1].hi)


def test_refinement_ordering_lifts_to_trajectories():
    m, g, y0, A = lifted_vdp(l=4)
    t_final, dt = 1.0, 0.01
    tubes = {}
    for name, ref in (
        ("none", IdentityRefiner()),
        ("sampling", SamplingRefiner(A)),
        ("lp", LpRefiner(m.lift)),
    ):
        tubes[name] = integrate(g, ref, y0, t_final=t_final, dt=dt, method="rk4")
    for k in range(len(tubes["none"].times)):
        lo_n, hi_n = tubes["none"].states[k].lo, tubes["none"].states[k].hi
        lo_s, hi_s = tubes["sampling"].states[k].lo, tubes["sampling"].states[k].hi
        lo_l, hi_l = tubes["lp"].states[k].lo, tubes["lp"].states[k].hi
        assert np.all(lo_n - 1e-8 <= lo_s) and np.all(hi_s <= hi_n + 1e-8)
        assert np.all(lo_s - 1e-8 <= lo_l) and np.all(hi_l <= hi_s + 1e-8)


def test_added_auxiliary_row_tightens_tube():
    # nested liftings H1 = [H0; h]: base-state bounds shrink at every step
    mu = 1.0
    base = vanderpol(l=2, mu=mu)
    H0 = np.asarray(base.lift.H)
    h = np.array([[math.cos(0.4 * math.pi), math.sin(0.4 * math.pi)]])
    lift1 = make_lifting(np.vstack([H0, h]))
    sys = base.sys
    s = 5
    t_final, dt = 1.5, 0.01
    runs = {}
    for tag, lift in (("H0", base.lift), ("H1", lift1)):
        g = build_lifted(sys, lift)
        y0b = interval_hull_matvec(lift.H, base.x0box)
        A = subspace_sample_matrix(lift, s)
        runs[tag] = integrate(g, SamplingRefiner(A), EmbeddingState(y0b.lo, y0b.hi),
                              t_final=t_final, dt=dt, method="rk4")
    for k in range(len(runs["H0"].times)):
        s0 = runs["H0"].states[k]
        s1 = runs["H1"].states[k]
        assert np.all(s1.lo[:2] >= s0.lo[:2] - 1e-8)
        assert np.all(s1.hi[:2] <= s0.hi[:2] + 1e-8)


def test_post_step_refine_is_sound_and_tighter():
    m, g, y0, A = lifted_vdp(l=2)
    plain = integrate(g, SamplingRefiner(A), y0, t_final=1.0, dt=0.01, method="rk4")
    post = integrate(g, SamplingRefiner(A), y0, t_final=1.0, dt=0.01, method="rk4",
                     post_step_refine=True)
    assert bound_size(post.final, 2) <= bound_size(plain.final, 2) + 1e-9
    rep = monte_carlo_validate(m.sys, m.lift, post, m.x0box, trials=50, seed=1)
    assert rep.max_violation <= 1e-6


# --- schedules ---------------------------------------------------------------

def test_box_schedule_zero_order_hold():
    sched = BoxSchedule(
        times=np.array([0.0, 1.0, 2.0]),
        lo=np.array([[0.0], [1.0], [2.0]]),
        hi=np.array([[0.5], [1.5], [2.5]]),
    )
    assert sched.box_at(0.0) == Box([0.0], [0.5])
    assert sched.box_at(0.99) == Box([0.0], [0.5])
    assert sched.box_at(1.0) == Box([1.0], [1.5])
    assert sched.box_at(5.0) == Box([2.0], [2.5])
    assert sched.box_at(-1.0) == Box([0.0], [0.5])


def test_box_schedule_validation():
    with pytest.raises(ValueError):
        BoxSchedule(times=np.array([0.0, 0.0]), lo=np.zeros((2, 1)), hi=np.ones((2, 1)))


def test_scheduled_disturbance_drives_bounds():
    # x' = w with w pinned to 1 for t<1 then to -1: bounds ramp up then down
    sys = DynamicsSystem(n=1, p=1, q=0, outputs=(DistVar(0),))
    sched = BoxSchedule(
        times=np.array([0.0, 1.0]),
        lo=np.array([[1.0], [-1.0]]),
        hi=np.array([[1.0], [-1.0]]),
    )
    traj = integrate(sys, IdentityRefiner(), EmbeddingState([0.0], [0.0]),
                     wbox=sched, t_final=2.0, dt=0.01, method="euler")
    mid = traj.states[100]
    assert mid.lo[0] == pytest.approx(1.0, abs=1e-9)
    assert traj.states[-1].lo[0] == pytest.approx(0.0, abs=1e-9)


# --- bound size ---------------------------------------------------------------

def test_bound_size_modes():
    s = EmbeddingState([0.0, 0.0, 1.0], [1.0, 2.0, 1.5])
    assert bound_size(s, 2, "base") == pytest.approx(3.0)
    assert bound_size(s, mode="lifted") == pytest.approx(3.5)
    assert bound_size(EmbeddingState([1.0], [1.0]), 1) == 0.0
    with pytest.raises(ValueError):
        bound_size(s, mode="base")
    with pytest.raises(ValueError):
        bound_size(s, 1, mode="weird")


# --- Monte-Carlo validation ---------------------------------------------------

def test_validate_zero_trials_empty_report():
    sys, lift = scalar_decay()
    traj = integrate(sys, IdentityRefiner(), EmbeddingState([1.0], [2.0]),
                     t_final=0.5, dt=0.1, method="euler")
    rep = monte_carlo_validate(sys, lift, traj, Box([1.0], [2.0]), trials=0, seed=0)
    assert rep.trials == 0 and rep.max_violation == 0.0


def test_validate_linear_exact_faces():
    sys, lift = scalar_decay()
    traj = integrate(sys, IdentityRefiner(), EmbeddingState([1.0], [2.0]),
                     t_final=1.0, dt=0.01, method="rk4")
    rep = monte_carlo_validate(sys, lift, traj, Box([1.0], [2.0]), trials=100, seed=3)
    assert rep.max_violation <= 1e-6


def test_validate_vanderpol_tube():
    m, g, y0, A = lifted_vdp(l=4)
    traj = integrate(g, SamplingRefiner(A), y0, t_final=1.0, dt=0.01, method="rk4")
    rep = monte_carlo_validate(m.sys, m.lift, traj, m.x0box, trials=100, seed=5)
    assert rep.max_violation <= 1e-6
    assert rep.per_component.shape == (m.lift.m,)


def test_validate_rejection_sampling_without_x0box():
    m, g, y0, A = lifted_vdp(l=2)
    traj = integrate(g, SamplingRefiner(A), y0, t_final=0.3, dt=0.01, method="rk4")
    rep = monte_carlo_validate(m.sys, m.lift, traj, None, trials=50, seed=6)
    assert rep.max_violation <= 1e-6


def test_validate_deterministic_in_seed():
    m, g, y0, A = lifted_vdp(l=2)
    traj = integrate(g, SamplingRefiner(A), y0, t_final=0.2, dt=0.01, method="rk4")
    r1 = monte_carlo_validate(m.sys, m.lift, traj, m.x0box, trials=20, seed=9)
    r2 = monte_carlo_validate(m.sys, m.lift, traj, m.x0box, trials=20, seed=9)
    r3 = monte_carlo_validate(m.sys, m.lift, traj, m.x0box, trials=20, seed=10)
    assert np.array_equal(r1.per_component, r2.per_component)
    assert not np.array_equal(r1.per_component, r3.per_component)


def test_every_model_every_operator_is_sound():
    # short-horizon sweep: each benchmark system under each operator stays
    # sound against 100 sampled trajectories (horizons trimmed so the LP
    # sweep stays fast; the full-length runs live in the acceptance suite)
    from liftreach.models import enzyme, platoon

    cases = [
        (vanderpol(l=2), 0.5, "rk4"),
        (enzyme(), 0.005, "rk4"),
        (platoon(P=1), 0.3, "euler"),
    ]
    for spec, t_final, method in cases:
        g = build_lifted(spec.sys, spec.lift, spec.invariant_aux)
        y0b = interval_hull_matvec(spec.lift.H, spec.x0box)
        y0 = EmbeddingState(y0b.lo, y0b.hi)
        A = subspace_sample_matrix(spec.lift, 10)
        for refiner in (IdentityRefiner(), SamplingRefiner(A), LpRefiner(spec.lift)):
            traj = integrate(g, refiner, y0, wbox=spec.wbox, thetabox=spec.thetabox,
                             t_final=t_final, dt=spec.dt, method=method)
            rep = monte_carlo_validate(
                spec.sys, spec.lift, traj, spec.x0box,
                wbox=spec.wbox, thetabox=spec.thetabox,
                trials=100, seed=17, method=method,
            )
            assert rep.max_violation <= 1e-6, (spec.name, refiner.label)


# --- export -------------------------------------------------------------------

def test_trajectory_csv_format(tmp_path):
    sys, _ = scalar_decay()
    traj = integrate(sys, IdentityRefiner(), EmbeddingState([1.0], [2.0]),
                     t_final=0.2, dt=0.1, method="euler")
    path = tmp_path / "trajectory.csv"
    trajectory_to_csv(traj, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "t,y_lo_1,y_hi_1"
    assert len(lines) == len(traj.times) + 1
    t, lo, hi = (float(v) for v in lines[-1].split(","))
    assert t == traj.times[-1] and lo == traj.states[-1].lo[0]
