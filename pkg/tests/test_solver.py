import numpy as np
import pytest

from msym import dynamics as dyn, fiber as fb, fields as fl, gauge as ga, lie_core as lc, \
    solver as sv
from tests.test_dynamics import random_state
from tests.test_fields import make_geom
from tests.test_gauge import random_gauge_element


def u1_geom(shape=(8, 8), trunc=2):
    return make_geom(group="U1", trunc=trunc, shape=shape)


def su2_geom(shape=(6, 6), trunc=1):
    return make_geom(group="SU2", trunc=trunc, shape=shape)


def generic_state(geom, rng, scale=0.3):
    n, r, M = geom.base.n, geom.algebra.r, geom.basis.n_modes
    tail = geom.base.shape + (M,)
    conn = fl.ConnectionField(geom, rng.normal(scale=scale, size=(n, r) + tail))
    p = fl.MomentumField(geom, rng.normal(scale=scale, size=(len(geom.pairs), r) + tail),
                         rng.normal(scale=scale, size=(n, r, r) + tail))
    return conn, p


# ---------------------------------------------------------------------------
# the least-squares machinery
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("group", ["U1", "SU2"])
def test_jvp_exact_for_quadratic_residual(group):
    geom = u1_geom((4, 4)) if group == "U1" else su2_geom((4, 4))
    prob = sv.HvdwLeastSquares(geom)
    rng = np.random.default_rng(0)
    conn, p = generic_state(geom, rng)
    u = prob.pack(conn, p)
    du = rng.normal(size=prob.n_state)
    h = 0.5  # residuals are quadratic: central differences are exact at any h
    fd = (prob.residual(u + h * du) - prob.residual(u - h * du)) / (2 * h)
    jv = prob.jvp(u, du)
    assert np.max(np.abs(fd - jv)) <= 1e-9 * max(1.0, np.max(np.abs(jv)))


@pytest.mark.parametrize("group", ["U1", "SU2"])
def test_vjp_is_adjoint_of_jvp(group):
    geom = u1_geom((4, 4)) if group == "U1" else su2_geom((4, 4))
    prob = sv.HvdwLeastSquares(geom)
    rng = np.random.default_rng(1)
    conn, p = generic_state(geom, rng)
    u = prob.pack(conn, p)
    for _ in range(5):
        du = rng.normal(size=prob.n_state)
        v = rng.normal(size=prob.n_res)
        lhs = float(prob.jvp(u, du) @ v)
        rhs = float(du @ prob.vjp(u, v))
        assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), abs(rhs), 1.0)


def test_vjp_adjoint_with_frame_gamma():
    # the synthetic constant-Gamma path: formula-level consistency of the
    # Gamma couplings in residuals, JVP, and VJP
    gam = np.zeros((2, 2, 2))
    gam[0, 0, 1] = 0.3
    gam[1, 0, 0] = -0.3
    geom = make_geom(group="U1", trunc=2, shape=(4, 4), gamma=gam)
    prob = sv.HvdwLeastSquares(geom)
    rng = np.random.default_rng(2)
    conn, p = generic_state(geom, rng)
    u = prob.pack(conn, p)
    du = rng.normal(size=prob.n_state)
    v = rng.normal(size=prob.n_res)
    h = 0.5
    fd = (prob.residual(u + h * du) - prob.residual(u - h * du)) / (2 * h)
    assert np.max(np.abs(fd - prob.jvp(u, du))) <= 1e-9
    lhs = float(prob.jvp(u, du) @ v)
    rhs = float(du @ prob.vjp(u, v))
    assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), abs(rhs), 1.0)


def test_gradient_matches_objective_fd():
    # descent-direction consistency: VJP gradient vs finite differences of the
    # objective, cross-validated to 1e-8
    geom = su2_geom((4, 4))
    prob = sv.HvdwLeastSquares(geom)
    rng = np.random.default_rng(3)
    conn, p = generic_state(geom, rng)
    u = prob.pack(conn, p)
    grad = prob.gradient(u)
    for _ in range(5):
        d = rng.normal(size=prob.n_state)
        d /= np.linalg.norm(d)
        # the objective is an exact quartic along t, so the 4th-order stencil
        # at a large step is exact up to roundoff (no cancellation noise)
        h = 0.05
        fd = (8 * (prob.objective(u + h * d) - prob.objective(u - h * d))
              - (prob.objective(u + 2 * h * d) - prob.objective(u - 2 * h * d))) / (12 * h)
        assert abs(fd - grad @ d) <= 1e-8 * max(1.0, abs(fd))


def test_solver_guards():
    geom_lorentz = make_geom(group="U1", trunc=2, shape=(4, 4), metric=(1.0, -1.0))
    with pytest.raises(ValueError, match="Euclidean"):
        sv.HvdwLeastSquares(geom_lorentz)
    base = fl.BaseManifoldSpec(n=2, shape=(4, 4), dx=(1.0, 1.0))
    geom = fl.Geometry(base, lc.u1(), fb.get_basis("U1", 2))
    geom.algebra = lc.aff1()
    with pytest.raises(ValueError, match="unimodular"):
        sv.HvdwLeastSquares(geom)
    with pytest.raises(ValueError):
        sv.SolveOptions(tol=-1.0)
    with pytest.raises(ValueError):
        sv.SolveOptions(method="annealing")


# ---------------------------------------------------------------------------
# solving
# ---------------------------------------------------------------------------

def test_flat_state_converges_immediately():
    geom = u1_geom()
    rep = sv.solve_hvdw(fl.ConnectionField.zero(geom), fl.MomentumField.zero(geom))
    assert rep.converged
    assert len(rep.iterations) == 1
    assert rep.iterations[0]["total"] == 0.0


def test_monotone_residual_decrease():
    geom = u1_geom((8, 8))
    rng = np.random.default_rng(4)
    conn, p = sv.initial_state(geom, rng, {"kmax": 1, "amplitude": 0.3,
                                           "fiber_amplitude": 0.1, "paj_amplitude": 0.1})
    rep = sv.solve_hvdw(conn, p, sv.SolveOptions(max_iter=8, tol=1e-12))
    totals = [e["total"] for e in rep.iterations if e.get("accepted", True)]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(totals, totals[1:]))


def test_u1_sine_initial_converges_to_yang_mills():
    # initial A2 = sin(x1) with Legendre momentum flows to a flat/harmonic
    # abelian connection with tiny Yang-Mills residual
    geom = make_geom(group="U1", trunc=2, shape=(16, 16))
    x1 = np.arange(16) * geom.base.dx[0]
    A = np.zeros((2, 1) + geom.base.shape)
    A[1, 0] = np.sin(x1)[:, None]
    conn = fl.equivariant_embed(geom, A)
    p = dyn.legendre_momentum(fl.curvature(conn))
    rep = sv.solve_hvdw(conn, p, sv.SolveOptions(max_iter=40, tol=1e-8))
    assert rep.converged, rep.message
    A_final = fl.extract_base_field(rep.conn)
    ym = dyn.yang_mills_residual(geom, A_final)
    assert np.sqrt(np.sum(ym**2) * geom.base.cell_volume) <= 1e-6
    # abelian periodic YM solutions are flat: the curvature must vanish
    F = fl.curvature(rep.conn)
    assert np.sqrt(np.sum(F.f_ab**2) * geom.base.cell_volume) <= 1e-6


def test_su2_perturbed_equivariant_recovers_equivariance():
    geom = su2_geom((6, 6))
    rng = np.random.default_rng(5)
    conn, p = sv.initial_state(geom, rng, {"kmax": 1, "amplitude": 0.2,
                                           "fiber_amplitude": 0.1, "paj_amplitude": 0.1})
    E0 = fl.equivariance_defect(conn)
    assert np.sqrt(np.sum(E0**2) * geom.base.cell_volume) > 1e-3  # genuinely off
    rep = sv.solve_hvdw(conn, p, sv.SolveOptions(max_iter=60, tol=1e-8))
    assert rep.converged, rep.message
    assert rep.final["defect"] <= 1e-6


def test_gradient_flow_descends():
    geom = u1_geom((6, 6))
    rng = np.random.default_rng(6)
    conn, p = sv.initial_state(geom, rng, {"kmax": 1, "amplitude": 0.2,
                                           "fiber_amplitude": 0.05, "paj_amplitude": 0.05})
    opts = sv.SolveOptions(method="gradient-flow", max_iter=25, tol=1e-12)
    rep = sv.solve_hvdw(conn, p, opts)
    totals = [e["total"] for e in rep.iterations]
    assert totals[-1] < 0.2 * totals[0]


def test_gauge_consistency_of_converged_state():
    # solutions map to solutions: residual norms move by <= 1e-9 under a
    # random gauge transform of a converged state
    geom = make_geom(group="SU2", trunc=1, shape=(16, 16))
    rng = np.random.default_rng(7)
    conn, p = sv.initial_state(geom, rng, {"kmax": 1, "amplitude": 0.15,
                                           "fiber_amplitude": 0.05, "paj_amplitude": 0.0})
    rep = sv.solve_hvdw(conn, p, sv.SolveOptions(max_iter=60, tol=1e-9))
    assert rep.converged, rep.message
    f = random_gauge_element(geom, rng, kmax=1, amp=0.02)
    conn2, p2 = ga.gauge_transform(rep.conn, rep.p, f, strict=False)
    before = dyn.hvdw_residuals(rep.conn, rep.p).norms()["total_l2"]
    after = dyn.hvdw_residuals(conn2, p2).norms()["total_l2"]
    assert abs(before - after) <= 1e-9


# ---------------------------------------------------------------------------
# the experiment wrapper
# ---------------------------------------------------------------------------

def test_experiment_zero_amplitude_trivial():
    geom = u1_geom((8, 8))
    out = sv.emergent_equivariance_experiment(
        geom, seeds=[0, 1],
        recipe={"kmax": 1, "amplitude": 0.0, "fiber_amplitude": 0.0, "paj_amplitude": 0.0},
    )
    assert out["summary"]["n_converged"] == 2
    for run in out["runs"]:
        assert run["final_defect"] == 0.0
        assert run["ym_residual_l2"] == 0.0


def test_experiment_u1_small_batch():
    geom = make_geom(group="U1", trunc=2, shape=(8, 8))
    out = sv.emergent_equivariance_experiment(
        geom, seeds=[0, 1],
        recipe={"kmax": 1, "amplitude": 0.2, "fiber_amplitude": 0.1, "paj_amplitude": 0.1},
        opts=sv.SolveOptions(max_iter=40, tol=1e-8),
    )
    assert out["summary"]["convergence_rate"] == 1.0
    for run in out["runs"]:
        assert run["final_defect"] <= 1e-6
        assert run["ym_residual_l2"] <= 1e-6
        assert run["fiber_divergence_avg_linf"] <= 1e-14
        assert run["initial_defect"] > 1e-3


def test_experiment_refuses_non_unimodular():
    base = fl.BaseManifoldSpec(n=2, shape=(4, 4), dx=(1.0, 1.0))
    geom = fl.Geometry(base, lc.u1(), fb.get_basis("U1", 2))
    geom.algebra = lc.aff1()
    with pytest.raises(ValueError, match="unimodular"):
        sv.emergent_equivariance_experiment(geom, seeds=[0])


def test_experiment_deterministic():
    geom = u1_geom((6, 6))
    kw = dict(seeds=[3], recipe={"kmax": 1, "amplitude": 0.15, "fiber_amplitude": 0.05,
                                 "paj_amplitude": 0.05},
              opts=sv.SolveOptions(max_iter=10, tol=1e-10))
    out1 = sv.emergent_equivariance_experiment(geom, **kw)
    out2 = sv.emergent_equivariance_experiment(geom, **kw)
    assert out1 == out2
