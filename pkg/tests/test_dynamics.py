import numpy as np
import pytest

from msym import dynamics as dyn, fiber as fb, fields as fl, lie_core as lc
from tests.test_fields import make_geom, random_base_field


def random_state(geom, rng, kmax=1, amp=0.4, equivariant=True, paj_amp=0.4):
    """A state (conn, p) with band-limited fields; equivariant by default."""
    A = random_base_field(geom, rng, kmax=kmax, amp=amp)
    conn = fl.equivariant_embed(geom, A)
    p = dyn.legendre_momentum(fl.curvature(conn))
    if paj_amp:
        n, r = geom.base.n, geom.algebra.r
        W = rng.normal(scale=paj_amp, size=(n, r, r) + geom.base.shape)
        # equivariant-profile p^{aj}_i = h_il M^l_k(g) W^{ajk}(x)
        hM = np.einsum("il,lkm->ikm", geom.algebra.h, geom.adjoint_coeffs)
        paj = np.einsum("ikm,ajk...->aji...m", hM, W)
        p = fl.MomentumField(geom, p.p_ab, paj)
    return conn, p


def random_directions(geom, rng, scale=1.0):
    n, r, P = geom.base.n, geom.algebra.r, len(geom.pairs)
    tail = geom.base.shape + (geom.basis.n_modes,)
    return (
        rng.normal(scale=scale, size=(n, r) + tail),
        rng.normal(scale=scale, size=(P, r) + tail),
        rng.normal(scale=scale, size=(n, r, r) + tail),
    )


# ---------------------------------------------------------------------------
# Legendre transform and densities
# ---------------------------------------------------------------------------

def test_legendre_momentum_zero_and_scaling():
    geom = make_geom(group="U1", trunc=2, shape=(8, 8))
    F0 = fl.curvature(fl.ConnectionField.zero(geom))
    p0 = dyn.legendre_momentum(F0)
    assert np.max(np.abs(p0.p_ab)) == 0.0 and np.max(np.abs(p0.p_aj)) == 0.0


def test_legendre_momentum_identity_metric_su2():
    # Euclidean frame, h = id: F_12 = t3 gives p^{12} = component 3
    geom = make_geom(group="SU2", trunc=1, shape=(4, 4))
    f_ab = np.zeros((1, 3) + geom.base.shape + (geom.basis.n_modes,))
    f_ab[0, 2, :, :, 0] = 1.0
    p = dyn.legendre_momentum(fl.CurvatureField(geom, f_ab))
    assert np.max(np.abs(p.p_ab - f_ab)) == 0.0
    # h = 2 id scales p by 2
    geom2 = fl.Geometry(geom.base, lc.su2(h=2 * np.eye(3)), geom.basis)
    p2 = dyn.legendre_momentum(fl.CurvatureField(geom2, f_ab))
    assert np.max(np.abs(p2.p_ab - 2 * f_ab)) == 0.0


def test_hamiltonian_density_values():
    geom = make_geom(group="SU2", trunc=1, shape=(4, 4))
    eps = np.full(geom.base.shape, 0.7)
    p = fl.MomentumField.zero(geom)
    H = dyn.hamiltonian_density(geom, eps, p)
    assert np.max(np.abs(H[..., 0] - 0.7)) < 1e-14
    assert np.max(np.abs(H[..., 1:])) == 0.0
    # p^{12}_3 = 1, identity metrics: H = eps - 1/2
    p_ab = np.zeros_like(p.p_ab)
    p_ab[0, 2, :, :, 0] = 1.0
    p1 = fl.MomentumField(geom, p_ab, p.p_aj)
    H1 = dyn.hamiltonian_density(geom, eps, p1)
    assert np.max(np.abs(H1[..., 0] - 0.2)) < 1e-14


def test_hamiltonian_brute_force_index_sum():
    # oracle: the full 1/4 g g h p p sum over all four indices
    geom = make_geom(group="SU2", trunc=1, shape=(2, 2), metric=(1.0, -2.0))
    rng = np.random.default_rng(0)
    conn, p = random_state(geom, rng)
    H = dyn.hamiltonian_density(geom, np.zeros(geom.base.shape), p)
    pfull = p.full_ab()
    acc = np.zeros(geom.base.shape + (geom.basis.n_modes,))
    gd = geom.gdiag
    hinv = geom.algebra.h_inv
    T = geom.T
    for a in range(2):
        for b in range(2):
            s = gd[a] * gd[b]
            hp = np.einsum("ij,j...->i...", hinv, pfull[a, b])
            acc = acc + 0.25 * s * np.einsum("gac,i...a,i...c->...g", T, hp, pfull[a, b])
    assert np.max(np.abs(H + acc)) < 1e-12


def test_epsilon_from_level_set_closure():
    rng = np.random.default_rng(1)
    for group, trunc in [("U1", 2), ("SU2", 1)]:
        geom = make_geom(group=group, trunc=trunc, shape=(4, 4))
        conn, p = random_state(geom, rng)
        eps = dyn.epsilon_from_level_set(geom, p)
        H = dyn.hamiltonian_density(geom, eps, p)
        assert np.max(np.abs(H)) <= 1e-13


def test_lagrangian_matches_minus_quarter_F_squared():
    # Legendre closure: L(eta, legendre_momentum) = -1/4 |F|^2 pointwise;
    # |F|^2 computed by an independent index-sum oracle
    rng = np.random.default_rng(2)
    geom = make_geom(group="SU2", trunc=1, shape=(8, 8))
    for _ in range(5):
        A = random_base_field(geom, rng, kmax=1, amp=0.6)
        conn = fl.equivariant_embed(geom, A)
        F = fl.curvature(conn)
        p = dyn.legendre_momentum(F)
        L = dyn.lagrangian_density(conn, p)
        # oracle: |F|^2 = g^ac g^bd h_ij F^i_ab F^j_cd = 2 sum_{a<b} h(F_ab, F_ab)
        Fsq = np.zeros(geom.base.shape + (geom.basis.n_modes,))
        for k, (a, b) in enumerate(geom.pairs):
            hF = np.einsum("ij,j...->i...", geom.algebra.h, F.f_ab[k])
            Fsq = Fsq + 2 * geom.ginv[a] * geom.ginv[b] * np.einsum(
                "gac,i...a,i...c->...g", geom.T, hF, F.f_ab[k])
        assert np.max(np.abs(L + 0.25 * Fsq)) < 1e-12


def test_lagrangian_su2_constant_field_value():
    # A1 = t1, A2 = t2 constant: L = -1/2 with h = id, Euclidean metric
    geom = make_geom(group="SU2", trunc=1, shape=(4, 4), dx=(1.0, 1.0))
    A = np.zeros((2, 3) + geom.base.shape)
    A[0, 0] = 1.0
    A[1, 1] = 1.0
    conn = fl.equivariant_embed(geom, A)
    p = dyn.legendre_momentum(fl.curvature(conn))
    L = dyn.lagrangian_density(conn, p)
    haarL = geom.haar(L)
    assert np.max(np.abs(haarL + 0.5)) < 1e-12


def test_lagrangian_defect_coupling_linearity():
    # non-equivariant eta: L picks up exactly p^{aj} . E_{aj}
    geom = make_geom(group="U1", trunc=2, shape=(4, 4))
    rng = np.random.default_rng(3)
    conn0, p = random_state(geom, rng, paj_amp=0.8)
    eta = conn0.eta.copy()
    bump = rng.normal(size=geom.basis.n_modes)
    eta[0, 0] += bump
    conn = fl.ConnectionField(geom, eta)
    L0 = dyn.lagrangian_density(conn, fl.MomentumField(geom, p.p_ab, np.zeros_like(p.p_aj)))
    L1 = dyn.lagrangian_density(conn, p)
    E = fl.equivariance_defect(conn)
    expect = np.zeros_like(L0)
    for a in range(2):
        expect = expect + np.einsum("gac,...a,...c->...g", geom.T, p.p_aj[a, 0, 0], E[a, 0, 0])
    assert np.max(np.abs((L1 - L0) - expect)) < 1e-12


def test_action_zero_fields():
    geom = make_geom(group="U1", trunc=2, shape=(4, 4))
    assert dyn.action(fl.ConnectionField.zero(geom), fl.MomentumField.zero(geom)) == 0.0


def test_action_quadrature_oracle_u1():
    # lattice sum + Haar constant mode vs dense trapezoid quadrature on U1
    geom = make_geom(group="U1", trunc=2, shape=(8, 4))
    rng = np.random.default_rng(4)
    conn, p = random_state(geom, rng, kmax=1, amp=0.5, paj_amp=0.5)
    eta = conn.eta + rng.normal(scale=0.2, size=conn.eta.shape)
    conn = fl.ConnectionField(geom, eta)
    S = dyn.action(conn, p)
    L = dyn.lagrangian_density(conn, p)
    thetas = np.linspace(0, 2 * np.pi, 65)[:-1]
    modes = np.array([geom.basis.evaluate_modes(np.exp(1j * t)) for t in thetas])
    dense = np.einsum("...m,tm->...t", L, modes).mean(axis=-1)
    S_quad = np.sum(dense) * geom.base.cell_volume
    assert abs(S - S_quad) < 1e-10


# ---------------------------------------------------------------------------
# legendre_W
# ---------------------------------------------------------------------------

def test_legendre_W_stationarity_on_correspondence():
    rng = np.random.default_rng(5)
    geom = make_geom(group="SU2", trunc=1, shape=(4, 4))
    conn, p = random_state(geom, rng, paj_amp=0.0)
    lam = fl.JetField.of_connection(conn)
    W, stat = dyn.legendre_W(conn, lam, p, e=np.zeros(geom.base.shape))
    assert np.max(np.abs(stat)) < 1e-11


def test_legendre_W_trivial_zero():
    geom = make_geom(group="U1", trunc=2, shape=(4, 4))
    conn = fl.ConnectionField.zero(geom)
    lam = fl.JetField.of_connection(conn)
    W, stat = dyn.legendre_W(conn, lam, fl.MomentumField.zero(geom), e=np.zeros(geom.base.shape))
    assert np.max(np.abs(W)) == 0.0
    assert np.max(np.abs(stat)) == 0.0


def test_legendre_W_equals_hamiltonian_chain():
    # on the correspondence, W = e - 1/4|p|^2 - 1/2 p eta (Gamma - Gamma)
    #                          + 1/2 p [eta,eta] + p^{aj} [eta_a, t_j]
    rng = np.random.default_rng(6)
    geom = make_geom(group="SU2", trunc=1, shape=(4, 4))
    conn, p = random_state(geom, rng, paj_amp=0.7)
    lam = fl.JetField.of_connection(conn)
    e = rng.normal(size=geom.base.shape)
    W, stat = dyn.legendre_W(conn, lam, p, e=e)
    assert np.max(np.abs(stat)) < 1e-11
    expect = -dyn._quarter_pp(geom, p)
    expect[..., 0] += e
    pfull = p.full_ab()
    for a in range(2):
        for b in range(2):
            br = geom.bracket(conn.eta[a], conn.eta[b])
            expect = expect + 0.5 * dyn._duality_pair(geom, pfull[a, b], br)
        for j in range(3):
            br = -geom.const_bracket(j, conn.eta[a])  # [eta_a, t_j]
            expect = expect + dyn._duality_pair(geom, p.p_aj[a, j], br)
    assert np.max(np.abs(W - expect)) < 1e-11


# ---------------------------------------------------------------------------
# HVDW residuals
# ---------------------------------------------------------------------------

def test_residuals_zero_state():
    geom = make_geom(group="SU2", trunc=1, shape=(4, 4))
    R = dyn.hvdw_residuals(fl.ConnectionField.zero(geom), fl.MomentumField.zero(geom))
    assert R.norms()["total_l2"] == 0.0
    assert np.max(R.levelset) == 0.0


def test_legendre_closure_r1_zero():
    rng = np.random.default_rng(7)
    for group, trunc in [("U1", 2), ("SU2", 1)]:
        geom = make_geom(group=group, trunc=trunc, shape=(8, 8))
        conn, p = random_state(geom, rng)
        R = dyn.hvdw_residuals(conn, p)
        assert np.max(np.abs(R.r1)) < 1e-12
        assert np.max(np.abs(R.r2)) < 1e-12  # equivariant embed


def test_r2_is_equivariance_defect_bitwise():
    geom = make_geom(group="SU2", trunc=1, shape=(4, 4))
    rng = np.random.default_rng(8)
    eta = rng.normal(size=(2, 3) + geom.base.shape + (geom.basis.n_modes,))
    conn = fl.ConnectionField(geom, eta)
    R = dyn.hvdw_residuals(conn, fl.MomentumField.zero(geom))
    assert np.array_equal(R.r2, fl.equivariance_defect(conn))


def test_r3_reduces_to_yang_mills_on_shell():
    # equivariant eta, Legendre p, p^{aj} = 0: h^* R3 conjugates to the
    # classical Yang-Mills residual of the base field
    rng = np.random.default_rng(9)
    geom = make_geom(group="SU2", trunc=1, shape=(8, 8))
    A = random_base_field(geom, rng, kmax=1, amp=0.5)
    conn = fl.equivariant_embed(geom, A)
    p = dyn.legendre_momentum(fl.curvature(conn))
    R = dyn.hvdw_residuals(conn, p)
    ym = dyn.yang_mills_residual(geom, A)
    # g^{-1} (YM residual) g = h^* R3, so compare after embedding the base YM
    # residual equivariantly
    embed_ym = fl.equivariant_embed(geom, ym).eta
    hR3 = np.einsum("ij,aj...->ai...", geom.algebra.h_inv, R.r3)
    assert np.max(np.abs(hR3 - embed_ym)) < 1e-10


def test_r3_u1_sine_matches_finite_difference():
    # A2 = sin(x1): R3^2 = d_1 p^{21} = sin(x1) with identity metric
    geom = make_geom(group="U1", trunc=2, shape=(32, 8))
    x1 = np.arange(32) * geom.base.dx[0]
    A = np.zeros((2, 1) + geom.base.shape)
    A[1, 0] = np.sin(x1)[:, None]
    conn = fl.equivariant_embed(geom, A)
    p = dyn.legendre_momentum(fl.curvature(conn))
    R = dyn.hvdw_residuals(conn, p)
    assert np.max(np.abs(R.r3[0])) < 1e-12
    expect = np.sin(x1)[:, None]
    assert np.max(np.abs(R.r3[1, 0, :, :, 0] - expect)) < 1e-10
    # FD oracle site by site: R3^2 = d_1 p^{21} = -d_1 F_01
    geom_fd = make_geom(group="U1", trunc=2, shape=(32, 8), scheme="central-2")
    conn_fd = fl.equivariant_embed(geom_fd, A)
    p_fd = dyn.legendre_momentum(fl.curvature(conn_fd))
    R_fd = dyn.hvdw_residuals(conn_fd, p_fd)
    F01 = (np.roll(A[1, 0], -1, 0) - np.roll(A[1, 0], 1, 0)) / (2 * geom.base.dx[0])
    dF = (np.roll(F01, -1, 0) - np.roll(F01, 1, 0)) / (2 * geom.base.dx[0])
    assert np.max(np.abs(R_fd.r3[1, 0, :, :, 0] + dF)) < 1e-10


def test_yang_mills_residual_basics():
    geom = make_geom(group="SU2", trunc=1, shape=(4, 4))
    A0 = np.zeros((2, 3) + geom.base.shape)
    assert np.max(np.abs(dyn.yang_mills_residual(geom, A0))) == 0.0
    # constant abelian direction: F = 0, residual 0
    A0[0, 2] = 0.9
    assert np.max(np.abs(dyn.yang_mills_residual(geom, A0))) < 1e-13


def test_yang_mills_residual_su2_constant_matrix_oracle():
    # A1 = t1, A2 = t2 constant: residual^a = [A_b, [A_a, A_b]] summed
    geom = make_geom(group="SU2", trunc=1, shape=(4, 4))
    spec = geom.algebra
    A = np.zeros((2, 3) + geom.base.shape)
    A[0, 0] = 1.0
    A[1, 1] = 1.0
    res = dyn.yang_mills_residual(geom, A)
    t = [np.eye(3)[i] for i in range(3)]
    Avec = [t[0], t[1]]
    for a in range(2):
        expect = np.zeros(3)
        for b in range(2):
            F_ab = lc.bracket(spec, Avec[a], Avec[b])
            expect += lc.bracket(spec, Avec[b], F_ab)
        assert np.max(np.abs(res[a, :, 0, 0] - expect)) < 1e-12
    assert np.max(np.abs(res[0, :, 0, 0] - np.array([1.0, 0, 0]))) < 1e-12


def test_residual_norms_report_shape():
    geom = make_geom(group="U1", trunc=2, shape=(4, 4))
    rng = np.random.default_rng(10)
    conn, p = random_state(geom, rng)
    doc = dyn.hvdw_residuals(conn, p).norms()
    assert set(doc) == {"r1", "r2", "r3", "levelset", "total_l2"}
    assert doc["r1"]["l2"] < 1e-12


# ---------------------------------------------------------------------------
# first variation: the end-to-end validation of the sign dictionary
# ---------------------------------------------------------------------------

def test_first_variation_zero_direction():
    geom = make_geom(group="U1", trunc=2, shape=(4, 4))
    rng = np.random.default_rng(11)
    conn, p = random_state(geom, rng)
    z = np.zeros_like(conn.eta), np.zeros_like(p.p_ab), np.zeros_like(p.p_aj)
    rep = dyn.first_variation_check(conn, p, *z)
    assert rep["pairing"] == 0.0 and rep["fd@h"] == 0.0


@pytest.mark.parametrize("group,trunc", [("U1", 2), ("SU2", 1)])
def test_first_variation_random_states(group, trunc):
    rng = np.random.default_rng(12)
    geom = make_geom(group=group, trunc=trunc, shape=(6, 6))
    for _ in range(5):
        conn, p = random_state(geom, rng, paj_amp=0.5)
        # fully generic state: add non-equivariant noise everywhere
        conn = fl.ConnectionField(geom, conn.eta + rng.normal(scale=0.3, size=conn.eta.shape))
        p = fl.MomentumField(geom, p.p_ab + rng.normal(scale=0.3, size=p.p_ab.shape),
                             p.p_aj + rng.normal(scale=0.3, size=p.p_aj.shape))
        d = random_directions(geom, rng)
        rep = dyn.first_variation_check(conn, p, *d, h_step=1e-4)
        assert rep["rel_err@h"] <= 1e-6, rep
        if group == "SU2":
            # the action is cubic: exact O(h^2) truncation error
            assert 2.5 < rep["richardson_ratio"] < 6.0
        else:
            # abelian action is quadratic: central differences are exact,
            # both errors sit at float-noise level
            assert rep["rel_err@h"] <= 1e-9 and rep["rel_err@h/2"] <= 1e-9


def test_first_variation_scaling_in_h():
    geom = make_geom(group="SU2", trunc=1, shape=(4, 4))
    rng = np.random.default_rng(13)
    conn, p = random_state(geom, rng, paj_amp=0.5)
    conn = fl.ConnectionField(geom, conn.eta + rng.normal(scale=0.3, size=conn.eta.shape))
    d = random_directions(geom, rng)
    rep = dyn.first_variation_check(conn, p, *d, h_step=1e-3)
    assert 3.5 < rep["richardson_ratio"] < 4.5  # the action is cubic: exact h^2 error


# ---------------------------------------------------------------------------
# theta dual evaluation
# ---------------------------------------------------------------------------

def random_theta_inputs(rng, spec, n):
    r = spec.r
    eta = rng.normal(size=(n, r))
    p_raw = rng.normal(size=(n, n, r))
    p_ab = p_raw - p_raw.transpose(1, 0, 2)
    p_aj = rng.normal(size=(n, r, r))
    state = {"eta": eta, "p_ab": p_ab, "p_aj": p_aj, "eps": rng.normal()}
    vectors = [
        {"base": rng.normal(size=n + r), "eta_dot": rng.normal(size=(n, r))}
        for _ in range(n + r)
    ]
    return state, vectors


def test_theta_zero_velocities():
    spec = lc.su2()
    rng = np.random.default_rng(14)
    state, _ = random_theta_inputs(rng, spec, 2)
    vectors = [{"base": np.zeros(5), "eta_dot": np.zeros((2, 3))} for _ in range(5)]
    s = dyn.theta_eval(spec, 2, state, vectors)
    assert s.value_simple == 0.0 and s.value_structured == 0.0


def test_theta_pure_volume_velocities():
    # velocities spanning the frame with no eta_dot: only the eps/e term survives
    spec = lc.su2()
    rng = np.random.default_rng(15)
    state, _ = random_theta_inputs(rng, spec, 2)
    state["p_ab"] = np.zeros((2, 2, 3))
    state["p_aj"] = np.zeros((2, 3, 3))
    vectors = [{"base": np.eye(5)[k], "eta_dot": np.zeros((2, 3))} for k in range(5)]
    s = dyn.theta_eval(spec, 2, state, vectors)
    # with p = 0 the coordinate change is trivial: both equal eps
    assert abs(s.value_simple - state["eps"]) < 1e-13
    assert s.defect < 1e-13


def test_theta_dual_formulas_agree_su2():
    spec = lc.su2()
    rng = np.random.default_rng(16)
    worst = 0.0
    for _ in range(200):
        state, vectors = random_theta_inputs(rng, spec, 2)
        s = dyn.theta_eval(spec, 2, state, vectors)
        scale = max(1.0, abs(s.value_simple))
        worst = max(worst, s.defect / scale)
    assert worst <= 1e-10


def test_theta_dual_formulas_agree_with_frame_gamma():
    spec = lc.su2()
    rng = np.random.default_rng(17)
    n = 2
    gam = np.zeros((n, n, n))
    gam[0, 0, 1] = 0.3
    gam[1, 0, 0] = -0.3
    gam[0, 1, 1] = -0.2
    gam[1, 1, 0] = 0.2
    for _ in range(50):
        state, vectors = random_theta_inputs(rng, spec, n)
        s = dyn.theta_eval(spec, n, state, vectors, gamma=gam)
        assert s.defect <= 1e-10 * max(1.0, abs(s.value_simple))


def test_theta_rejects_symmetric_p():
    spec = lc.u1()
    state = {"eta": np.zeros((2, 1)), "p_ab": np.ones((2, 2, 1)),
             "p_aj": np.zeros((2, 1, 1)), "eps": 0.0}
    with pytest.raises(ValueError):
        dyn.theta_eval(spec, 2, state, [])
