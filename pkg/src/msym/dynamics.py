"""Densities and residual systems of the multisymplectic Yang-Mills model.

Sign and pairing dictionary
---------------------------
Fixed here once and validated end to end by :func:`first_variation_check`
(no other convention is hidden elsewhere).  With the Lagrangian density

    L = 1/4 h^{ij} p^{ab}_i p_{ab j}                    (full a,b sums)
        - 1/2 p^{ab}_i F^i_{ab}(eta)
        + p^{aj}_i E^i_{aj}(eta),

    F_ab = (nabla_a eta)_b - (nabla_b eta)_a + [eta_a, eta_b],
    E_aj = rho_j(eta_a) + [t_j, eta_a],

and the action S = cellvol * sum_x Haar(L), the first variation in the stored
(pairwise a < b) coordinates is

    dS = cellvol * sum_x Haar( - R3^a_i  d eta^i_a
                               - sum_{a<b} R1^i_ab  d p^{ab}_i
                               + R2^i_aj  d p^{aj}_i ),

where (R1, R2, R3) are the residuals of the first-order Hamiltonian system

    R1_ab  = F_ab - h^*(p_ab),
    R2_aj  = E_aj,
    R3^a   = p^{ab}_{;b} - ad*_{eta_b}(p^{ab})
             + p^{aj}_{;j} - ad*_{t_j}(p^{aj}) - tr(ad_{t_j}) p^{aj}.

Truncation convention: in the Galerkin-truncated fiber basis, ad*_X is the
exact adjoint of the truncated bracket (see Geometry.ad_star), which makes the
identity above exact for the discrete action, not just to truncation order.

The level-set defect is the Hamiltonian density H = eps - 1/4 |p|^2 evaluated
pointwise; the solver always eliminates eps through H = 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import ConnectionField, CurvatureField, Geometry, JetField, MomentumField, \
    curvature, equivariance_defect
from .lie_core import LieAlgebraSpec

__all__ = [
    "ResidualBundle",
    "ThetaSample",
    "legendre_momentum",
    "legendre_W",
    "hamiltonian_density",
    "epsilon_from_level_set",
    "lagrangian_density",
    "action",
    "hvdw_residuals",
    "yang_mills_residual",
    "theta_eval",
    "residual_pairing",
    "first_variation_check",
]


# ---------------------------------------------------------------------------
# Legendre transform and scalar densities
# ---------------------------------------------------------------------------

def legendre_momentum(F: CurvatureField) -> MomentumField:
    """p^{ab}_i = h_ij g^{ac} g^{bd} F^j_cd; the p^{aj} block is zero."""
    g = F.geom
    p_ab = np.empty_like(F.f_ab)
    for k, (a, b) in enumerate(g.pairs):
        s = g.ginv[a] * g.ginv[b]
        p_ab[k] = s * np.einsum("ij,j...->i...", g.algebra.h, F.f_ab[k])
    n, r = g.base.n, g.algebra.r
    p_aj = np.zeros((n, r, r) + g.base.shape + (g.basis.n_modes,))
    return MomentumField(g, p_ab, p_aj)


def _quarter_pp(geom: Geometry, p: MomentumField) -> np.ndarray:
    """1/4 h^{ij} p^{ab}_i p_{ab j} as a fiber-valued lattice field (full sums)."""
    acc = 0.0
    for k, (a, b) in enumerate(geom.pairs):
        s = geom.gdiag[a] * geom.gdiag[b]
        hp = np.einsum("ij,j...->i...", geom.algebra.h_inv, p.p_ab[k])
        prod = np.einsum("gac,i...a,i...c->...g", geom.T, hp, p.p_ab[k], optimize=True)
        acc = acc + 0.5 * s * prod
    return acc


def hamiltonian_density(geom: Geometry, eps, p: MomentumField) -> np.ndarray:
    """H = eps - 1/4 h^{ij} g_ac g_bd p^{ab}_i p^{cd}_j, pointwise on P.

    Returns fiber-valued coefficients (*shape, M); `eps` may be a lattice
    scalar (promoted to the constant fiber mode) or fiber-valued."""
    out = -_quarter_pp(geom, p)
    eps = np.asarray(eps, dtype=float)
    if eps.ndim == len(geom.base.shape):
        out[..., 0] += eps
    else:
        out = out + eps
    return out


def epsilon_from_level_set(geom: Geometry, p: MomentumField) -> np.ndarray:
    """eps with H(eps, p) = 0: eps = 1/4 h^{ij} p^{ab}_i p_{ab j}."""
    return _quarter_pp(geom, p)


def _duality_pair(geom: Geometry, P_low, X_up) -> np.ndarray:
    """<P, X> = P_i X^i with the pointwise fiber product; leading r axes."""
    return np.einsum("gac,i...a,i...c->...g", geom.T, P_low, X_up, optimize=True)


def lagrangian_density(conn: ConnectionField, p: MomentumField) -> np.ndarray:
    """The first-order Lagrangian density (module docstring), (*shape, M)."""
    g = conn.geom
    out = _quarter_pp(g, p)
    F = curvature(conn)
    for k in range(len(g.pairs)):
        out = out - _duality_pair(g, p.p_ab[k], F.f_ab[k])  # -1/2 * full sum
    E = equivariance_defect(conn)  # (n, r_j, r_i, ...)
    for a in range(g.base.n):
        for j in range(g.algebra.r):
            out = out + _duality_pair(g, p.p_aj[a, j], E[a, j])
    return out


def action(conn: ConnectionField, p: MomentumField) -> float:
    """S = cellvol * sum_x Haar(L); the Haar volume is 1."""
    g = conn.geom
    return g.integral(g.haar(lagrangian_density(conn, p)))


def legendre_W(conn: ConnectionField, lam: JetField, p: MomentumField, e):
    """The fiberwise Legendre function W and the stationarity residual.

    W = e + p^{ab}_i (lam^i_{a;b} + eta^i_c Gamma^c_ba) + p^{aj}_i [eta_a, t_j]^i
        - L_YM(eta, lam),
    with L_YM = -1/4 g^{ac} g^{bd} h_ij F^i_ab F^j_cd and
    F_ab = lam_{b;a} - lam_{a;b} + [eta_a, eta_b].

    Returns (W, stationarity) where stationarity^{ab}_i = p^{ab}_i -
    dL/dlam^i_{a;b}; it vanishes exactly on the Legendre correspondence."""
    g = conn.geom
    n, r = g.base.n, g.algebra.r
    eta = conn.eta
    # curvature from the jet (lam_ab[b, a] = lambda_{a;b})
    Ffull = np.zeros((n, n, r) + g.base.shape + (g.basis.n_modes,))
    for a in range(n):
        for b in range(n):
            Ffull[a, b] = lam.lam_ab[a, b] - lam.lam_ab[b, a] + g.bracket(eta[a], eta[b])
    lym = 0.0
    for a in range(n):
        for b in range(n):
            s = g.ginv[a] * g.ginv[b]
            hF = np.einsum("ij,j...->i...", g.algebra.h, Ffull[a, b])
            lym = lym - 0.25 * s * _duality_pair(g, hF, Ffull[a, b])
    pfull = p.full_ab()
    W = -lym
    eps_arr = np.asarray(e, dtype=float)
    if eps_arr.ndim == len(g.base.shape):
        W = W.copy()
        W[..., 0] += eps_arr
    else:
        W = W + eps_arr
    gam = g.base.gamma
    for a in range(n):
        for b in range(n):
            slot = lam.lam_ab[b, a]  # lambda_{a;b}
            if gam.any():
                slot = slot + np.einsum("c,c...->...", gam[:, b, a], eta)  # + eta^i_c Gamma^c_ba
            W = W + _duality_pair(g, pfull[a, b], slot)
    for a in range(n):
        for j in range(r):
            # [eta_a, t_j] = -[t_j, eta_a]
            W = W - _duality_pair(g, p.p_aj[a, j], g.const_bracket(j, eta[a]))
    # stationarity: p^{ab}_i - h_ij g^{aa} g^{bb} F^j_ab on pairs
    stat = np.empty_like(p.p_ab)
    for k, (a, b) in enumerate(g.pairs):
        s = g.ginv[a] * g.ginv[b]
        stat[k] = p.p_ab[k] - s * np.einsum("ij,j...->i...", g.algebra.h, Ffull[a, b])
    return W, stat


# ---------------------------------------------------------------------------
# residual systems
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ResidualBundle:
    """The three HVDW residual fields plus the level-set defect of H.

    r1: (P, r, *shape, M) on pairs a < b (antisymmetric continuation implied);
    r2: (n, r_j, r_i, *shape, M); r3: (n, r, *shape, M);
    levelset: (*shape,) per-site fiber L2 norm of the Hamiltonian density."""

    geom: Geometry
    r1: np.ndarray
    r2: np.ndarray
    r3: np.ndarray
    levelset: np.ndarray

    def norms(self) -> dict:
        """Physical L2/Linf norms; R1 counts both (a,b) orderings."""
        g = self.geom
        cv = g.base.cell_volume
        out = {}
        for name, arr, mult in [("r1", self.r1, 2.0), ("r2", self.r2, 1.0), ("r3", self.r3, 1.0)]:
            out[name] = {
                "l2": float(np.sqrt(mult * np.sum(arr**2) * cv)),
                "linf": float(np.max(np.abs(arr), initial=0.0)),
            }
        out["levelset"] = {
            "l2": float(np.sqrt(np.sum(self.levelset**2) * cv)),
            "linf": float(np.max(np.abs(self.levelset), initial=0.0)),
        }
        out["total_l2"] = float(
            np.sqrt(sum(out[k]["l2"] ** 2 for k in ("r1", "r2", "r3")))
        )
        return out


def hvdw_residuals(conn: ConnectionField, p: MomentumField, eps=None) -> ResidualBundle:
    """Residuals of the first-order system (module docstring).

    `eps` defaults to the level-set value, making the level-set defect vanish
    identically; pass a free eps to probe off-shell states."""
    g = conn.geom
    n, r = g.base.n, g.algebra.r
    F = curvature(conn)
    r1 = np.empty_like(F.f_ab)
    for k, (a, b) in enumerate(g.pairs):
        s = g.gdiag[a] * g.gdiag[b]
        r1[k] = F.f_ab[k] - s * np.einsum("ij,j...->i...", g.algebra.h_inv, p.p_ab[k])
    r2 = equivariance_defect(conn)
    pfull = p.full_ab()
    gam = g.base.gamma
    r3 = np.zeros((n, r) + g.base.shape + (g.basis.n_modes,))
    tr = g.algebra.trace_ad
    for a in range(n):
        acc = np.zeros((r,) + g.base.shape + (g.basis.n_modes,))
        for b in range(n):
            # covariant divergence p^{ab}_{;b} and the coadjoint transport
            acc = acc + g.deriv(pfull[a, b], b)
            acc = acc - g.ad_star(conn.eta[b], pfull[a, b])
        if gam.any():
            for b in range(n):
                for d in range(n):
                    acc = acc + gam[a, b, d] * pfull[d, b] + gam[b, b, d] * pfull[a, d]
        for j in range(r):
            acc = acc + g.rho(p.p_aj[a, j], j)
            acc = acc - g.ad_star_const(j, p.p_aj[a, j])
            acc = acc - tr[j] * p.p_aj[a, j]
        r3[a] = acc
    if eps is None:
        eps = epsilon_from_level_set(g, p)
    H = hamiltonian_density(g, eps, p)
    levelset = np.sqrt(np.sum(H**2, axis=-1))
    return ResidualBundle(g, r1, r2, r3, levelset)


def yang_mills_residual(geom: Geometry, A: np.ndarray) -> np.ndarray:
    """Classical Yang-Mills residual Phi^{ab}_{;b} + [A_b, Phi^{ab}] for a
    fiber-independent gauge field A of shape (n, r, *shape)."""
    g = geom
    A = np.asarray(A, dtype=float)
    n, r = g.base.n, g.algebra.r
    want = (n, r) + g.base.shape
    if A.shape != want:
        raise ValueError(f"base field must have shape {want}, got {A.shape}")
    gam = g.base.gamma
    dA = np.stack([g.deriv(A[..., None], a)[..., 0] for a in range(n)])  # dA[a, b] = d_a A_b
    F = np.zeros((n, n, r) + g.base.shape)
    for a in range(n):
        for b in range(n):
            F[a, b] = dA[a, b] - dA[b, a] + np.einsum("kij,i...,j...->k...", g.algebra.c, A[a], A[b])
            if gam.any():
                F[a, b] -= np.einsum("c,c...->...", gam[:, a, b] - gam[:, b, a], A)
    phi = np.einsum("a,b,ab...->ab...", g.ginv, g.ginv, F)
    res = np.zeros((n, r) + g.base.shape)
    for a in range(n):
        for b in range(n):
            res[a] += g.deriv(phi[a, b][..., None], b)[..., 0]
            res[a] += np.einsum("kij,i...,j...->k...", g.algebra.c, A[b], phi[a, b])
            if gam.any():
                for d in range(n):
                    res[a] += gam[a, b, d] * phi[d, b] + gam[b, b, d] * phi[a, d]
    return res


# ---------------------------------------------------------------------------
# Poincare-Cartan evaluation (pointwise, two formulas)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ThetaSample:
    """theta evaluated on one tangent tuple via both formulas; |a - b| is the
    Proposition-1 equivalence defect."""

    value_simple: float      # formula A: e b^g + p dEta ^ beta_b ^ gamma + ...
    value_structured: float  # formula B: eps b^g + p_i ^ (dEta + eta^eta)^i

    @property
    def defect(self) -> float:
        return abs(self.value_simple - self.value_structured)


def _det_eval(one_forms, vectors) -> float:
    """Evaluate a decomposable (n+r)-form (list of callables) on vectors."""
    m = np.array([[f(v) for v in vectors] for f in one_forms])
    return float(np.linalg.det(m))


def theta_eval(spec: LieAlgebraSpec, n: int, state: dict, vectors: list,
               gamma=None) -> ThetaSample:
    """Pointwise dual evaluation of the Poincare-Cartan form.

    `state`: {"eta": (n, r), "p_ab": (n, n) antisymmetric-valued (n, n, r),
    "p_aj": (n, r, r), "eps": float}.  `vectors`: n+r tangent tuples, each
    {"base": (n+r,), "eta_dot": (n, r)} (momentum and eps velocities do not
    enter theta).  The two formulas live in different fiber coordinates
    (e vs eps); the change of coordinates is applied internally so both
    describe the same geometric object."""
    r = spec.r
    eta = np.asarray(state["eta"], dtype=float)
    p_full = np.asarray(state["p_ab"], dtype=float)  # (n, n, r), antisymmetric
    w = np.asarray(state["p_aj"], dtype=float)
    eps = float(state["eps"])
    gam = np.zeros((n, n, n)) if gamma is None else np.asarray(gamma, dtype=float)
    if np.max(np.abs(p_full + p_full.transpose(1, 0, 2)), initial=0.0) > 1e-12:
        raise ValueError("p_ab must be antisymmetric in (a, b)")

    def beta(a):
        return lambda v: v["base"][a]

    def gamma_i(i):
        return lambda v: v["base"][n + i]

    def deta(a, i):
        return lambda v: v["eta_dot"][a, i]

    def const(x):
        return lambda v: x

    betas = [beta(a) for a in range(n)]
    gammas = [gamma_i(i) for i in range(r)]

    bracket_ab = np.einsum("kij,ai,bj->abk", spec.c, eta, eta)
    bracket_tj = -np.einsum("kji,ai->ajk", spec.c, eta)  # [eta_a, t_j]^k = -c^k_ji eta^i_a

    # coordinate change: e in terms of eps (paper section 2.3 inverted)
    e_val = eps
    e_val += 0.5 * np.einsum("abi,ic,cab->", p_full, eta.T, gam - gam.transpose(0, 2, 1))
    e_val -= 0.5 * np.einsum("abi,abi->", p_full, bracket_ab)
    e_val -= np.einsum("aji,aji->", w, bracket_tj)

    terms_a = [(e_val, betas + gammas)]
    for a in range(n):
        for b in range(n):
            for i in range(r):
                if p_full[a, b, i] == 0.0:
                    continue
                forms = [deta(a, i)] + [betas[c] for c in range(n) if c != b] + gammas
                sign = (-1.0) ** b
                terms_a.append((p_full[a, b, i] * sign, forms))
    for a in range(n):
        for j in range(r):
            for i in range(r):
                if w[a, j, i] == 0.0:
                    continue
                forms = [deta(a, i)] + betas + [gammas[k] for k in range(r) if k != j]
                sign = (-1.0) ** (n + j)
                terms_a.append((w[a, j, i] * sign, forms))
    val_a = sum(c * _det_eval(fs, vectors) for c, fs in terms_a)

    # formula B: eps beta^gamma + p_i ^ (d eta + eta ^ eta)^i
    # (d eta + eta^eta)^i = deta^i_a ^ beta^a
    #    + (1/2 [eta_a,eta_b]^i - eta^i_c Gamma^c_ab) beta^a beta^b
    #    + [eta_a, t_j]^i beta^a gamma^j            (full sums)
    two_form = {}  # (i) -> list of (coeff, [f1, f2])
    for i in range(r):
        lst = []
        for a in range(n):
            lst.append((1.0, [deta(a, i), betas[a]]))
            for b in range(n):
                coeff = 0.5 * bracket_ab[a, b, i] - float(np.dot(eta[:, i], gam[:, a, b]))
                if coeff:
                    lst.append((coeff, [betas[a], betas[b]]))
            for j in range(r):
                if bracket_tj[a, j, i]:
                    lst.append((bracket_tj[a, j, i], [betas[a], gammas[j]]))
        two_form[i] = lst

    terms_b = [(eps, betas + gammas)]
    for i in range(r):
        # p_i = -1/2 p^{ab}_i beta_ab ^ gamma + (-1)^n p^{aj}_i beta_a ^ gamma_j
        pi_terms = []
        for a in range(n):
            for b in range(n):
                if p_full[a, b, i] == 0.0:
                    continue
                rest = [betas[c] for c in range(n) if c not in (a, b)]
                # beta_ab = e_b . (e_a . beta): signs from the two interior products
                if a == b:
                    continue
                sign = _interior2_sign(n, a, b)
                pi_terms.append((-0.5 * p_full[a, b, i] * sign, rest + gammas))
            for j in range(r):
                if w[a, j, i] == 0.0:
                    continue
                sign = (-1.0) ** n * (-1.0) ** a * (-1.0) ** j
                rest_b = [betas[c] for c in range(n) if c != a]
                rest_g = [gammas[k] for k in range(r) if k != j]
                pi_terms.append((w[a, j, i] * sign, rest_b + rest_g))
        for cp, fp in pi_terms:
            for ch, fh in two_form[i]:
                terms_b.append((cp * ch, fp + fh))
    val_b = sum(c * _det_eval(fs, vectors) for c, fs in terms_b)
    return ThetaSample(value_simple=val_a, value_structured=val_b)


def _interior2_sign(n: int, a: int, b: int) -> float:
    """Sign s with e_b . (e_a . (beta^0 ^ .. ^ beta^{n-1})) = s * (beta without a, b)."""
    order = [a, b] + [c for c in range(n) if c not in (a, b)]
    inv = 0
    for i in range(n):
        for j in range(i + 1, n):
            if order[i] > order[j]:
                inv += 1
    return float((-1) ** inv)


# ---------------------------------------------------------------------------
# first variation
# ---------------------------------------------------------------------------

def residual_pairing(R: ResidualBundle, d_eta, d_pab, d_paj) -> float:
    """<R, direction> in the sign dictionary of the module docstring."""
    g = R.geom
    val = -np.sum(R.r3 * d_eta) - np.sum(R.r1 * d_pab) + np.sum(R.r2 * d_paj)
    return float(val * g.base.cell_volume)


def first_variation_check(conn: ConnectionField, p: MomentumField, d_eta, d_pab, d_paj,
                          h_step: float = 1e-5) -> dict:
    """Central-difference check that dS equals the residual pairing.

    Returns the FD value at h and h/2, the pairing, relative errors, and the
    Richardson ratio err(h)/err(h/2) (which is ~4 for this cubic action)."""
    g = conn.geom
    d_eta = np.asarray(d_eta, dtype=float)
    d_pab = np.asarray(d_pab, dtype=float)
    d_paj = np.asarray(d_paj, dtype=float)

    def S(t):
        c2 = ConnectionField(g, conn.eta + t * d_eta)
        p2 = MomentumField(g, p.p_ab + t * d_pab, p.p_aj + t * d_paj)
        return action(c2, p2)

    pairing = residual_pairing(hvdw_residuals(conn, p), d_eta, d_pab, d_paj)
    out = {"pairing": pairing}
    for tag, h in [("h", h_step), ("h/2", h_step / 2)]:
        fd = (S(h) - S(-h)) / (2 * h)
        out[f"fd@{tag}"] = fd
        out[f"abs_err@{tag}"] = abs(fd - pairing)
        out[f"rel_err@{tag}"] = abs(fd - pairing) / max(abs(pairing), 1e-30)
    out["richardson_ratio"] = out["abs_err@h"] / max(out["abs_err@h/2"], 1e-300)
    return out
