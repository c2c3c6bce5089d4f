"""Nonlinear least-squares solution of the first-order Hamiltonian system and
the emergent-equivariance experiment.

The action is a saddle in the momenta, so the solver minimizes the stacked
squared L2 norm of the residual bundle (R1 doubled for the pair storage)
instead of descending the action.  eps is eliminated through the level set
H = 0 throughout.  Gauge drift along the two symmetry groups is controlled by
soft penalty residuals (the Lorenz-type slice on eta and the fiber-co-closed
slice on p^{aj}, weight 0.1 by default); penalties are reported separately and
never enter the convergence criterion.

Residuals are quadratic polynomials in the state, so the hand-coded
Jacobian-vector products are exact; their adjoints are verified by
dot-product identities in the tests.  Gauss-Newton steps solve the damped
normal equations matrix-free with LSMR; a gradient-flow method shares the
same VJP code path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, lsmr

from . import dynamics as dyn
from .fields import ConnectionField, Geometry, MomentumField, curvature, \
    equivariance_defect, extract_base_field, fiber_divergence_average
from .gauge import gauge_fixing_residuals, phi_from_momenta

__all__ = [
    "SolveOptions",
    "SolveReport",
    "HvdwLeastSquares",
    "solve_hvdw",
    "emergent_equivariance_experiment",
]


@dataclass(frozen=True)
class SolveOptions:
    method: str = "gauss-newton"      # or "gradient-flow"
    max_iter: int = 60
    tol: float = 1e-8                 # physical L2 of (R1, R2, R3)
    penalty_weight: float = 0.1
    lsmr_maxiter: int = 400
    lsmr_atol: float = 1e-10
    lm_lambda: float = 1e-4           # initial Levenberg damping
    max_backtracks: int = 10
    grad_step: float = 0.5            # initial gradient-flow step
    seed: int = 0

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tolerance must be positive")
        if self.method not in ("gauss-newton", "gradient-flow"):
            raise ValueError(f"unknown method {self.method!r}")


@dataclass
class SolveReport:
    converged: bool
    iterations: list
    conn: ConnectionField
    p: MomentumField
    message: str = ""

    @property
    def final(self) -> dict:
        return self.iterations[-1] if self.iterations else {}


class HvdwLeastSquares:
    """The stacked residual map, its exact JVP and the adjoint VJP.

    State vector u = [eta, p_ab, p_aj] flattened; residual vector
    [sqrt(2) R1, R2, R3, w_pen * Lorenz, w_pen * dual-fix], all scaled by
    sqrt(cell volume) so plain 2-norms are the physical L2 norms.
    """

    def __init__(self, geom: Geometry, penalty_weight: float = 0.1):
        if not geom.base.is_euclidean:
            raise ValueError("the least-squares solver requires Euclidean signature")
        if not geom.algebra.is_unimodular():
            raise ValueError("the solver requires a compact (unimodular) fiber")
        self.geom = geom
        self.w_pen = float(penalty_weight)
        g = geom
        n, r, M = g.base.n, g.algebra.r, g.basis.n_modes
        shape = g.base.shape
        self.shapes = {
            "eta": (n, r) + shape + (M,),
            "p_ab": (len(g.pairs), r) + shape + (M,),
            "p_aj": (n, r, r) + shape + (M,),
        }
        self.sizes = {k: int(np.prod(v)) for k, v in self.shapes.items()}
        self.n_state = sum(self.sizes.values())
        self.sqcv = float(np.sqrt(g.base.cell_volume))
        self._res_blocks = ["r1", "r2", "r3", "lorenz"]
        self.res_shapes = {
            "r1": self.shapes["p_ab"],
            "r2": (n, r, r) + shape + (M,),
            "r3": (n, r) + shape + (M,),
            "lorenz": (r,) + shape,
        }
        if g.basis.group == "SU2" and self.w_pen:
            self._res_blocks.append("dualfix")
            self.res_shapes["dualfix"] = (n, 3, r) + shape + (M,)
            self._dual_mat = self._build_dual_matrix()
        self.res_sizes = {k: int(np.prod(v)) for k, v in self.res_shapes.items()}
        self.n_res = sum(self.res_sizes[k] for k in self._res_blocks)
        self.weights = {"r1": np.sqrt(2.0) * self.sqcv, "r2": self.sqcv, "r3": self.sqcv,
                        "lorenz": self.w_pen * self.sqcv,
                        "dualfix": self.w_pen * self.sqcv}
        # site-independent linear operators on flattened (component, mode) data:
        # the equivariance defect E(X)[j,i,g] = rho_j[g,m] X[i,m] + c^i_jk X[k,g]
        rho = g.basis.rho
        c = g.algebra.c
        eye_r = np.eye(r)
        eye_m = np.eye(M)
        e_mat = (np.einsum("ik,jgm->jigkm", eye_r, rho)
                 + np.einsum("ijk,gm->jigkm", c, eye_m))
        self._e_mat = e_mat.reshape(r * r * M, r * M)
        # the R3 p^{aj} part: V(w)[i,g] = sum_j (rho_j[g,m] w[j,i,m]
        #   - c^k_ji w[j,k,g] - tr_j w[j,i,g])
        tr = g.algebra.trace_ad
        v_mat = (np.einsum("ik,jgm->igjkm", eye_r, rho)
                 - np.einsum("kji,gm->igjkm", c, eye_m)
                 - np.einsum("j,ik,gm->igjkm", tr, eye_r, eye_m))
        self._w_mat = v_mat.reshape(r * M, r * r * M)

    # -- packing ------------------------------------------------------------

    def pack(self, conn: ConnectionField, p: MomentumField) -> np.ndarray:
        return np.concatenate([conn.eta.ravel(), p.p_ab.ravel(), p.p_aj.ravel()])

    def unpack(self, u: np.ndarray):
        i0 = self.sizes["eta"]
        i1 = i0 + self.sizes["p_ab"]
        eta = u[:i0].reshape(self.shapes["eta"])
        p_ab = u[i0:i1].reshape(self.shapes["p_ab"])
        p_aj = u[i1:].reshape(self.shapes["p_aj"])
        return ConnectionField(self.geom, eta), MomentumField(self.geom, p_ab, p_aj)

    def _stack(self, blocks: dict) -> np.ndarray:
        return np.concatenate(
            [self.weights[k] * blocks[k].ravel() for k in self._res_blocks]
        )

    def _split(self, v: np.ndarray) -> dict:
        out = {}
        pos = 0
        for k in self._res_blocks:
            size = self.res_sizes[k]
            out[k] = (self.weights[k] * v[pos:pos + size]).reshape(self.res_shapes[k])
            pos += size
        return out

    # -- the dual-fix penalty as a site-independent dense matrix -------------

    def _build_dual_matrix(self) -> np.ndarray:
        """Matrix of p^{aj} (per fixed a) -> fiber codifferential of Phi."""
        g = self.geom
        r, M = g.algebra.r, g.basis.n_modes
        dim_in = r * r * M
        probe_geom = g
        K = np.empty((3 * r * M, dim_in))
        eye = np.eye(dim_in)
        one_site = (1,) * g.base.n
        for col in range(dim_in):
            w = eye[col].reshape((1, r, r) + (1,) * g.base.n + (M,))
            w = np.broadcast_to(w, (1, r, r) + one_site + (M,))
            phi = _phi_single(probe_geom, w)
            dual = _codiff_single(probe_geom, phi)
            K[:, col] = dual.reshape(-1)
        return K

    # -- residuals ------------------------------------------------------------

    def residual_blocks(self, conn: ConnectionField, p: MomentumField) -> dict:
        R = dyn.hvdw_residuals(conn, p)
        fix = gauge_fixing_residuals(conn, p.p_aj if self.geom.basis.group == "SU2" else None)
        blocks = {"r1": R.r1, "r2": R.r2, "r3": R.r3, "lorenz": fix["lorenz"]}
        if "dualfix" in self._res_blocks:
            blocks["dualfix"] = fix["dual"]
        return blocks

    def residual(self, u: np.ndarray) -> np.ndarray:
        conn, p = self.unpack(u)
        return self._stack(self.residual_blocks(conn, p))

    def physical_norms(self, u: np.ndarray) -> dict:
        conn, p = self.unpack(u)
        R = dyn.hvdw_residuals(conn, p)
        out = R.norms()
        E = equivariance_defect(conn)
        out["defect_l2"] = float(np.sqrt(np.sum(E**2) * self.geom.base.cell_volume))
        out["action"] = dyn.action(conn, p)
        fix = gauge_fixing_residuals(conn, p.p_aj if self.geom.basis.group == "SU2" else None)
        pen = np.sum(fix["lorenz"] ** 2) * self.geom.base.cell_volume
        if fix["dual"] is not None:
            pen += np.sum(fix["dual"] ** 2) * self.geom.base.cell_volume
        out["penalty_l2"] = float(np.sqrt(pen))
        return out

    # -- flattening helpers ---------------------------------------------------

    @property
    def _rm(self) -> int:
        return self.geom.algebra.r * self.geom.basis.n_modes

    def _flat_rm(self, X: np.ndarray) -> np.ndarray:
        """(r, *shape, M) -> (S, r*M)."""
        return np.ascontiguousarray(np.moveaxis(X, 0, -2)).reshape(-1, self._rm)

    def _unflat_rm(self, F: np.ndarray) -> np.ndarray:
        g = self.geom
        arr = F.reshape(g.base.shape + (g.algebra.r, g.basis.n_modes))
        return np.moveaxis(arr, -2, 0)

    def _flat_rrm(self, X: np.ndarray) -> np.ndarray:
        """(r, r, *shape, M) -> (S, r*r*M) with row-major (first r, second r, mode)."""
        return np.ascontiguousarray(np.moveaxis(X, (0, 1), (-3, -2))).reshape(
            -1, self._rm * self.geom.algebra.r)

    def _unflat_rrm(self, F: np.ndarray) -> np.ndarray:
        g = self.geom
        r, M = g.algebra.r, g.basis.n_modes
        arr = F.reshape(g.base.shape + (r, r, M))
        return np.moveaxis(arr, (-3, -2), (0, 1))

    def _apply_e(self, deta_a: np.ndarray) -> np.ndarray:
        """Equivariance-defect operator on one eta component: -> (r_j, r_i, *shape, M)."""
        out = self._flat_rm(deta_a) @ self._e_mat.T
        return self._unflat_rrm(out)

    def _apply_e_adjoint(self, v_a: np.ndarray) -> np.ndarray:
        out = self._flat_rrm(v_a) @ self._e_mat
        return self._unflat_rm(out)

    def _apply_w(self, w_a: np.ndarray) -> np.ndarray:
        """R3 p^{aj} block on one a-slice (r_j, r_i, *shape, M) -> (r_i, *shape, M)."""
        out = self._flat_rrm(w_a) @ self._w_mat.T
        return self._unflat_rm(out)

    def _apply_w_adjoint(self, v_a: np.ndarray) -> np.ndarray:
        out = self._flat_rm(v_a) @ self._w_mat
        return self._unflat_rrm(out)

    # -- linearization ---------------------------------------------------------

    def linearize(self, u: np.ndarray) -> "Linearization":
        return Linearization(self, u)

    def jvp(self, u: np.ndarray, du: np.ndarray) -> np.ndarray:
        return self.linearize(u).jvp(du)

    def vjp(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        return self.linearize(u).vjp(v)

    def objective(self, u: np.ndarray) -> float:
        res = self.residual(u)
        return 0.5 * float(res @ res)

    def gradient(self, u: np.ndarray) -> np.ndarray:
        return self.vjp(u, self.residual(u))

    # -- penalty pieces ----------------------------------------------------------

    def _lorenz_forward(self, deta: np.ndarray) -> np.ndarray:
        g = self.geom
        div = np.zeros((g.algebra.r,) + g.base.shape + (g.basis.n_modes,))
        for a in range(g.base.n):
            div = div + g.ginv[a] * g.cov_deriv_eta(deta, a)[a]
        return np.einsum("jim,j...m->i...", g.adjoint_coeffs, div, optimize=True)

    def _lorenz_adjoint(self, v: np.ndarray) -> np.ndarray:
        g = self.geom
        V = np.einsum("jim,i...->j...m", g.adjoint_coeffs, v, optimize=True)
        out = np.zeros(self.shapes["eta"])
        gam = g.base.gamma
        for a in range(g.base.n):
            out[a] += -g.ginv[a] * g.deriv(V, a)
            if gam.any():
                for c in range(g.base.n):
                    out[c] += -g.ginv[a] * gam[c, a, a] * V
        return out

    def _dual_forward(self, p_aj: np.ndarray) -> np.ndarray:
        g = self.geom
        n, r, M = g.base.n, g.algebra.r, g.basis.n_modes
        # site-independent dense matrix: regroup to (n, sites, r*r*M)
        w = np.moveaxis(p_aj.reshape(n, r, r, -1, M), 3, 1)  # (n, S, r, r, M)
        w = w.reshape(n, -1, r * r * M)
        out = np.einsum("pq,nsq->nsp", self._dual_mat, w)
        out = np.moveaxis(out.reshape(n, -1, 3, r, M), 1, 3)
        return out.reshape(self.res_shapes["dualfix"])

    def _dual_adjoint(self, v: np.ndarray) -> np.ndarray:
        g = self.geom
        n, r, M = g.base.n, g.algebra.r, g.basis.n_modes
        vv = np.moveaxis(v.reshape(n, 3, r, -1, M), 3, 1).reshape(n, -1, 3 * r * M)
        out = np.einsum("pq,nsp->nsq", self._dual_mat, vv)
        out = np.moveaxis(out.reshape(n, -1, r, r, M), 1, 3)
        return out.reshape(self.shapes["p_aj"])

    def _cov_adjoint(self, vk: np.ndarray, a: int, b: int) -> np.ndarray:
        """Adjoint of d eta -> (nabla_a d eta)_b landing in the eta gradient."""
        g = self.geom
        out = np.zeros(self.shapes["eta"])
        out[b] = -g.deriv(vk, a)
        gam = g.base.gamma
        if gam.any():
            for c in range(g.base.n):
                out[c] += -gam[c, a, b] * vk
        return out


class Linearization:
    """The exact Jacobian of the residual map at a fixed state.

    The state-dependent bracket/coadjoint couplings are contracted against the
    fused bracket tensor once here, so each JVP/VJP application is a batch of
    per-site matmuls plus lattice derivatives -- cheap enough to sit inside a
    matrix-free LSMR loop."""

    def __init__(self, prob: HvdwLeastSquares, u: np.ndarray):
        self.prob = prob
        g = prob.geom
        B = g.fused_bracket
        conn, p = prob.unpack(u)
        self.eta = conn.eta
        self.pfull = p.full_ab()
        n = g.base.n
        flat = prob._flat_rm
        # tx[b][x, p, s] = B[p, q, s] eta_b[x, q]: bracket with fixed first arg
        # and coadjoint action of eta_b; ty[b][x, p, q] = B[p, q, s] eta_b[x, s]
        self.tx = [np.tensordot(flat(self.eta[b]), B, axes=([1], [1])) for b in range(n)]
        self.ty = [np.tensordot(flat(self.eta[b]), B, axes=([1], [2])) for b in range(n)]
        # tq[a][b][x, q, s] = B[p, q, s] pfull[a,b][x, p]
        self.tq = [
            [np.tensordot(flat(self.pfull[a, b]), B, axes=([1], [0])) for b in range(n)]
            for a in range(n)
        ]

    def jvp(self, du: np.ndarray) -> np.ndarray:
        prob = self.prob
        g = prob.geom
        n, r = g.base.n, g.algebra.r
        dconn, dp = prob.unpack(du)
        deta = dconn.eta
        dfull = dp.full_ab()
        flat, unflat = prob._flat_rm, prob._unflat_rm
        deta_f = [flat(deta[b]) for b in range(n)]
        jet_d = g.jet_of(deta)
        gam = g.base.gamma
        blocks = {}
        d_r1 = np.empty(prob.res_shapes["r1"])
        for k, (a, b) in enumerate(g.pairs):
            s = g.gdiag[a] * g.gdiag[b]
            br = np.einsum("xpq,xq->xp", self.ty[b], deta_f[a])
            br += np.einsum("xps,xs->xp", self.tx[a], deta_f[b])
            d_r1[k] = (jet_d[a, b] - jet_d[b, a] + unflat(br)
                       - s * np.einsum("ij,j...->i...", g.algebra.h_inv, dp.p_ab[k]))
        blocks["r1"] = d_r1
        blocks["r2"] = np.stack([prob._apply_e(deta[a]) for a in range(n)])
        d_r3 = np.empty(prob.res_shapes["r3"])
        for a in range(n):
            acc = np.zeros((r,) + g.base.shape + (g.basis.n_modes,))
            for b in range(n):
                acc += g.deriv(dfull[a, b], b)
                acc -= unflat(np.einsum("xqs,xq->xs", self.tq[a][b], deta_f[b]))
                acc -= unflat(np.einsum("xps,xp->xs", self.tx[b], flat(dfull[a, b])))
            if gam.any():
                for b in range(n):
                    for d in range(n):
                        acc += gam[a, b, d] * dfull[d, b] + gam[b, b, d] * dfull[a, d]
            acc += prob._apply_w(dp.p_aj[a])
            d_r3[a] = acc
        blocks["r3"] = d_r3
        blocks["lorenz"] = prob._lorenz_forward(deta)
        if "dualfix" in prob._res_blocks:
            blocks["dualfix"] = prob._dual_forward(dp.p_aj)
        return prob._stack(blocks)

    def vjp(self, v: np.ndarray) -> np.ndarray:
        prob = self.prob
        g = prob.geom
        n, r = g.base.n, g.algebra.r
        vb = prob._split(v)
        flat, unflat = prob._flat_rm, prob._unflat_rm
        gam = g.base.gamma
        g_eta = np.zeros(prob.shapes["eta"])
        g_qfull = np.zeros((n, n) + prob.shapes["p_ab"][1:])
        g_w = np.zeros(prob.shapes["p_aj"])
        for k, (a, b) in enumerate(g.pairs):
            vk = vb["r1"][k]
            vk_f = flat(vk)
            s = g.gdiag[a] * g.gdiag[b]
            g_eta += prob._cov_adjoint(vk, a, b)
            g_eta -= prob._cov_adjoint(vk, b, a)
            g_eta[a] += unflat(np.einsum("xpq,xp->xq", self.ty[b], vk_f))
            g_eta[b] += unflat(np.einsum("xps,xp->xs", self.tx[a], vk_f))
            g_qfull[a, b] += -s * np.einsum("ij,j...->i...", g.algebra.h_inv, vk)
        for a in range(n):
            g_eta[a] += prob._apply_e_adjoint(vb["r2"][a])
        for a in range(n):
            va = vb["r3"][a]
            va_f = flat(va)
            for b in range(n):
                g_qfull[a, b] += -g.deriv(va, b)
                g_eta[b] -= unflat(np.einsum("xqs,xs->xq", self.tq[a][b], va_f))
                g_qfull[a, b] -= unflat(np.einsum("xps,xs->xp", self.tx[b], va_f))
            if gam.any():
                for b in range(n):
                    for d in range(n):
                        g_qfull[d, b] += gam[a, b, d] * va
                        g_qfull[a, d] += gam[b, b, d] * va
            g_w[a] += prob._apply_w_adjoint(va)
        g_eta += prob._lorenz_adjoint(vb["lorenz"])
        if "dualfix" in prob._res_blocks:
            g_w += prob._dual_adjoint(vb["dualfix"])
        g_q = np.empty(prob.shapes["p_ab"])
        for k, (a, b) in enumerate(g.pairs):
            g_q[k] = g_qfull[a, b] - g_qfull[b, a]
        return np.concatenate([g_eta.ravel(), g_q.ravel(), g_w.ravel()])


def _phi_single(geom: Geometry, p_aj: np.ndarray) -> np.ndarray:
    return phi_from_momenta(geom, p_aj)


def _codiff_single(geom: Geometry, phi: np.ndarray) -> np.ndarray:
    from .gauge import _fiber_codifferential

    return _fiber_codifferential(geom, phi)


# ---------------------------------------------------------------------------
# outer iterations
# ---------------------------------------------------------------------------

def _trace_entry(prob: HvdwLeastSquares, u: np.ndarray, it: int, extra=None) -> dict:
    norms = prob.physical_norms(u)
    entry = {
        "iter": it,
        "total": norms["total_l2"],
        "r1": norms["r1"]["l2"],
        "r2": norms["r2"]["l2"],
        "r3": norms["r3"]["l2"],
        "defect": norms["defect_l2"],
        "penalty": norms["penalty_l2"],
        "action": norms["action"],
    }
    if extra:
        entry.update(extra)
    return entry


def solve_hvdw(conn: ConnectionField, p: MomentumField, opts: SolveOptions = SolveOptions()):
    """Minimize the stacked residual norm; converged iff total <= opts.tol.

    Non-convergence is reported through the trace, never raised."""
    prob = HvdwLeastSquares(conn.geom, opts.penalty_weight)
    u = prob.pack(conn, p)
    trace = [_trace_entry(prob, u, 0)]
    if trace[0]["total"] <= opts.tol:
        cc, pp = prob.unpack(u)
        return SolveReport(True, trace, cc, pp, "converged at the initial state")
    if opts.method == "gradient-flow":
        u, trace, ok, msg = _gradient_flow(prob, u, opts, trace)
    else:
        u, trace, ok, msg = _gauss_newton(prob, u, opts, trace)
    cc, pp = prob.unpack(u)
    return SolveReport(ok, trace, cc, pp, msg)


def _gauss_newton(prob, u, opts, trace):
    lam = opts.lm_lambda
    res = prob.residual(u)
    phi = 0.5 * float(res @ res)
    for it in range(1, opts.max_iter + 1):
        lin = prob.linearize(u)
        op = LinearOperator(
            (prob.n_res, prob.n_state),
            matvec=lin.jvp,
            rmatvec=lin.vjp,
            dtype=float,
        )
        accepted = False
        for attempt in range(opts.max_backtracks):
            sol = lsmr(op, -res, damp=np.sqrt(lam), atol=opts.lsmr_atol,
                       btol=opts.lsmr_atol, maxiter=opts.lsmr_maxiter)
            step = sol[0]
            u_try = u + step
            res_try = prob.residual(u_try)
            phi_try = 0.5 * float(res_try @ res_try)
            if phi_try < phi:
                u, res, phi = u_try, res_try, phi_try
                lam = max(lam / 3.0, 1e-14)
                accepted = True
                break
            lam *= 10.0
        entry = _trace_entry(prob, u, it, {"lm_lambda": lam, "accepted": accepted})
        trace.append(entry)
        if not accepted:
            return u, trace, False, "no descent step found (Levenberg damping exhausted)"
        if entry["total"] <= opts.tol:
            return u, trace, True, f"converged in {it} Gauss-Newton iterations"
    return u, trace, trace[-1]["total"] <= opts.tol, "iteration budget exhausted"


def _gradient_flow(prob, u, opts, trace):
    alpha = opts.grad_step
    res = prob.residual(u)
    phi = 0.5 * float(res @ res)
    for it in range(1, opts.max_iter + 1):
        grad = prob.vjp(u, res)
        gnorm2 = float(grad @ grad)
        accepted = False
        for _ in range(opts.max_backtracks * 4):
            u_try = u - alpha * grad
            res_try = prob.residual(u_try)
            phi_try = 0.5 * float(res_try @ res_try)
            if phi_try <= phi - 1e-4 * alpha * gnorm2:
                u, res, phi = u_try, res_try, phi_try
                alpha = min(alpha * 1.5, 1e3)
                accepted = True
                break
            alpha *= 0.5
        entry = _trace_entry(prob, u, it, {"step": alpha, "accepted": accepted})
        trace.append(entry)
        if not accepted:
            return u, trace, False, "line search stalled"
        if entry["total"] <= opts.tol:
            return u, trace, True, f"converged in {it} gradient-flow iterations"
    return u, trace, trace[-1]["total"] <= opts.tol, "iteration budget exhausted"


# ---------------------------------------------------------------------------
# the emergent-equivariance experiment
# ---------------------------------------------------------------------------

def random_band_limited(rng, geom: Geometry, shape_lead: tuple, kmax: int, amp: float):
    """Band-limited random lattice fields with leading component axes."""
    out = np.zeros(shape_lead + geom.base.shape)
    flat = out.reshape(-1, *geom.base.shape)
    n = geom.base.n
    for row in range(flat.shape[0]):
        f = np.zeros(geom.base.shape)
        for _ in range(3):
            kvec = rng.integers(-kmax, kmax + 1, size=n)
            phase = rng.uniform(0, 2 * np.pi)
            mesh = sum(
                kvec[ax] * np.reshape(np.arange(geom.base.shape[ax]) * geom.base.dx[ax],
                                      [-1 if q == ax else 1 for q in range(n)])
                for ax in range(n)
            )
            f += rng.normal() * np.cos(mesh + phase)
        flat[row] = amp * f
    return out


def initial_state(geom: Geometry, rng, recipe: dict):
    """Seeded non-equivariant initial data.

    Recipe keys: kmax (spatial band limit), amplitude (base field),
    fiber_amplitude (non-equivariant eta perturbation), paj_amplitude."""
    kmax = int(recipe.get("kmax", 1))
    amp = float(recipe.get("amplitude", 0.3))
    fib = float(recipe.get("fiber_amplitude", 0.1))
    paj = float(recipe.get("paj_amplitude", 0.1))
    n, r, M = geom.base.n, geom.algebra.r, geom.basis.n_modes
    A = random_band_limited(rng, geom, (n, r), kmax, amp)
    from .fields import equivariant_embed

    conn = equivariant_embed(geom, A)
    eta = conn.eta + np.moveaxis(
        random_band_limited(rng, geom, (n, r, M), kmax, fib), 2, -1
    )
    conn = ConnectionField(geom, eta)
    p = dyn.legendre_momentum(curvature(conn))
    p_aj = np.moveaxis(random_band_limited(rng, geom, (n, r, r, M), kmax, paj), 3, -1)
    return conn, MomentumField(geom, p.p_ab, p_aj)


def emergent_equivariance_experiment(geom: Geometry, seeds, recipe: dict = None,
                                     opts: SolveOptions = SolveOptions()) -> dict:
    """Solve from seeded non-equivariant initial states and report, per seed:
    the final equivariance defect, the extracted base field's classical
    Yang-Mills residual, and the fiber-divergence decoupling diagnostic.

    Refuses non-compact/non-unimodular fibers, matching the hypothesis under
    which equivariance is forced dynamically."""
    if not geom.algebra.is_unimodular():
        raise ValueError("the emergent-equivariance experiment requires a unimodular fiber")
    recipe = recipe or {}
    runs = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        conn0, p0 = initial_state(geom, rng, recipe)
        E0 = equivariance_defect(conn0)
        initial_defect = float(np.sqrt(np.sum(E0**2) * geom.base.cell_volume))
        report = solve_hvdw(conn0, p0, opts)
        final = report.final
        A = extract_base_field(report.conn)
        ym = dyn.yang_mills_residual(geom, A)
        ym_l2 = float(np.sqrt(np.sum(ym**2) * geom.base.cell_volume))
        phi = phi_from_momenta(geom, report.p.p_aj) if geom.basis.group == "SU2" \
            else np.einsum("il,ajl...->aji...", geom.algebra.h_inv, report.p.p_aj)
        div_avg = fiber_divergence_average(geom, phi, j_axis=1)
        runs.append({
            "seed": int(seed),
            "converged": bool(report.converged),
            "iterations": len(report.iterations) - 1,
            "initial_defect": initial_defect,
            "final_total_residual": final.get("total"),
            "final_defect": final.get("defect"),
            "ym_residual_l2": ym_l2,
            "fiber_divergence_avg_linf": float(np.max(np.abs(div_avg), initial=0.0)),
            "action": final.get("action"),
            "message": report.message,
            "trace": report.iterations,
        })
    n_conv = sum(1 for r in runs if r["converged"])
    summary = {
        "n_seeds": len(runs),
        "n_converged": n_conv,
        "convergence_rate": n_conv / max(len(runs), 1),
        "max_final_defect_converged": max(
            (r["final_defect"] for r in runs if r["converged"]), default=0.0
        ),
        "max_ym_residual_converged": max(
            (r["ym_residual_l2"] for r in runs if r["converged"]), default=0.0
        ),
    }
    return {"runs": runs, "summary": summary}
