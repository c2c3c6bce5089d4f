"""Gauge actions on the bundle fields.

Two symmetries act here:

* the equivariant gauge group (maps gamma(x, g) = g^-1 f(x) g generated by
  lattice maps f: M -> G), acting by eta -> gamma^-1 d gamma + gamma^-1 eta
  gamma and p -> Ad*_gamma p, plus its alternative pull-back action through
  z -> z . gamma(z);
* the additive dual group shifting the auxiliary momenta p^{aj} by
  fiber-divergence-free fields chi^{aj} (the Hamiltonian never sees them).

Gauge elements are generated from band-limited algebra-valued potentials via
the group exponential; exp of a band-limited field is not itself band-limited,
so the band-limit metadata records the potential's cutoff and tests keep
amplitudes small enough that spectral-derivative aliasing stays below
tolerance.

Fiber products with Ad-matrix entries raise the spectral degree by one unit
per factor; the conjugation chains here run with two units of headroom and
project back at the end.  On equivariant-profile data the projection is
exact; strict mode rejects any measurable loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fiber import group_adjoint, product_tensor, su2_exp
from .fields import ConnectionField, Geometry, MomentumField

__all__ = [
    "GaugeElement",
    "DualGaugeElement",
    "TruncationLossError",
    "gauge_transform",
    "alternative_gauge_pullback",
    "dual_gauge_shift",
    "dual_shift_defect",
    "u1_dual_shift",
    "su2_dual_shift_from_seeds",
    "gauge_fixing_residuals",
    "phi_from_momenta",
]

_SIGMA = np.array(
    [[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]], dtype=complex
)


class TruncationLossError(ValueError):
    """Raised in strict mode when a conjugation does not fit the truncation."""


@dataclass(frozen=True)
class GaugeElement:
    """A lattice of group elements f(x) with band-limit metadata.

    U1: complex units of shape (*shape); SU2: 2x2 special-unitary matrices of
    shape (*shape, 2, 2).  `band_limit` is the spectral cutoff of the
    generating potential (derivative-accuracy metadata, not a hard bound)."""

    group: str
    field: np.ndarray
    band_limit: int = 0

    def __post_init__(self):
        f = np.asarray(self.field, dtype=complex)
        if self.group == "U1":
            if np.max(np.abs(np.abs(f) - 1.0), initial=0.0) > 1e-10:
                raise ValueError("U1 gauge element entries must be unit complex numbers")
        elif self.group == "SU2":
            if f.shape[-2:] != (2, 2):
                raise ValueError("SU2 gauge element must have trailing (2, 2) axes")
            herm = np.einsum("...ab,...cb->...ac", f, f.conj())
            if np.max(np.abs(herm - np.eye(2))) > 1e-10:
                raise ValueError("SU2 gauge element entries must be unitary")
            det = f[..., 0, 0] * f[..., 1, 1] - f[..., 0, 1] * f[..., 1, 0]
            if np.max(np.abs(det - 1.0)) > 1e-10:
                raise ValueError("SU2 gauge element entries must have determinant 1")
        else:
            raise ValueError(f"unsupported group {self.group!r}")
        object.__setattr__(self, "field", f)

    @staticmethod
    def identity(geom: Geometry) -> "GaugeElement":
        shape = geom.base.shape
        if geom.basis.group == "U1":
            return GaugeElement("U1", np.ones(shape, dtype=complex))
        eye = np.broadcast_to(np.eye(2, dtype=complex), shape + (2, 2)).copy()
        return GaugeElement("SU2", eye)

    @staticmethod
    def from_potential(geom: Geometry, phi: np.ndarray, band_limit: int = 0) -> "GaugeElement":
        """f(x) = exp(phi^k(x) t_k) for a real potential of shape (r, *shape)."""
        phi = np.asarray(phi, dtype=float)
        want = (geom.algebra.r,) + geom.base.shape
        if phi.shape != want:
            raise ValueError(f"potential must have shape {want}, got {phi.shape}")
        if geom.basis.group == "U1":
            return GaugeElement("U1", np.exp(1j * phi[0]), band_limit)
        return GaugeElement("SU2", su2_exp(np.moveaxis(phi, 0, -1)), band_limit)

    def inverse(self) -> "GaugeElement":
        if self.group == "U1":
            return GaugeElement("U1", np.conj(self.field), self.band_limit)
        return GaugeElement("SU2", np.swapaxes(self.field, -1, -2).conj(), self.band_limit)

    def adjoint_matrices(self) -> np.ndarray:
        """Ad_{f(x)} in the algebra basis, components leading: (r_i, r_j, *shape)."""
        ad = group_adjoint(self.group, self.field)
        return np.moveaxis(ad, (-2, -1), (0, 1))

    def maurer_cartan_components(self, geom: Geometry) -> np.ndarray:
        """(f^-1 d_a f)^k as a lattice field (n, r, *shape), lattice derivatives."""
        n = geom.base.n
        if self.group == "U1":
            out = np.empty((n, 1) + geom.base.shape)
            for a in range(n):
                df = geom.deriv(self.field[..., None], a)[..., 0]
                out[a, 0] = np.real(-1j * np.conj(self.field) * df)
            return out
        finv = np.swapaxes(self.field, -1, -2).conj()
        out = np.empty((n, 3) + geom.base.shape)
        for a in range(n):
            df = np.empty_like(self.field)
            for i in range(2):
                for j in range(2):
                    re = geom.deriv(self.field[..., i, j].real, a, axis=a)
                    im = geom.deriv(self.field[..., i, j].imag, a, axis=a)
                    df[..., i, j] = re + 1j * im
            X = np.einsum("...ab,...bc->...ac", finv, df)
            # x_k = i tr(X sigma_k); the imaginary residue is aliasing noise
            out[a] = np.real(1j * np.einsum("...ab,kba->k...", X, _SIGMA))
        return out


# ---------------------------------------------------------------------------
# the equivariant gauge action
# ---------------------------------------------------------------------------

def _adjoint_chain(geom: Geometry, X: np.ndarray, mid: np.ndarray, strict: bool,
                   tol: float = 1e-9):
    """Fiberwise conjugation Y^i = [M(g) MID(x) M(g)^T]^i_j X^j.

    X: leading r axis, trailing (*shape, M).  MID: (r_i, r_j, *shape) pointwise
    matrices.  Computes Ad_{gamma^-1} on g-valued fields (MID = Ad_{f^-1}) and
    Ad*_gamma on g*-valued ones (MID = Ad_f^T, the same matrices), with two
    units of spectral headroom before projecting back."""
    basis = geom.basis
    up1 = geom.upper_basis(1)
    up2 = geom.upper_basis(2)
    M = geom.adjoint_coeffs  # (r, r, modes)
    T1 = product_tensor(basis, basis, up1)
    T2 = product_tensor(basis, up1, up2)
    # step 1: Ad_g = M(g)^T on the algebra index: Y^k = sum_l Pi(M^l_k, X^l)
    Y = np.einsum("gac,lka,l...c->k...g", T1, M, X, optimize=True)
    # step 2: pointwise matrix on the algebra index
    Z = np.einsum("kl...,l...g->k...g", mid, Y, optimize=True)
    # step 3: Ad_{g^-1} = M(g): W^i = sum_k Pi(M^i_k, Z^k)
    W = np.einsum("gac,ika,k...c->i...g", T2, M, Z, optimize=True)
    kept = W[..., : basis.n_modes]
    dropped = float(np.sqrt(np.sum(W[..., basis.n_modes:] ** 2)))
    scale = max(float(np.sqrt(np.sum(W**2))), 1e-300)
    if strict and dropped > tol * scale:
        raise TruncationLossError(
            f"conjugation leaks {dropped:.3e} (relative {dropped / scale:.3e}) past the truncation"
        )
    return kept, dropped


def gauge_transform(conn: ConnectionField, p: MomentumField, f: GaugeElement,
                    strict: bool = True):
    """The equivariant gauge action for gamma(x, g) = g^-1 f(x) g:

        eta -> gamma^-1 d gamma + gamma^-1 eta gamma,   p -> Ad*_gamma p.

    Returns (ConnectionField, MomentumField).  Curvature transforms by
    Ad_{gamma^-1} and the Lagrangian density is pointwise invariant; both are
    verified in the test suite rather than assumed."""
    g = conn.geom
    if f.group != g.basis.group:
        raise ValueError("gauge element group does not match the fiber")
    mc = f.maurer_cartan_components(g)  # (n, r, *shape)
    if g.basis.group == "U1":
        # abelian: gamma = f, Ad trivial; eta shifts by the Maurer-Cartan form
        eta = conn.eta.copy()
        eta[..., 0] += mc
        return ConnectionField(g, eta), p
    adf = f.adjoint_matrices()          # Ad_f, (r_i, r_j, *shape)
    adf_t = np.swapaxes(adf, 0, 1)      # Ad_{f^-1} = Ad_f^T pointwise
    n = g.base.n
    Mc = g.adjoint_coeffs
    eta_new = np.empty_like(conn.eta)
    for a in range(n):
        hom, _ = _adjoint_chain(g, conn.eta[a], adf_t, strict)
        eta_new[a] = hom + np.einsum("ijm,j...->i...m", Mc, mc[a])
    # (Ad*_gamma p)_i = [Ad_gamma]^k_i p_k with Ad_gamma = M Ad_f M^T, so the
    # transpose chain is M Ad_f^T M^T: identical helper, identical MID
    p_ab_new = np.empty_like(p.p_ab)
    for k in range(len(g.pairs)):
        p_ab_new[k], _ = _adjoint_chain(g, p.p_ab[k], adf_t, strict)
    p_aj_new = np.empty_like(p.p_aj)
    for a in range(n):
        for j in range(g.algebra.r):
            p_aj_new[a, j], _ = _adjoint_chain(g, p.p_aj[a, j], adf_t, strict)
    return ConnectionField(g, eta_new), MomentumField(g, p_ab_new, p_aj_new)


def alternative_gauge_pullback(conn: ConnectionField, f: GaugeElement) -> ConnectionField:
    """The pull-back action through phi: z -> z . gamma(z):

        eta_a(x, g) -> eta_a(x, f(x) g) + Ad_{g^-1}(f^-1 d_a f).

    Coincides with gauge_transform's eta output on equivariant inputs and
    differs off the equivariant locus.  Left translation preserves every
    irrep, so no truncation loss occurs."""
    g = conn.geom
    if f.group != g.basis.group:
        raise ValueError("gauge element group does not match the fiber")
    mc = f.maurer_cartan_components(g)
    if g.basis.group == "U1":
        eta = conn.eta.copy()
        eta[..., 0] += mc
        return ConnectionField(g, eta)
    shape = g.base.shape
    M = g.basis.n_modes
    sites = int(np.prod(shape))
    fmat = f.field.reshape(sites, 2, 2)
    L = np.empty((sites, M, M))
    for s in range(sites):
        L[s] = g.basis.left_translation_matrix(fmat[s])
    L = L.reshape(shape + (M, M))
    eta_new = np.einsum("...pq,ai...q->ai...p", L, conn.eta, optimize=True)
    eta_new += np.einsum("ijm,aj...->ai...m", g.adjoint_coeffs, mc)
    return ConnectionField(g, eta_new)


# ---------------------------------------------------------------------------
# the dual (additive) gauge group
# ---------------------------------------------------------------------------

def dual_shift_defect(geom: Geometry, chi: np.ndarray) -> float:
    """Max-norm of sum_j [rho_j chi^{aj} - ad*_{t_j} chi^{aj} - tr(ad_j) chi^{aj}]."""
    n, r = geom.base.n, geom.algebra.r
    tr = geom.algebra.trace_ad
    worst = 0.0
    for a in range(n):
        acc = np.zeros((r,) + geom.base.shape + (geom.basis.n_modes,))
        for j in range(r):
            acc = acc + geom.rho(chi[a, j], j)
            acc = acc - geom.ad_star_const(j, chi[a, j])
            acc = acc - tr[j] * chi[a, j]
        worst = max(worst, float(np.max(np.abs(acc), initial=0.0)))
    return worst


@dataclass(frozen=True)
class DualGaugeElement:
    """An additive momentum shift chi^{aj}_i with chi^{ab} = 0, constrained to
    be fiber-divergence-free (see dual_shift_defect); shifting p^{aj} by chi
    leaves H exactly and the action and residual norms invariant."""

    geom: Geometry
    chi: np.ndarray  # (n, r_j, r_i, *shape, M)
    tol: float = 1e-10

    def __post_init__(self):
        g = self.geom
        want = (g.base.n, g.algebra.r, g.algebra.r) + g.base.shape + (g.basis.n_modes,)
        chi = np.asarray(self.chi, dtype=float)
        if chi.shape != want:
            raise ValueError(f"chi must have shape {want}, got {chi.shape}")
        defect = dual_shift_defect(g, chi)
        if defect > self.tol:
            raise ValueError(
                f"chi violates the fiber-divergence constraint (defect {defect:.3e})"
            )
        object.__setattr__(self, "chi", chi)


def dual_gauge_shift(p: MomentumField, chi: DualGaugeElement) -> MomentumField:
    """p^{ab} unchanged, p^{aj} -> p^{aj} + chi^{aj}."""
    return MomentumField(chi.geom, p.p_ab, p.p_aj + chi.chi)


def u1_dual_shift(geom: Geometry, values: np.ndarray) -> DualGaugeElement:
    """U1 shifts are fiber-constant: chi^{a1}_1(x) = values[a](x)."""
    if geom.basis.group != "U1":
        raise ValueError("u1_dual_shift needs a U1 fiber")
    values = np.asarray(values, dtype=float)
    want = (geom.base.n,) + geom.base.shape
    if values.shape != want:
        raise ValueError(f"values must have shape {want}")
    chi = np.zeros((geom.base.n, 1, 1) + geom.base.shape + (geom.basis.n_modes,))
    chi[:, 0, 0, ..., 0] = values
    return DualGaugeElement(geom, chi)


def su2_dual_shift_from_seeds(geom: Geometry, tau: np.ndarray) -> DualGaugeElement:
    """SU2 shifts from exact-form seeds.

    For the g-valued fiber 1-form tau^a = tau^a_k gamma^k the 2-form d(tau^a)
    is closed; its Hodge components Psi^{aj} satisfy sum_j rho_j Psi^{aj} = 0,
    and chi^{aj} = h_* Ad_{g^-1} Psi^{aj} satisfies the dual-shift constraint.

    `tau`: (n, fiber index k, algebra index m, *shape, M) coefficients in this
    geometry's basis; seeds of spectral degree d need d + 1 <= truncation."""
    g = geom
    if g.basis.group != "SU2":
        raise ValueError("su2_dual_shift_from_seeds needs an SU2 fiber")
    n, r = g.base.n, g.algebra.r
    want = (n, r, r) + g.base.shape + (g.basis.n_modes,)
    tau = np.asarray(tau, dtype=float)
    if tau.shape != want:
        raise ValueError(f"tau must have shape {want}, got {tau.shape}")
    c = g.algebra.c
    # d(tau_k gamma^k) = sum_{k<j} w_kj gamma^k gamma^j with
    # w_kj = rho_k tau_j - rho_j tau_k - tau_m c^m_kj
    w = {}
    for k in range(3):
        for j in range(k + 1, 3):
            cterm = np.einsum("m,am...->a...", c[:, k, j], tau)
            w[(k, j)] = g.rho(tau[:, j], k) - g.rho(tau[:, k], j) - cterm
    # gamma_1 = g2^g3, gamma_2 = -g1^g3, gamma_3 = g1^g2
    psi = np.stack([w[(1, 2)], -w[(0, 2)], w[(0, 1)]], axis=1)  # (n, j, m, *shape, M)
    # chi^{aj}_i = h_il Pi(M^l_m, Psi^{aj,m}), one unit of headroom
    up1 = g.upper_basis(1)
    T1 = product_tensor(g.basis, g.basis, up1)
    M = g.adjoint_coeffs
    lifted = np.einsum("gpq,lmp,ajm...q->ajl...g", T1, M, psi, optimize=True)
    dropped = float(np.sqrt(np.sum(lifted[..., g.basis.n_modes:] ** 2)))
    if dropped > 1e-10 * max(float(np.sqrt(np.sum(lifted**2))), 1e-300):
        raise TruncationLossError("seed spectral degree too high for the fiber truncation")
    chi = np.einsum("il,ajl...g->aji...g", g.algebra.h, lifted[..., : g.basis.n_modes])
    return DualGaugeElement(g, chi)


# ---------------------------------------------------------------------------
# gauge fixing
# ---------------------------------------------------------------------------

def phi_from_momenta(geom: Geometry, p_aj: np.ndarray, strict: bool = False) -> np.ndarray:
    """Phi^{aj} = Ad_g(h^* p^{aj}): the g-valued, conjugation-free momenta.

    Ad_g acts with matrix M(g)^T: Phi^m = sum_l Pi(M^l_m, (h^* p)^l)."""
    hp = np.einsum("il,ajl...->aji...", geom.algebra.h_inv, p_aj)
    up1 = geom.upper_basis(1)
    T1 = product_tensor(geom.basis, geom.basis, up1)
    M = geom.adjoint_coeffs
    out = np.einsum("gpq,lmp,ajl...q->ajm...g", T1, M, hp, optimize=True)
    if strict:
        dropped = float(np.sqrt(np.sum(out[..., geom.basis.n_modes:] ** 2)))
        if dropped > 1e-10 * max(float(np.sqrt(np.sum(out**2))), 1e-300):
            raise TruncationLossError("Phi does not fit the fiber truncation")
    return out[..., : geom.basis.n_modes]


def _fiber_codifferential(geom: Geometry, phi: np.ndarray) -> np.ndarray:
    """Components of *d*(Phi^{aj} gamma_j) on the SU(2) fiber, per site.

    With *gamma_j = gamma^j: d(Phi^{aj} gamma^j) = sum_{k<j} w_kj gamma^k gamma^j,
    w_kj = rho_k Phi^{aj'} ... concretely w_kj = rho_k Phi^{a,j} - rho_j Phi^{a,k}
    - Phi^{a,l} c^l_kj, mapped back through (g2g3, g1g3, g1g2) -> (g1, -g2, g3)."""
    c = geom.algebra.c
    w = {}
    for k in range(3):
        for j in range(k + 1, 3):
            cterm = np.einsum("l,al...->a...", c[:, k, j], phi)
            w[(k, j)] = geom.rho(phi[:, j], k) - geom.rho(phi[:, k], j) - cterm
    return np.stack([w[(1, 2)], -w[(0, 2)], w[(0, 1)]], axis=1)


def gauge_fixing_residuals(conn: ConnectionField, p_aj: np.ndarray = None) -> dict:
    """The two gauge-fixing residuals of the variational slice conditions.

    Lorenz-type: Haar(Ad_g(eta^a_{;a})) per site, an (r, *shape) lattice field;
    for fiber-constant embeds this is the plain metric divergence of A (Haar of
    a product is the plain coefficient pairing, so no truncation enters).

    Dual-group fixing: the fiber codifferential of Phi^{aj} gamma_j per site,
    zero iff Phi^{aj} gamma_j is co-closed, which fixes the additive shifts
    since H^2(SU(2)) = 0 kills the harmonic part.  For U1 the shift group is
    purely harmonic (H^0(U(1)) = R is nontrivial), the Hodge prescription does
    not apply, and the residual is identically zero by convention.
    """
    g = conn.geom
    n, r = g.base.n, g.algebra.r
    div = np.zeros((r,) + g.base.shape + (g.basis.n_modes,))
    for a in range(n):
        div = div + g.ginv[a] * g.cov_deriv_eta(conn.eta, a)[a]
    M = g.adjoint_coeffs
    # Haar(Ad_g X)^i = sum_j <M^j_i, X^j>
    lorenz = np.einsum("jim,j...m->i...", M, div, optimize=True)
    out = {"lorenz": lorenz, "lorenz_linf": float(np.max(np.abs(lorenz), initial=0.0))}
    if g.basis.group == "U1" or p_aj is None:
        out["dual"] = None
        out["dual_linf"] = 0.0
        return out
    phi = phi_from_momenta(g, p_aj)
    dual = _fiber_codifferential(g, phi)
    out["dual"] = dual
    out["dual_linf"] = float(np.max(np.abs(dual), initial=0.0))
    return out
