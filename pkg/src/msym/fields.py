"""Lattice fields on the trivial bundle T^n x G and their differential operators.

Array layout: every fiber-valued field stores real coefficients with the
lattice axes followed by the spectral mode axis, components leading:

    eta   (n, r, *shape, M)      connection components eta^i_a
    p_ab  (P, r, *shape, M)      momenta p^{ab}_i on index pairs a < b
    p_aj  (n, r, r, *shape, M)   momenta p^{aj}_i, axes (a, j, i)
    F     (P, r, *shape, M)      curvature F^i_{ab} on pairs a < b

The base is a flat torus with an orthonormal coordinate frame; the frame
metric is diagonal with configurable signature and the frame-connection
coefficients Gamma^c_ab (= omega^c_b(e_a)) are constants, zero by default.
Horizontal derivatives are spectral by default (exact on band-limited data);
central 2nd/4th order stencils exist for refinement studies.

Operators are pure maps over immutable input arrays and may be evaluated
site-parallel; nothing here mutates its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fiber import FiberBasis, adjoint_matrix_function, get_basis_two, product_tensor
from .lie_core import LieAlgebraSpec

__all__ = [
    "BaseManifoldSpec",
    "Geometry",
    "ConnectionField",
    "MomentumField",
    "CurvatureField",
    "JetField",
    "horizontal_derivative",
    "curvature",
    "equivariance_defect",
    "equivariant_embed",
    "extract_base_field",
    "fiber_divergence_average",
]

SCHEMES = ("spectral", "central-2", "central-4")


@dataclass(frozen=True)
class BaseManifoldSpec:
    """Flat periodic torus T^n with an orthonormal frame.

    metric_diag holds the frame metric entries g_aa (signature configurable);
    gamma holds constant frame-connection coefficients Gamma^c_ab with the
    antisymmetry Gamma^c_ab = -Gamma^b_ac inherited from omega^c_b = -omega^b_c.
    """

    n: int
    shape: tuple
    dx: tuple
    metric_diag: tuple = None
    gamma: np.ndarray = None  # (n, n, n), gamma[c, a, b] = Gamma^c_ab
    scheme: str = "spectral"

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(N) for N in self.shape))
        if len(self.shape) != self.n:
            raise ValueError("shape must list one size per base dimension")
        dx = self.dx if self.dx is not None else (1.0,) * self.n
        if np.isscalar(dx):
            dx = (float(dx),) * self.n
        object.__setattr__(self, "dx", tuple(float(d) for d in dx))
        if len(self.dx) != self.n:
            raise ValueError("dx must list one spacing per base dimension")
        md = self.metric_diag if self.metric_diag is not None else (1.0,) * self.n
        object.__setattr__(self, "metric_diag", tuple(float(m) for m in md))
        if len(self.metric_diag) != self.n or any(m == 0 for m in self.metric_diag):
            raise ValueError("metric_diag must be n nonzero entries")
        gam = np.zeros((self.n, self.n, self.n)) if self.gamma is None else np.asarray(self.gamma, float)
        if gam.shape != (self.n,) * 3:
            raise ValueError("gamma must have shape (n, n, n)")
        if np.max(np.abs(gam + gam.transpose(2, 1, 0)), initial=0.0) > 1e-12:
            raise ValueError("gamma must satisfy Gamma^c_ab = -Gamma^b_ac")
        gam = gam.copy()
        gam.setflags(write=False)
        object.__setattr__(self, "gamma", gam)
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")

    @property
    def n_sites(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.dx))

    @property
    def is_euclidean(self) -> bool:
        return all(m > 0 for m in self.metric_diag)

    def coordinates(self, a: int) -> np.ndarray:
        """Coordinate grid along axis a, broadcastable over the lattice."""
        x = np.arange(self.shape[a]) * self.dx[a]
        idx = [None] * self.n
        idx[a] = slice(None)
        return x[tuple(idx)]


class Geometry:
    """Shared context (base, algebra, fiber basis) with cached operator data."""

    def __init__(self, base: BaseManifoldSpec, algebra: LieAlgebraSpec, basis: FiberBasis):
        if algebra.r != basis.r:
            raise ValueError(
                f"algebra dimension r = {algebra.r} does not match fiber group rank {basis.r}"
            )
        self.base = base
        self.algebra = algebra
        self.basis = basis
        self.pairs = [(a, b) for a in range(base.n) for b in range(base.n) if a < b]
        self.pair_index = {ab: k for k, ab in enumerate(self.pairs)}
        self.ginv = np.array([1.0 / m for m in base.metric_diag])
        self.gdiag = np.array(base.metric_diag)
        self.T = product_tensor(basis, basis, basis)  # Galerkin same-truncation product
        self._adjoint_coeffs = None
        self._fused_bracket = None

    # -- basis/product plumbing ---------------------------------------------

    def upper_basis(self, headroom: int) -> FiberBasis:
        """Basis with `headroom` extra units of j (SU2) or k (U1) for exact products."""
        return get_basis_two(self.basis.group, self.basis.two_trunc + 2 * headroom)

    def lift(self, arr: np.ndarray, up: FiberBasis) -> np.ndarray:
        """Zero-pad coefficients into a larger basis (block prefix property)."""
        out = np.zeros(arr.shape[:-1] + (up.n_modes,), dtype=arr.dtype)
        out[..., : self.basis.n_modes] = arr
        return out

    def project(self, arr: np.ndarray, frm: FiberBasis) -> np.ndarray:
        """Orthogonal projection back onto this geometry's truncation."""
        return arr[..., : self.basis.n_modes]

    @property
    def adjoint_coeffs(self) -> np.ndarray:
        """(r, r, M) spectral coefficients of g -> Ad_{g^-1} in the algebra basis."""
        if self._adjoint_coeffs is None:
            self._adjoint_coeffs = adjoint_matrix_function(self.basis, self.algebra)
        return self._adjoint_coeffs

    # -- lattice derivatives --------------------------------------------------

    def _lat_axis(self, arr: np.ndarray, a: int) -> int:
        return arr.ndim - 1 - self.base.n + a

    def deriv(self, arr: np.ndarray, a: int, axis: int = None) -> np.ndarray:
        """Plain lattice derivative d_a along base direction a.

        Assumes the layout (..., *shape, M) unless the lattice axis for
        direction a is given explicitly."""
        axis = self._lat_axis(arr, a) if axis is None else axis
        N = self.base.shape[a]
        dx = self.base.dx[a]
        if self.base.scheme == "spectral":
            k = 2 * np.pi * np.fft.fftfreq(N, d=dx)
            if N % 2 == 0:
                k[N // 2] = 0.0  # Nyquist mode: keep the operator real and skew
            shape = [1] * arr.ndim
            shape[axis] = N
            fhat = np.fft.fft(arr, axis=axis)
            out = np.fft.ifft(1j * k.reshape(shape) * fhat, axis=axis)
            if np.iscomplexobj(arr):
                return np.ascontiguousarray(out)
            return np.ascontiguousarray(out.real)
        if self.base.scheme == "central-2":
            return (np.roll(arr, -1, axis) - np.roll(arr, 1, axis)) / (2 * dx)
        return (
            -np.roll(arr, -2, axis) + 8 * np.roll(arr, -1, axis)
            - 8 * np.roll(arr, 1, axis) + np.roll(arr, 2, axis)
        ) / (12 * dx)

    def cov_deriv_eta(self, eta: np.ndarray, a: int) -> np.ndarray:
        """(nabla_a eta)_b = d_a eta_b - Gamma^c_ab eta_c, for all b; shape of eta."""
        out = self.deriv(eta, a)
        gam = self.base.gamma
        if gam.any():
            out = out - np.einsum("cb,c...->b...", gam[:, a, :], eta)
        return out

    def jet_of(self, eta: np.ndarray) -> np.ndarray:
        """lambda^i_{b;a} = (nabla_a eta)_b for all (a, b): shape (n, n, r, *shape, M)."""
        return np.stack([self.cov_deriv_eta(eta, a) for a in range(self.base.n)])

    # -- fiber-algebra contractions -------------------------------------------

    def rho(self, arr: np.ndarray, j: int) -> np.ndarray:
        return np.einsum("pq,...q->...p", self.basis.rho[j], arr)

    @property
    def fused_bracket(self) -> np.ndarray:
        """B[p, q, s] = c^i_jk T[g, a, b] on flattened (algebra x mode) indices
        p = (i, g), q = (j, a), s = (k, b); one fixed tensor drives the
        bracket, the coadjoint action, and both adjoints as plain matmuls."""
        if self._fused_bracket is None:
            r, M = self.algebra.r, self.basis.n_modes
            B = np.einsum("ijk,gab->igjakb", self.algebra.c, self.T)
            self._fused_bracket = np.ascontiguousarray(B.reshape(r * M, r * M, r * M))
        return self._fused_bracket

    def _sv(self, X: np.ndarray) -> np.ndarray:
        """(r, *shape, M) -> (sites, r*M) with flattened index (r, mode)."""
        r, M = self.algebra.r, self.basis.n_modes
        return np.ascontiguousarray(np.moveaxis(X, 0, -2)).reshape(-1, r * M)

    def _unsv(self, flat: np.ndarray) -> np.ndarray:
        r, M = self.algebra.r, self.basis.n_modes
        arr = flat.reshape(self.base.shape + (r, M))
        return np.moveaxis(arr, -2, 0)

    def bracket(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        """[X, Y]^i = c^i_jk Pi(X^j, Y^k) for g-valued fields (r, *shape, M)."""
        B = self.fused_bracket
        tmp = np.tensordot(self._sv(X), B, axes=([1], [1]))  # (S, p, s)
        out = np.einsum("xps,xs->xp", tmp, self._sv(Y))
        return self._unsv(out)

    def const_bracket(self, j: int, X: np.ndarray, axis: int = 0) -> np.ndarray:
        """[t_j, X]^i = c^i_jk X^k, contracting the g-index at `axis`."""
        moved = np.moveaxis(X, axis, 0)
        out = np.einsum("ik,k...->i...", self.algebra.c[:, j, :], moved)
        return np.moveaxis(out, 0, axis)

    def ad_star(self, X: np.ndarray, Q: np.ndarray) -> np.ndarray:
        """ad*_X Q with leading r axes on X (g-valued) and Q (g*-valued).

        Implemented as the exact adjoint of the truncated bracket:
        <Q, [X, Y]>_L2 = <ad*_X Q, Y>_L2 identically in the truncated basis;
        on band-limited data this is the continuum coadjoint action.
        """
        B = self.fused_bracket
        tmp = np.tensordot(self._sv(X), B, axes=([1], [1]))  # (S, p, s)
        out = np.einsum("xps,xp->xs", tmp, self._sv(Q))
        return self._unsv(out)

    def bracket_adjoint_first(self, Y: np.ndarray, Z: np.ndarray) -> np.ndarray:
        """W with <Z, [X, Y]> = <X, W> for all X (plain coefficient pairing)."""
        B = self.fused_bracket
        tmp = np.tensordot(self._sv(Y), B, axes=([1], [2]))  # (S, p, q)
        out = np.einsum("xpq,xp->xq", tmp, self._sv(Z))
        return self._unsv(out)

    def ad_star_adjoint_x(self, Q: np.ndarray, Z: np.ndarray) -> np.ndarray:
        """W with <Z, ad*_X Q> = <X, W> for all X."""
        B = self.fused_bracket
        tmp = np.tensordot(self._sv(Q), B, axes=([1], [0]))  # (S, q, s)
        out = np.einsum("xqs,xs->xq", tmp, self._sv(Z))
        return self._unsv(out)

    def ad_star_const(self, j: int, Q: np.ndarray, axis: int = 0) -> np.ndarray:
        """(ad*_{t_j} Q)_i = c^k_ji Q_k, contracting the g*-index at `axis`."""
        moved = np.moveaxis(Q, axis, 0)
        out = np.einsum("ki,k...->i...", self.algebra.c[:, j, :], moved)
        return np.moveaxis(out, 0, axis)

    # -- integration -----------------------------------------------------------

    def haar(self, arr: np.ndarray) -> np.ndarray:
        return arr[..., 0]

    def integral(self, scalar_field: np.ndarray) -> float:
        """Integral over P of a (*shape,) lattice scalar (Haar volume 1)."""
        return float(np.sum(scalar_field) * self.base.cell_volume)

    def l2_norm(self, arr: np.ndarray) -> float:
        """Physical L2(P) norm of a coefficient array with component sums plain."""
        return float(np.sqrt(np.sum(np.asarray(arr) ** 2) * self.base.cell_volume))


# ---------------------------------------------------------------------------
# field containers
# ---------------------------------------------------------------------------

def _check_field(geom: Geometry, arr, lead: tuple, name: str) -> np.ndarray:
    arr = np.asarray(arr, dtype=float)
    want = lead + geom.base.shape + (geom.basis.n_modes,)
    if arr.shape != want:
        raise ValueError(f"{name} must have shape {want}, got {arr.shape}")
    return arr


@dataclass(frozen=True)
class ConnectionField:
    """Normalized connection components eta^i_a; the vertical block eta^i_j is
    structurally delta^i_j and never stored."""

    geom: Geometry
    eta: np.ndarray  # (n, r, *shape, M)

    def __post_init__(self):
        g = self.geom
        object.__setattr__(self, "eta", _check_field(g, self.eta, (g.base.n, g.algebra.r), "eta"))

    @staticmethod
    def zero(geom: Geometry) -> "ConnectionField":
        n, r = geom.base.n, geom.algebra.r
        return ConnectionField(geom, np.zeros((n, r) + geom.base.shape + (geom.basis.n_modes,)))


@dataclass(frozen=True)
class MomentumField:
    """Momenta p^{ab}_i (stored on pairs a < b) and p^{aj}_i (axes a, j, i)."""

    geom: Geometry
    p_ab: np.ndarray  # (P, r, *shape, M)
    p_aj: np.ndarray  # (n, r, r, *shape, M)

    def __post_init__(self):
        g = self.geom
        P, r, n = len(g.pairs), g.algebra.r, g.base.n
        object.__setattr__(self, "p_ab", _check_field(g, self.p_ab, (P, r), "p_ab"))
        object.__setattr__(self, "p_aj", _check_field(g, self.p_aj, (n, r, r), "p_aj"))

    @staticmethod
    def zero(geom: Geometry) -> "MomentumField":
        P, r, n = len(geom.pairs), geom.algebra.r, geom.base.n
        tail = geom.base.shape + (geom.basis.n_modes,)
        return MomentumField(geom, np.zeros((P, r) + tail), np.zeros((n, r, r) + tail))

    def full_ab(self) -> np.ndarray:
        """Materialized antisymmetric p^{ab}_i of shape (n, n, r, *shape, M)."""
        g = self.geom
        n = g.base.n
        out = np.zeros((n, n) + self.p_ab.shape[1:])
        for k, (a, b) in enumerate(g.pairs):
            out[a, b] = self.p_ab[k]
            out[b, a] = -self.p_ab[k]
        return out


@dataclass(frozen=True)
class CurvatureField:
    geom: Geometry
    f_ab: np.ndarray  # (P, r, *shape, M), pairs a < b

    def __post_init__(self):
        g = self.geom
        object.__setattr__(self, "f_ab", _check_field(g, self.f_ab, (len(g.pairs), g.algebra.r), "f_ab"))


@dataclass(frozen=True)
class JetField:
    """First jet lambda^i_{a;b} (axes b-direction, a-component) and lambda^i_{a;j}."""

    geom: Geometry
    lam_ab: np.ndarray  # (n, n, r, *shape, M): lam_ab[b, a] = lambda_{a;b}
    lam_aj: np.ndarray  # (n, r, r, *shape, M): lam_aj[a, j] = lambda_{a;j}

    def __post_init__(self):
        g = self.geom
        n, r = g.base.n, g.algebra.r
        object.__setattr__(self, "lam_ab", _check_field(g, self.lam_ab, (n, n, r), "lam_ab"))
        object.__setattr__(self, "lam_aj", _check_field(g, self.lam_aj, (n, r, r), "lam_aj"))

    @staticmethod
    def of_connection(conn: ConnectionField, equivariant: bool = True) -> "JetField":
        """The jet of an actual section; with `equivariant` the vertical slots
        carry the constraint lambda_{a;j} = [eta_a, t_j], else the true
        vertical derivatives rho_j(eta_a)."""
        g = conn.geom
        lam_ab = g.jet_of(conn.eta)
        if equivariant:
            # [eta_a, t_j] = -[t_j, eta_a]
            lam_aj = np.stack(
                [-g.const_bracket(j, conn.eta, axis=1) for j in range(g.algebra.r)], axis=1
            )
        else:
            lam_aj = np.stack([g.rho(conn.eta, j) for j in range(g.algebra.r)], axis=1)
        return JetField(g, lam_ab, lam_aj)


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------

def horizontal_derivative(geom: Geometry, eta: np.ndarray, a: int, covariant: bool = False):
    """Lattice derivative of a (lower-index) component field along e_a.

    Plain: d_a per the configured scheme.  Covariant: adds the frame coupling
    (nabla_a eta)_b = d_a eta_b - Gamma^c_ab eta_c.
    """
    return geom.cov_deriv_eta(eta, a) if covariant else geom.deriv(eta, a)


def curvature(conn: ConnectionField) -> CurvatureField:
    """F_ab = (nabla_a eta)_b - (nabla_b eta)_a + [eta_a, eta_b] on pairs a < b."""
    g = conn.geom
    jet = g.jet_of(conn.eta)  # jet[a, b] = (nabla_a eta)_b
    rows = []
    for a, b in g.pairs:
        rows.append(jet[a, b] - jet[b, a] + g.bracket(conn.eta[a], conn.eta[b]))
    return CurvatureField(g, np.stack(rows))


def equivariance_defect(conn: ConnectionField) -> np.ndarray:
    """E_{a,j} = rho_j(eta_a) + [t_j, eta_a]; zero iff eta is equivariant.

    Returns (n, r_j, r_i, *shape, M)."""
    g = conn.geom
    rows = []
    for j in range(g.algebra.r):
        rows.append(g.rho(conn.eta, j) + g.const_bracket(j, conn.eta, axis=1))
    return np.stack(rows, axis=1)


def equivariant_embed(geom: Geometry, A: np.ndarray) -> ConnectionField:
    """eta^i_a(x, g) = M(g)^i_j A^j_a(x) for a base gauge field A of shape (n, r, *shape).

    The result has vanishing equivariance defect by construction (exact Ad
    spectral representation)."""
    A = np.asarray(A, dtype=float)
    want = (geom.base.n, geom.algebra.r) + geom.base.shape
    if A.shape != want:
        raise ValueError(f"base field must have shape {want}, got {A.shape}")
    M = geom.adjoint_coeffs  # (r, r, modes)
    eta = np.einsum("ijm,aj...->ai...m", M, A)
    return ConnectionField(geom, eta)


def extract_base_field(conn: ConnectionField) -> np.ndarray:
    """Haar-projected Ad-inverse of eta: A^i_a(x) = Haar(M^j_i(g) eta^j_a(x, g)).

    Haar of a product is the plain coefficient dot in the orthonormal real
    basis, so no product truncation enters.  Inverts equivariant_embed exactly
    on equivariant fields (Ad is orthogonal for the compact fibers)."""
    g = conn.geom
    M = g.adjoint_coeffs  # (r_j, r_i, modes)
    return np.einsum("jim,aj...m->ai...", M, conn.eta, optimize=True)


def fiber_divergence_average(geom: Geometry, phi: np.ndarray, j_axis: int = 0) -> np.ndarray:
    """Haar(sum_j rho_j phi^{.. j ..}) per site; identically zero mode-wise.

    `phi` carries the fiber-direction index on `j_axis`; requires a unimodular
    algebra (the compact fibers here always are)."""
    if not geom.algebra.is_unimodular():
        raise ValueError("fiber divergence average requires a unimodular algebra")
    phi = np.asarray(phi)
    if phi.shape[j_axis] != geom.algebra.r:
        raise ValueError(f"axis {j_axis} must have length r = {geom.algebra.r}")
    moved = np.moveaxis(phi, j_axis, 0)
    acc = np.zeros(moved.shape[1:], dtype=phi.dtype)
    for j in range(geom.algebra.r):
        acc = acc + geom.rho(moved[j], j)
    return geom.haar(acc)
