"""Exact harmonic analysis on the group fiber (U(1) and SU(2)).

Functions on the fiber are stored in a *real orthonormal* Peter-Weyl basis:

* U(1): 1, sqrt(2) cos(k th), sqrt(2) sin(k th) for k = 1..K, with the
  normalized Haar measure dth/2pi.
* SU(2): for each spin j <= j_max, the (2j+1)^2 functions obtained from the
  Wigner matrix entries D^j_mm' as sqrt(2(2j+1)) Re/Im combinations (and
  sqrt(2j+1) D^j_00 for the self-conjugate entry), orthonormal under the
  normalized Haar measure.

The complex modes e^{ik th} / D^j_mm' are available as derived constructors
(:meth:`FiberBasis.complex_mode`), and the classical Gram values (1 for
Fourier modes, 1/(2j+1) for D^j entries) are recovered by the tests; the real
repackaging makes reality of fields structural and keeps every operator real.

All operators are built from one convention: the spin-j representation is
generated by dpi_j(t_k) = -i J_k with t_k = -i sigma_k/2, and pi_j(g) is
computed as expm(sum_k x_k dpi_j(t_k)) from a traceless logarithm of g, so the
vertical derivatives, products (Clebsch-Gordan built by ladder descent) and
pointwise evaluation are mutually consistent by construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import expm, schur

from .lie_core import LieAlgebraSpec, su2 as su2_spec

__all__ = [
    "FiberBasis",
    "FiberFunction",
    "get_basis",
    "vertical_derivative",
    "haar_integral",
    "multiply",
    "evaluate",
    "adjoint_matrix_function",
    "su2_exp",
    "su2_traceless_log",
    "group_adjoint",
    "check_group_element",
]

_CONSTRUCTION_TOL = 1e-12


# ---------------------------------------------------------------------------
# SU(2) matrix utilities
# ---------------------------------------------------------------------------

_SIGMA = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)


def su2_exp(x) -> np.ndarray:
    """exp(sum_k x^k t_k) with t_k = -i sigma_k/2; broadcasts over leading axes."""
    x = np.asarray(x, dtype=float)
    phi = np.linalg.norm(x, axis=-1)
    half = 0.5 * phi
    # sin(phi/2)/phi, regular at 0
    small = phi < 1e-12
    fac = np.where(small, 0.5, np.sin(half) / np.where(small, 1.0, phi))
    nsigma = np.einsum("...k,kab->...ab", x, _SIGMA)
    eye = np.eye(2, dtype=complex)
    return np.cos(half)[..., None, None] * eye - 1j * fac[..., None, None] * nsigma


def su2_traceless_log(gmat: np.ndarray) -> np.ndarray:
    """Components x with exp(sum x^k t_k) = g, traceless branch (works at g = -I)."""
    t, q = schur(np.asarray(gmat, dtype=complex), output="complex")
    theta = float(np.angle(t[0, 0]))
    x_mat = q @ np.diag([1j * theta, -1j * theta]) @ q.conj().T
    # x_k = i tr(X sigma_k) for X = sum x_k (-i sigma_k / 2)
    return np.real(1j * np.einsum("ab,kba->k", x_mat, _SIGMA))


def check_group_element(group: str, g, tol: float = 1e-10):
    """Validate and normalize a group element (unit complex / SU(2) matrix)."""
    if group == "U1":
        g = complex(g)
        if abs(abs(g) - 1.0) > tol:
            raise ValueError(f"not a unit complex number: |g| = {abs(g)}")
        return g
    if group == "SU2":
        g = np.asarray(g, dtype=complex)
        if g.shape != (2, 2):
            raise ValueError("SU(2) element must be a 2x2 matrix")
        if np.max(np.abs(g @ g.conj().T - np.eye(2))) > tol:
            raise ValueError("matrix is not unitary")
        if abs(np.linalg.det(g) - 1.0) > tol:
            raise ValueError("matrix determinant is not 1")
        return g
    raise ValueError(f"unsupported group {group!r}")


def group_adjoint(group: str, g) -> np.ndarray:
    """Matrix of Ad_g on the fiber algebra basis: Ad_g t_j = A^i_j t_i.

    U(1): [[1.]].  SU(2): the rotation matrix with entries -2 tr(g t_j g^-1 t_i)
    in the t_k = -i sigma_k/2 basis.  Broadcasts over leading lattice axes for
    SU(2) input of shape (..., 2, 2).
    """
    if group == "U1":
        return np.ones(np.shape(g) + (1, 1))
    g = np.asarray(g, dtype=complex)
    t = -0.5j * _SIGMA
    ginv = np.swapaxes(g, -1, -2).conj()
    conj_t = np.einsum("...ab,jbc,...cd->...jad", g, t, ginv)
    return np.real(-2.0 * np.einsum("...jad,ida->...ij", conj_t, t))


def _angular_momentum(two_j: int):
    """Spin-j matrices (J3, J+, J-) in the basis m = j, j-1, ..., -j."""
    j = two_j / 2.0
    m = np.arange(j, -j - 1.0, -1.0)
    dim = two_j + 1
    j3 = np.diag(m)
    jp = np.zeros((dim, dim))
    for idx in range(1, dim):
        mm = m[idx]  # raiseable values
        jp[idx - 1, idx] = np.sqrt(j * (j + 1) - mm * (mm + 1))
    return j3, jp, jp.T.copy()


def _dpi(two_j: int) -> np.ndarray:
    """Generators dpi_j(t_k) = -i J_k, shape (3, dim, dim)."""
    j3, jp, jm = _angular_momentum(two_j)
    j1 = 0.5 * (jp + jm)
    j2 = (jp - jm) / 2j
    return np.stack([-1j * j1, -1j * j2, -1j * j3])


def _pi_su2(two_j: int, gmat: np.ndarray) -> np.ndarray:
    """pi_j(g) = expm(sum x_k dpi_j(t_k)); exact representation property."""
    if two_j == 0:
        return np.ones((1, 1), dtype=complex)
    x = su2_traceless_log(gmat)
    return expm(np.einsum("k,kab->ab", x, _dpi(two_j)))


# ---------------------------------------------------------------------------
# Clebsch-Gordan isometries by ladder descent
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _cg_isometry(two_j1: int, two_j2: int):
    """dict two_J -> W with rows |J,M> (M = J..-J) in the product basis (m1, m2).

    Built by finding the highest-weight vector in each M = J eigenspace of the
    total J3 (kernel of total J+ there, one-dimensional for SU(2) x SU(2)) and
    descending with J-.  Condon-Shortley phase: <j1 j1, j2 J-j1 | J J> > 0.
    """
    d1, d2 = two_j1 + 1, two_j2 + 1
    j3a, jpa, jma = _angular_momentum(two_j1)
    j3b, jpb, jmb = _angular_momentum(two_j2)
    eye1, eye2 = np.eye(d1), np.eye(d2)
    j3 = np.kron(j3a, eye2) + np.kron(eye1, j3b)
    jp = np.kron(jpa, eye2) + np.kron(eye1, jpb)
    jm = np.kron(jma, eye2) + np.kron(eye1, jmb)
    m_tot = np.diag(j3)
    m1 = np.arange(two_j1 / 2, -two_j1 / 2 - 1, -1)
    m2 = np.arange(two_j2 / 2, -two_j2 / 2 - 1, -1)

    out = {}
    built_at_m = {}  # M value -> list of vectors already claimed by higher J
    for two_J in range(two_j1 + two_j2, abs(two_j1 - two_j2) - 1, -2):
        jval = two_J / 2
        sel = np.where(np.abs(m_tot - jval) < 1e-9)[0]
        basis = np.zeros((d1 * d2, len(sel)))
        basis[sel, np.arange(len(sel))] = 1.0
        block = jp @ basis
        # kernel of J+ within the M = J eigenspace, orthogonal to higher multiplets
        prev = built_at_m.get(two_J, [])
        if prev:
            block = np.vstack([block, np.array(prev) @ basis])
        _, s, vt = np.linalg.svd(block, full_matrices=True)
        null = vt[-1]
        if len(s) >= len(sel) and len(sel) > 1:
            assert s[len(sel) - 2] > 1e-8, "degenerate highest-weight space"
        vec = basis @ null
        # Condon-Shortley: coefficient on (m1 = j1, m2 = J - j1) positive
        want1 = two_j1 / 2
        want2 = jval - want1
        idx = None
        for i1, mv1 in enumerate(m1):
            for i2, mv2 in enumerate(m2):
                if abs(mv1 - want1) < 1e-9 and abs(mv2 - want2) < 1e-9:
                    idx = i1 * d2 + i2
        if idx is not None and vec[idx] < 0:
            vec = -vec
        rows = [vec]
        for _ in range(two_J):
            vec = jm @ vec
            vec = vec / np.linalg.norm(vec)
            rows.append(vec)
        w = np.array(rows)
        out[two_J] = w
        for row, mval in zip(w, np.arange(jval, -jval - 1, -1)):
            built_at_m.setdefault(int(round(2 * mval)), []).append(row)
    return out


# ---------------------------------------------------------------------------
# the basis
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FiberBasis:
    """Spectral basis of real orthonormal modes on the fiber group.

    Immutable and shared; all operator data (vertical derivative matrices,
    complex<->real transforms) is precomputed at construction.
    """

    group: str
    two_trunc: int          # 2*K for U1, 2*j_max for SU2
    r: int
    n_modes: int
    labels: tuple
    blocks: tuple           # (two_j_or_two_k, slice into complex modes)
    cplx_labels: tuple
    b_mat: np.ndarray       # real modes in terms of complex modes, (M, M)
    v_mat: np.ndarray       # complex coeffs -> real coeffs, (M, M)
    rho: np.ndarray         # (r, M, M) real skew, vertical derivatives
    block_of_mode: np.ndarray  # (M,) int: two_j (SU2) or 2*|k| (U1) per real mode

    @property
    def truncation(self):
        return self.two_trunc // 2 if self.group == "U1" else self.two_trunc / 2.0

    # -- evaluation ---------------------------------------------------------

    def evaluate_cplx_modes(self, g) -> np.ndarray:
        g = check_group_element(self.group, g)
        vals = np.zeros(self.n_modes, dtype=complex)
        for two_k, sl in self.blocks:
            if self.group == "U1":
                k = two_k // 2
                theta = np.angle(g)
                if k == 0:
                    vals[sl] = 1.0
                else:
                    vals[sl] = [np.exp(1j * k * theta), np.exp(-1j * k * theta)]
            else:
                vals[sl] = _pi_su2(two_k, g).ravel()
        return vals

    def evaluate_modes(self, g) -> np.ndarray:
        """Values of the real basis functions at a group element."""
        vals = self.b_mat @ self.evaluate_cplx_modes(g)
        assert np.max(np.abs(vals.imag), initial=0.0) < 1e-9
        return vals.real

    def left_translation_matrix(self, g0) -> np.ndarray:
        """Real matrix L with (L a) the coefficients of g -> f(g0 g)."""
        g0 = check_group_element(self.group, g0)
        op = np.zeros((self.n_modes, self.n_modes), dtype=complex)
        for two_k, sl in self.blocks:
            if self.group == "U1":
                k = two_k // 2
                if k == 0:
                    op[sl, sl] = 1.0
                else:
                    idx = np.arange(sl.start, sl.stop)
                    op[idx, idx] = [g0**k, g0**(-k)]
            else:
                pi = _pi_su2(two_k, g0)
                dim = two_k + 1
                op[sl, sl] = np.kron(pi.T, np.eye(dim))
        real_op = self.v_mat @ op @ self.b_mat.T
        assert np.max(np.abs(real_op.imag), initial=0.0) < 1e-10
        return real_op.real

    # -- complex-mode constructors (oracle helpers) --------------------------

    def complex_mode(self, label) -> np.ndarray:
        """Complex coefficient vector (real basis) of e^{ik th} or D^j_{m m'}."""
        idx = self.cplx_labels.index(label)
        c = np.zeros(self.n_modes, dtype=complex)
        c[idx] = 1.0
        return self.v_mat @ c

    def mode_degree(self, coeffs: np.ndarray) -> int:
        """Largest block index (2|k| or 2j) carrying a nonzero coefficient."""
        coeffs = np.asarray(coeffs)
        nz = np.abs(coeffs) > 0
        collapsed = nz.reshape(-1, self.n_modes).any(axis=0)
        if not collapsed.any():
            return 0
        return int(self.block_of_mode[collapsed].max())

    def rho_apply(self, coeffs: np.ndarray, j: int) -> np.ndarray:
        """Vertical derivative along generator j on a (..., M) coefficient array."""
        return np.einsum("pq,...q->...p", self.rho[j], coeffs)

    def haar(self, coeffs: np.ndarray):
        """Normalized Haar integral: the constant-mode coefficient."""
        return np.asarray(coeffs)[..., 0]


def _build_u1(K: int) -> FiberBasis:
    labels = [("const",)]
    cplx_labels = [0]
    blocks = [(0, slice(0, 1))]
    b_rows = [np.array([1.0 + 0j])]
    pos = 1
    for k in range(1, K + 1):
        labels += [("cos", k), ("sin", k)]
        cplx_labels += [k, -k]
        blocks.append((2 * k, slice(pos, pos + 2)))
        pos += 2
    M = pos
    b = np.zeros((M, M), dtype=complex)
    b[0, 0] = 1.0
    row = 1
    for k in range(1, K + 1):
        i_k = cplx_labels.index(k)
        i_mk = cplx_labels.index(-k)
        b[row, i_k] = b[row, i_mk] = 1 / np.sqrt(2)          # sqrt2 cos
        b[row + 1, i_k] = -1j / np.sqrt(2)                    # sqrt2 sin
        b[row + 1, i_mk] = 1j / np.sqrt(2)
        row += 2
    v = np.conj(b)  # b is unitary here (Gram of e^{ik th} is the identity)
    rho_c = np.zeros((1, M, M), dtype=complex)
    for idx, k in enumerate(cplx_labels):
        rho_c[0, idx, idx] = 1j * k
    rho = v @ rho_c[0] @ b.T
    assert np.max(np.abs(rho.imag), initial=0.0) < _CONSTRUCTION_TOL
    rho = np.real(rho)[None]
    rho = 0.5 * (rho - np.swapaxes(rho, -1, -2))  # enforce exact skewness
    block_of_mode = np.array([0] + sum(([2 * k, 2 * k] for k in range(1, K + 1)), []))
    return FiberBasis(
        group="U1", two_trunc=2 * K, r=1, n_modes=M, labels=tuple(labels),
        blocks=tuple(blocks), cplx_labels=tuple(cplx_labels), b_mat=b, v_mat=v,
        rho=rho, block_of_mode=block_of_mode,
    )


def _build_su2(two_jmax: int) -> FiberBasis:
    labels = []
    cplx_labels = []
    blocks = []
    b_blocks = []
    rho_blocks = []
    block_of_mode = []
    pos = 0
    for two_j in range(0, two_jmax + 1):
        dim = two_j + 1
        n = dim * dim
        m_vals = np.arange(two_j, -two_j - 2, -2)  # 2m, descending
        for m2 in m_vals:
            for mp2 in m_vals:
                cplx_labels.append((two_j, int(m2), int(mp2)))
        blocks.append((two_j, slice(pos, pos + n)))
        # real combinations within the block
        bb = np.zeros((n, n), dtype=complex)
        row = 0
        scale = np.sqrt(2 * (two_j + 1.0))
        for im in range(dim):
            for imp in range(dim):
                p = im * dim + imp
                pbar = (two_j - im) * dim + (two_j - imp)
                if p > pbar:
                    continue
                m2 = int(m_vals[im])
                mp2 = int(m_vals[imp])
                if p == pbar:
                    bb[row, p] = np.sqrt(two_j + 1.0)
                    labels.append(("center", two_j, m2, mp2))
                    block_of_mode.append(two_j)
                    row += 1
                else:
                    sigma = (-1.0) ** ((mp2 - m2) // 2)
                    bb[row, p] = scale / 2
                    bb[row, pbar] = sigma * scale / 2
                    labels.append(("re", two_j, m2, mp2))
                    bb[row + 1, p] = -1j * scale / 2
                    bb[row + 1, pbar] = 1j * sigma * scale / 2
                    labels.append(("im", two_j, m2, mp2))
                    block_of_mode += [two_j, two_j]
                    row += 2
        assert row == n
        gram = bb @ bb.conj().T
        assert np.max(np.abs(gram - (two_j + 1.0) * np.eye(n))) < 1e-10, \
            "real-basis construction lost orthonormality (conjugation phase?)"
        b_blocks.append(bb)
        # vertical derivative on coefficients: (rho c)[(m,mu)] = A[mu,m'] c[(m,m')]
        # with A = dpi_j(t_k), i.e. kron(I, A) on the row-major flattening
        a = _dpi(two_j) if two_j else np.zeros((3, 1, 1), dtype=complex)
        rho_c = np.stack([np.kron(np.eye(dim), a[k]) for k in range(3)])
        rho_blocks.append(rho_c)
        pos += n
    M = pos
    b = np.zeros((M, M), dtype=complex)
    rho_cplx = np.zeros((3, M, M), dtype=complex)
    v = np.zeros((M, M), dtype=complex)
    for (two_j, sl), bb, rc in zip(blocks, b_blocks, rho_blocks):
        b[sl, sl] = bb
        v[sl, sl] = np.conj(bb) / (two_j + 1.0)
        rho_cplx[:, sl, sl] = rc
    rho = np.einsum("pq,kqs,st->kpt", v, rho_cplx, b.T)
    assert np.max(np.abs(rho.imag), initial=0.0) < 1e-10
    rho = np.real(rho)
    rho = 0.5 * (rho - np.swapaxes(rho, -1, -2))  # exact skewness
    assert np.max(np.abs(rho[:, 0, :]), initial=0.0) == 0.0  # Haar . rho = 0
    return FiberBasis(
        group="SU2", two_trunc=two_jmax, r=3, n_modes=M, labels=tuple(labels),
        blocks=tuple(blocks), cplx_labels=tuple(cplx_labels), b_mat=b, v_mat=v,
        rho=rho, block_of_mode=np.array(block_of_mode),
    )


@lru_cache(maxsize=None)
def _get_basis_cached(group: str, two_trunc: int) -> FiberBasis:
    if group == "U1":
        return _build_u1(two_trunc // 2)
    if group == "SU2":
        return _build_su2(two_trunc)
    raise ValueError(f"unsupported fiber group {group!r}")


def get_basis(group: str, truncation) -> FiberBasis:
    """Basis for the group at the given truncation (K for U1, j_max for SU2)."""
    if group == "U1":
        two = 2 * int(truncation)
    else:
        two = int(round(2 * float(truncation)))
    if two < 0:
        raise ValueError("truncation must be nonnegative")
    return _get_basis_cached(group, two)


def get_basis_two(group: str, two_trunc: int) -> FiberBasis:
    """Basis addressed by the internal doubled truncation (2K or 2 j_max)."""
    if two_trunc < 0:
        raise ValueError("truncation must be nonnegative")
    return _get_basis_cached(group, int(two_trunc))


# ---------------------------------------------------------------------------
# products
# ---------------------------------------------------------------------------

_PRODUCT_CACHE: dict = {}


def product_tensor(b1: FiberBasis, b2: FiberBasis, out: FiberBasis) -> np.ndarray:
    """T[c, a, b] with (f g)_c = T[c, a, b] f_a g_b, exact up to the out truncation."""
    if not (b1.group == b2.group == out.group):
        raise ValueError("fiber bases belong to different groups")
    key = (b1.group, b1.two_trunc, b2.two_trunc, out.two_trunc)
    if key in _PRODUCT_CACHE:
        return _PRODUCT_CACHE[key]
    T = np.zeros((out.n_modes, b1.n_modes, b2.n_modes), dtype=complex)
    if b1.group == "U1":
        for k1 in b1.cplx_labels:
            for k2 in b2.cplx_labels:
                k = k1 + k2
                if k in out.cplx_labels:
                    T[out.cplx_labels.index(k), b1.cplx_labels.index(k1),
                      b2.cplx_labels.index(k2)] = 1.0
    else:
        out_slices = dict(out.blocks)
        for two_j1, sl1 in b1.blocks:
            d1 = two_j1 + 1
            for two_j2, sl2 in b2.blocks:
                d2 = two_j2 + 1
                cg = _cg_isometry(two_j1, two_j2)
                for two_J, w in cg.items():
                    if two_J not in out_slices:
                        continue
                    dJ = two_J + 1
                    # D^{j1}_{m1 k1} D^{j2}_{m2 k2}
                    #   = sum_{M K} W[M,(m1 m2)] W[K,(k1 k2)] D^J_{M K};
                    # reorder (m1 m2 k1 k2) -> ((m1 k1), (m2 k2))
                    blockT = np.einsum("Mx,Ky->MKxy", w, w)
                    blockT = blockT.reshape(dJ * dJ, d1, d2, d1, d2)
                    blockT = blockT.transpose(0, 1, 3, 2, 4).reshape(
                        dJ * dJ, d1 * d1, d2 * d2
                    )
                    T[out_slices[two_J], sl1, sl2] += blockT
    # to the real bases: a_out = V_out T (B1^T a1)(B2^T a2)
    Treal = np.einsum("go,opq,pa,qc->gac", out.v_mat, T, b1.b_mat.T, b2.b_mat.T,
                      optimize=True)
    assert np.max(np.abs(Treal.imag), initial=0.0) < 1e-10
    Treal = np.ascontiguousarray(Treal.real)
    Treal.setflags(write=False)
    _PRODUCT_CACHE[key] = Treal
    return Treal


def multiply_arrays(b1: FiberBasis, A, b2: FiberBasis, B, out: FiberBasis):
    """Pointwise product of (..., M) coefficient arrays; returns (result, lossy)."""
    T = product_tensor(b1, b2, out)
    res = np.einsum("gac,...a,...c->...g", T, np.asarray(A), np.asarray(B))
    lossy = b1.mode_degree(A) + b2.mode_degree(B) > out.two_trunc
    return res, lossy


# ---------------------------------------------------------------------------
# FiberFunction and the module-level operation surface
# ---------------------------------------------------------------------------

class FiberFunction:
    """A function on the fiber group in the real spectral basis.

    Immutable value type; `coeffs` is a length-M float or complex array
    (complex only for oracle helpers such as single Wigner entries).
    """

    __slots__ = ("basis", "coeffs", "lossy")

    def __init__(self, basis: FiberBasis, coeffs, lossy: bool = False):
        coeffs = np.asarray(coeffs)
        if coeffs.shape != (basis.n_modes,):
            raise ValueError(f"expected {basis.n_modes} coefficients, got {coeffs.shape}")
        if not np.iscomplexobj(coeffs):
            coeffs = coeffs.astype(float)
        self.basis = basis
        self.coeffs = coeffs
        self.coeffs.setflags(write=False)
        self.lossy = lossy

    @staticmethod
    def constant(basis: FiberBasis, value=1.0) -> "FiberFunction":
        c = np.zeros(basis.n_modes)
        c[0] = value
        return FiberFunction(basis, c)

    @staticmethod
    def from_complex_mode(basis: FiberBasis, label) -> "FiberFunction":
        return FiberFunction(basis, basis.complex_mode(label))

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.coeffs) or bool(
            np.max(np.abs(self.coeffs.imag), initial=0.0) < 1e-14
        )

    def conj(self) -> "FiberFunction":
        return FiberFunction(self.basis, np.conj(self.coeffs), self.lossy)

    def __add__(self, other):
        return FiberFunction(self.basis, self.coeffs + other.coeffs,
                             self.lossy or other.lossy)

    def __sub__(self, other):
        return FiberFunction(self.basis, self.coeffs - other.coeffs,
                             self.lossy or other.lossy)

    def __mul__(self, scalar):
        return FiberFunction(self.basis, self.coeffs * scalar, self.lossy)

    __rmul__ = __mul__

    def norm(self) -> float:
        """L2 norm under the normalized Haar measure (basis is orthonormal)."""
        return float(np.linalg.norm(self.coeffs))


def vertical_derivative(f: FiberFunction, j: int) -> FiberFunction:
    """rho_j f: derivative along the right-invariant vertical field of t_j."""
    if not 0 <= j < f.basis.r:
        raise ValueError(f"generator index {j} out of range for r = {f.basis.r}")
    return FiberFunction(f.basis, f.basis.rho_apply(f.coeffs, j), f.lossy)


def haar_integral(f: FiberFunction):
    """Normalized Haar integral (total volume 1): the constant-mode coefficient."""
    val = f.coeffs[0]
    return complex(val) if np.iscomplexobj(f.coeffs) else float(val)


def multiply(f: FiberFunction, g: FiberFunction, out_truncation=None) -> FiberFunction:
    """Pointwise product projected to `out_truncation` (defaults to f's).

    Exact when deg(f) + deg(g) fits in the output basis; the result carries a
    `lossy` flag otherwise.
    """
    if f.basis.group != g.basis.group:
        raise ValueError("cannot multiply functions on different groups")
    out = f.basis if out_truncation is None else get_basis(f.basis.group, out_truncation)
    res, lossy = multiply_arrays(f.basis, f.coeffs, g.basis, g.coeffs, out)
    return FiberFunction(out, res, lossy or f.lossy or g.lossy)


def evaluate(f: FiberFunction, g):
    """Value of f at a group element (validated); the spot-check oracle."""
    vals = f.basis.evaluate_modes(g)
    out = np.sum(f.coeffs * vals)
    return complex(out) if np.iscomplexobj(f.coeffs) else float(out)


def adjoint_matrix_function(basis: FiberBasis, spec: LieAlgebraSpec) -> np.ndarray:
    """Coefficients (r, r, M) of M^i_j(g) with Ad_{g^-1} t_j = M^i_j(g) t_i.

    U(1): the constant identity.  SU(2): the spin-1 matrix entries, projected
    onto the real basis by least squares on a fixed deterministic sample set
    (residual asserted < 1e-12, so the expansion is exact to roundoff).
    """
    if basis.group == "U1":
        if spec.r != 1 or np.max(np.abs(spec.c), initial=0.0) != 0.0:
            raise ValueError("U1 fiber requires the 1-dimensional abelian algebra")
        out = np.zeros((1, 1, basis.n_modes))
        out[0, 0, 0] = 1.0
        return out
    if spec.r != 3 or not np.allclose(spec.c, su2_spec().c, atol=1e-12):
        raise ValueError("SU2 fiber requires structure constants c^k_ij = eps_ijk")
    if basis.two_trunc < 2:
        raise ValueError("SU2 adjoint needs j_max >= 1 in the fiber truncation")
    return _su2_adjoint_coeffs(basis.two_trunc)


@lru_cache(maxsize=None)
def _su2_adjoint_coeffs(two_trunc: int) -> np.ndarray:
    basis = _get_basis_cached("SU2", two_trunc)
    rng = np.random.default_rng(20240251)
    samples = [su2_exp(v) for v in rng.normal(scale=1.4, size=(60, 3))]
    design = np.array([basis.evaluate_modes(g) for g in samples])
    targets = np.array([group_adjoint("SU2", g).T for g in samples])  # Ad_{g^-1} = Ad_g^T
    out = np.zeros((3, 3, basis.n_modes))
    for i in range(3):
        for j in range(3):
            rhs = targets[:, i, j]
            coef, *_ = np.linalg.lstsq(design, rhs, rcond=None)
            resid = float(np.max(np.abs(design @ coef - rhs), initial=0.0))
            assert resid < 1e-12, f"adjoint entry ({i},{j}) projection residual {resid:g}"
            coef[np.abs(coef) < 1e-13] = 0.0
            out[i, j] = coef
    out.setflags(write=False)
    return out
