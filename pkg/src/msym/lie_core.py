"""Finite-dimensional Lie algebra arithmetic.

Conventions
-----------
A Lie algebra of dimension ``r`` is described by structure constants
``c[k, i, j]`` with ``[t_i, t_j] = c^k_ij t_k`` and an invariant metric
``h[i, j]``.  Vectors carry upper indices (components ``xi^i``), covectors
lower ones (``ell_i``).  The coadjoint map follows the duality convention
``(ad*_x ell)(y) = ell([x, y])``.

Built-in algebras are derived from explicit matrix bases through a
commutator oracle (never hard-coded), see :func:`u1`, :func:`su2`,
:func:`u1_su2`, :func:`aff1`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

__all__ = [
    "LieAlgebraSpec",
    "SpecDiagnostics",
    "bracket",
    "ad_matrix",
    "ad_star",
    "metric_lower",
    "metric_raise",
    "unimodularity_defect",
    "validate_spec",
    "spec_from_matrices",
    "u1",
    "su2",
    "u1_su2",
    "aff1",
    "load_spec",
    "save_spec",
    "rational_structure_constants",
]

#: acceptance threshold for the algebraic invariants of a spec
INVARIANT_TOL = 1e-12


@dataclass(frozen=True)
class LieAlgebraSpec:
    """Structure constants and invariant metric of a finite-dimensional Lie algebra.

    Immutable after construction; safe to share across threads.
    """

    r: int
    c: np.ndarray  # (r, r, r), c[k, i, j] = c^k_ij
    h: np.ndarray  # (r, r), symmetric nondegenerate
    label: str = "unnamed"
    h_inv: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        c = np.ascontiguousarray(np.asarray(self.c, dtype=float))
        h = np.ascontiguousarray(np.asarray(self.h, dtype=float))
        if c.shape != (self.r, self.r, self.r):
            raise ValueError(f"structure constants must have shape {(self.r,)*3}, got {c.shape}")
        if h.shape != (self.r, self.r):
            raise ValueError(f"metric must have shape {(self.r, self.r)}, got {h.shape}")
        if abs(np.linalg.det(h)) < 1e-12:
            raise ValueError("metric h is singular")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "h_inv", np.linalg.inv(h))
        c.setflags(write=False)
        h.setflags(write=False)
        self.h_inv.setflags(write=False)

    @property
    def trace_ad(self) -> np.ndarray:
        """tr(ad_{t_i}) = c^j_ij for i = 1..r; all-zero iff unimodular."""
        return np.einsum("jij->i", self.c)

    def is_unimodular(self, tol: float = INVARIANT_TOL) -> bool:
        return bool(np.max(np.abs(self.trace_ad), initial=0.0) <= tol)


def _check_dim(spec: LieAlgebraSpec, *vecs) -> None:
    for v in vecs:
        if np.shape(v)[-1] != spec.r:
            raise ValueError(f"dimension mismatch: expected last axis {spec.r}, got {np.shape(v)}")


def bracket(spec: LieAlgebraSpec, x, y) -> np.ndarray:
    """[x, y]^k = c^k_ij x^i y^j.  Broadcasts over leading axes."""
    x = np.asarray(x)
    y = np.asarray(y)
    _check_dim(spec, x, y)
    return np.einsum("kij,...i,...j->...k", spec.c, x, y)


def ad_matrix(spec: LieAlgebraSpec, x) -> np.ndarray:
    """Matrix of ad_x, (ad_x)^k_j = c^k_ij x^i."""
    x = np.asarray(x)
    _check_dim(spec, x)
    return np.einsum("kij,i->kj", spec.c, x)


def ad_star(spec: LieAlgebraSpec, x, ell) -> np.ndarray:
    """Coadjoint action, (ad*_x ell)_j = c^k_ij x^i ell_k (transpose of ad_x)."""
    x = np.asarray(x)
    ell = np.asarray(ell)
    _check_dim(spec, x, ell)
    return np.einsum("kij,...i,...k->...j", spec.c, x, ell)


def metric_lower(spec: LieAlgebraSpec, xi) -> np.ndarray:
    """h_*: g -> g*, (h_* xi)_i = h_ij xi^j."""
    xi = np.asarray(xi)
    _check_dim(spec, xi)
    return np.einsum("ij,...j->...i", spec.h, xi)


def metric_raise(spec: LieAlgebraSpec, ell) -> np.ndarray:
    """h^*: g* -> g, inverse of :func:`metric_lower`."""
    ell = np.asarray(ell)
    _check_dim(spec, ell)
    return np.einsum("ij,...j->...i", spec.h_inv, ell)


def unimodularity_defect(spec: LieAlgebraSpec) -> np.ndarray:
    """The covector tr(ad_{t_i}); identically zero iff the algebra is unimodular."""
    return spec.trace_ad


@dataclass(frozen=True)
class SpecDiagnostics:
    antisymmetry: float
    jacobi: float
    h_ad_invariance: float

    @property
    def max_defect(self) -> float:
        return max(self.antisymmetry, self.jacobi, self.h_ad_invariance)

    def ok(self, tol: float = INVARIANT_TOL) -> bool:
        return self.max_defect <= tol

    def failures(self, tol: float = INVARIANT_TOL) -> list[str]:
        return [
            name
            for name, val in [
                ("antisymmetry", self.antisymmetry),
                ("jacobi", self.jacobi),
                ("h_ad_invariance", self.h_ad_invariance),
            ]
            if val > tol
        ]


def validate_spec(spec: LieAlgebraSpec) -> SpecDiagnostics:
    """Maximum absolute defects of antisymmetry, Jacobi, and ad-invariance of h."""
    c = spec.c
    anti = float(np.max(np.abs(c + c.transpose(0, 2, 1)), initial=0.0))
    # sum_m (c^m_ij c^l_mk + c^m_jk c^l_mi + c^m_ki c^l_mj) = 0
    t = np.einsum("mij,lmk->lijk", c, c)
    jac = t + t.transpose(0, 2, 3, 1) + t.transpose(0, 3, 1, 2)
    jacobi = float(np.max(np.abs(jac), initial=0.0))
    # h([t_i, t_j], t_k) + h(t_j, [t_i, t_k]) = 0
    hb = np.einsum("lij,lk->ijk", c, spec.h)
    inv = float(np.max(np.abs(hb + hb.transpose(0, 2, 1)), initial=0.0))
    return SpecDiagnostics(anti, jacobi, inv)


# ---------------------------------------------------------------------------
# construction from a matrix basis (the commutator oracle)
# ---------------------------------------------------------------------------

def spec_from_matrices(mats, h=None, label="unnamed", require_valid=True) -> LieAlgebraSpec:
    """Build a spec from a list of basis matrices via the commutator oracle.

    Structure constants are obtained by expanding every ``[t_i, t_j]`` in the
    given basis (least squares on the flattened matrices, with the expansion
    residual checked against INVARIANT_TOL, so the basis must be closed under
    commutators).
    """
    mats = [np.asarray(m, dtype=complex) for m in mats]
    r = len(mats)
    basis = np.stack([m.ravel() for m in mats], axis=1)  # (dim*dim, r)
    # real/imag split keeps lstsq real-valued and well conditioned
    design = np.vstack([basis.real, basis.imag])
    c = np.zeros((r, r, r))
    for i in range(r):
        for j in range(r):
            comm = mats[i] @ mats[j] - mats[j] @ mats[i]
            rhs = np.concatenate([comm.ravel().real, comm.ravel().imag])
            coef, *_ = np.linalg.lstsq(design, rhs, rcond=None)
            # snap lstsq noise to nearby small rationals, then re-verify the
            # expansion against the matrix commutator so the oracle stays honest
            snapped = np.array(
                [float(Fraction(v).limit_denominator(720)) for v in coef], dtype=float
            )
            use = snapped if np.max(np.abs(snapped - coef), initial=0.0) < 1e-9 else coef
            resid = float(np.max(np.abs(design @ use - rhs), initial=0.0))
            if resid > 1e-10:
                raise ValueError(f"basis not closed under [t_{i+1}, t_{j+1}]: residual {resid:g}")
            c[:, i, j] = use
    c[np.abs(c) < 1e-13] = 0.0
    if h is None:
        h = np.eye(r)
    spec = LieAlgebraSpec(r=r, c=c, h=np.asarray(h, float), label=label)
    if require_valid:
        diag = validate_spec(spec)
        if not diag.ok():
            raise ValueError(f"matrix basis produced an invalid spec: {diag}")
    return spec


_SIGMA = [
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
]


def su2_generators() -> list[np.ndarray]:
    """t_k = -i sigma_k / 2, so that c^k_ij = epsilon_ijk."""
    return [-0.5j * s for s in _SIGMA]


def u1(label="u1") -> LieAlgebraSpec:
    return spec_from_matrices([np.array([[1j]])], h=np.eye(1), label=label)


def su2(h=None, label="su2") -> LieAlgebraSpec:
    return spec_from_matrices(su2_generators(), h=h, label=label)


def u1_su2(label="u1+su2") -> LieAlgebraSpec:
    mats = [np.zeros((3, 3), dtype=complex) for _ in range(4)]
    mats[0][0, 0] = 1j
    for k, t in enumerate(su2_generators()):
        mats[k + 1][1:, 1:] = t
    return spec_from_matrices(mats, h=np.eye(4), label=label)


def aff1(label="aff1") -> LieAlgebraSpec:
    """Affine algebra of the line, [t1, t2] = t2; the non-unimodular control case.

    The identity metric shipped here is deliberately *not* ad-invariant
    (aff(1) has none); validate_spec reports the defect.
    """
    t1 = np.array([[1.0, 0.0], [0.0, 0.0]], dtype=complex)
    t2 = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
    return spec_from_matrices([t1, t2], h=np.eye(2), label=label, require_valid=False)


BUILTIN_SPECS = {"u1": u1, "su2": su2, "u1+su2": u1_su2, "u1_su2": u1_su2, "aff1": aff1}


# ---------------------------------------------------------------------------
# JSON schema: {"label": str, "r": int, "c": [[[...]]] (c[k][i][j]), "h": [[...]]}
# ---------------------------------------------------------------------------

def load_spec(source) -> LieAlgebraSpec:
    """Load a spec from a JSON file path, a JSON string, or a builtin name."""
    if isinstance(source, str) and source in BUILTIN_SPECS:
        return BUILTIN_SPECS[source]()
    if isinstance(source, str) and source.lstrip().startswith("{"):
        doc = json.loads(source)
    else:
        with open(source) as fh:
            doc = json.load(fh)
    try:
        return LieAlgebraSpec(
            r=int(doc["r"]),
            c=np.asarray(doc["c"], dtype=float),
            h=np.asarray(doc["h"], dtype=float),
            label=str(doc.get("label", "unnamed")),
        )
    except KeyError as exc:
        raise ValueError(f"algebra JSON document missing field {exc}") from exc


def save_spec(spec: LieAlgebraSpec, path) -> None:
    doc = {"label": spec.label, "r": spec.r, "c": spec.c.tolist(), "h": spec.h.tolist()}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def rational_structure_constants(spec: LieAlgebraSpec, max_den: int = 10**6):
    """Structure constants as exact Fractions.

    Only valid when every float entry is an exactly-representable rational
    (true for all shipped algebras); raises otherwise so the exact exterior
    engine never silently rounds.
    """
    out = {}
    for (k, i, j), val in np.ndenumerate(spec.c):
        fr = Fraction(float(val)).limit_denominator(max_den)
        if float(fr) != float(val):
            raise ValueError(f"c^{k}_{i}{j} = {val!r} is not an exact rational")
        if fr:
            out[(k, i, j)] = fr
    return out
