"""Graded exterior algebra over the coframe of a trivialized principal bundle.

Generators are the base coframe ``b(a)`` (a = 0..n-1), the fiber coframe
``g(i)`` (i = 0..r-1) and the formal frame-connection 1-forms ``w(a, b)``
(stored with a < b; ``w(b, a)`` is ``-w(a, b)`` and ``w(a, a) = 0``).  All
generators are odd.  Words are kept sorted in the fixed global order
b(0) < ... < b(n-1) < g(0) < ... < g(r-1) < w(0,1) < ... with the sign
tracked by permutation parity.

The exterior derivative is structural:

    d b(a) = -sum_b w(a, b) ^ b(b)          (torsion-free frame)
    d g(i) = -1/2 c^i_jk g(j) ^ g(k)        (Maurer-Cartan)
    d w(a, b)  undefined -> UnsupportedDerivative

``w`` is formal: interior products never evaluate it, and forms containing a
``w`` generator reject both d and interior products that would need it.

Coefficients stay exact (fractions.Fraction) whenever the inputs are
rational, so identity checks are exact rather than approximate.

Known typos in the source identities, handled here: the printed definition of
gamma_ij contracts rho_j twice (identically zero); we use
gamma_ij = rho_j . (rho_i . gamma) by analogy with beta_ab.  The printed
right-hand side of the d(beta_ab) identity ends in a type-inconsistent
2-form wedge; the verified identity is
d beta_ab = w^c_a ^ beta_cb + w^c_b ^ beta_ac, which is what the proof yields.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .lie_core import LieAlgebraSpec, rational_structure_constants

__all__ = [
    "Form",
    "UnsupportedDerivative",
    "b",
    "g",
    "w",
    "wedge",
    "d",
    "interior",
    "top_beta",
    "top_gamma",
    "beta_down",
    "beta_down2",
    "gamma_down",
    "gamma_down2",
    "verify_identities",
    "IdentityReport",
]


class UnsupportedDerivative(ValueError):
    """Raised when d or an interior product would need d(w) or w(v)."""


# generators are tuples: ("b", a), ("g", i), ("w", a, b) with a < b
def _gen_key(gen):
    kind = gen[0]
    return {"b": (0,) + gen[1:], "g": (1,) + gen[1:], "w": (2,) + gen[1:]}[kind]


def _sort_word(word):
    """Canonical order of a generator tuple; returns (sign, word) or (0, None) on repeats."""
    word = list(word)
    sign = 1
    # insertion sort tracking parity; words are short
    for i in range(1, len(word)):
        j = i
        while j > 0 and _gen_key(word[j - 1]) > _gen_key(word[j]):
            word[j - 1], word[j] = word[j], word[j - 1]
            sign = -sign
            j -= 1
    for a, bb in zip(word, word[1:]):
        if a == bb:
            return 0, None
    return sign, tuple(word)


class Form:
    """A graded-algebra element: mapping from canonical words to scalar coefficients."""

    __slots__ = ("terms",)

    def __init__(self, terms=None):
        self.terms = {}
        if terms:
            for word, coeff in terms.items():
                if coeff:
                    self.terms[word] = self.terms.get(word, 0) + coeff
            self.terms = {k: v for k, v in self.terms.items() if v}

    @staticmethod
    def zero() -> "Form":
        return Form()

    @staticmethod
    def scalar(value) -> "Form":
        return Form({(): value}) if value else Form()

    @staticmethod
    def generator(gen) -> "Form":
        return Form({(gen,): Fraction(1)})

    def is_zero(self) -> bool:
        return not self.terms

    def max_abs(self) -> float:
        return max((abs(float(c)) for c in self.terms.values()), default=0.0)

    def __add__(self, other: "Form") -> "Form":
        out = dict(self.terms)
        for word, coeff in other.terms.items():
            out[word] = out.get(word, 0) + coeff
        return Form(out)

    def __sub__(self, other: "Form") -> "Form":
        return self + other.scale(-1)

    def scale(self, s) -> "Form":
        if not s:
            return Form()
        return Form({word: coeff * s for word, coeff in self.terms.items()})

    def __eq__(self, other) -> bool:
        return isinstance(other, Form) and self.terms == other.terms

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def __repr__(self):
        if not self.terms:
            return "Form(0)"
        bits = []
        for word, coeff in sorted(self.terms.items(), key=lambda kv: [_gen_key(x) for x in kv[0]]):
            label = "^".join("%s%s" % (gen[0], gen[1:]) for gen in word) or "1"
            bits.append(f"{coeff}*{label}")
        return "Form(" + " + ".join(bits) + ")"


def b(a: int) -> Form:
    return Form.generator(("b", a))


def g(i: int) -> Form:
    return Form.generator(("g", i))


def w(a: int, bb: int) -> Form:
    """Frame connection 1-form w^a_b; antisymmetry is applied on construction."""
    if a == bb:
        return Form.zero()
    if a < bb:
        return Form.generator(("w", a, bb))
    return Form.generator(("w", bb, a)).scale(-1)


def wedge(*forms: Form) -> Form:
    out = Form.scalar(Fraction(1))
    for f in forms:
        acc = {}
        for w1, c1 in out.terms.items():
            for w2, c2 in f.terms.items():
                sign, word = _sort_word(w1 + w2)
                if sign:
                    acc[word] = acc.get(word, 0) + sign * c1 * c2
        out = Form(acc)
    return out


def d(form: Form, spec: LieAlgebraSpec, n: int | None = None) -> Form:
    """Exterior derivative by the structural rules, extended as a graded derivation.

    ``n`` is the base dimension, needed because d b(a) sums w(a, b) over all
    base indices; it defaults to the largest base index present in the form.
    """
    crat = rational_structure_constants(spec)
    if n is None:
        n = max((gen[1] for word in form.terms for gen in word if gen[0] == "b"), default=-1) + 1

    def d_gen(gen) -> Form:
        kind = gen[0]
        if kind == "b":
            a = gen[1]
            out = Form()
            for bb in range(n):
                if bb != a:
                    out = out + wedge(w(a, bb), b(bb)).scale(-1)
            return out
        if kind == "g":
            i = gen[1]
            acc = Form()
            for (k, jj, kk), cval in crat.items():
                if k == i:
                    half = Fraction(1, 2) if isinstance(cval, Fraction) else 0.5
                    acc = acc + wedge(g(jj), g(kk)).scale(-half * cval)
            return acc
        raise UnsupportedDerivative(f"d(w^{gen[1]}_{gen[2]}) is not defined in this engine")

    out = Form()
    for word, coeff in form.terms.items():
        for k, gen in enumerate(word):
            dg = d_gen(gen)
            prefix = Form({word[:k]: Fraction(1)})
            suffix = Form({word[k + 1:]: Fraction(1)})
            out = out + wedge(prefix, dg, suffix).scale((-1) ** k * coeff)
    return out


def interior(vector, form: Form) -> Form:
    """Interior product with a frame vector ("e", a) or ("rho", i).

    Graded antiderivation with b(a)(e_b) = delta, g(i)(rho_j) = delta and the
    cross pairings zero.  Words containing a w generator are rejected because
    w(v) is kept formal.
    """
    kind, idx = vector

    def pair(gen):
        if gen[0] == "w":
            raise UnsupportedDerivative("interior product would evaluate the formal w^a_b")
        if gen[0] == "b" and kind == "e":
            return 1 if gen[1] == idx else 0
        if gen[0] == "g" and kind == "rho":
            return 1 if gen[1] == idx else 0
        return 0

    out = {}
    for word, coeff in form.terms.items():
        if any(gen[0] == "w" for gen in word):
            raise UnsupportedDerivative("interior product on a form containing w^a_b")
        for k, gen in enumerate(word):
            val = pair(gen)
            if val:
                rest = word[:k] + word[k + 1:]
                sgn = (-1) ** k
                out[rest] = out.get(rest, 0) + sgn * val * coeff
    return Form(out)


def top_beta(n: int) -> Form:
    return wedge(*[b(a) for a in range(n)]) if n else Form.scalar(Fraction(1))


def top_gamma(r: int) -> Form:
    return wedge(*[g(i) for i in range(r)]) if r else Form.scalar(Fraction(1))


def beta_down(a: int, n: int) -> Form:
    """beta_a = e_a . beta, an (n-1)-form."""
    return interior(("e", a), top_beta(n))


def beta_down2(a: int, bb: int, n: int) -> Form:
    """beta_ab = e_b . (e_a . beta)."""
    return interior(("e", bb), interior(("e", a), top_beta(n)))


def gamma_down(i: int, r: int) -> Form:
    """gamma_i = rho_i . gamma."""
    return interior(("rho", i), top_gamma(r))


def gamma_down2(i: int, j: int, r: int) -> Form:
    """gamma_ij = rho_j . (rho_i . gamma); see the module docstring on the index order."""
    return interior(("rho", j), interior(("rho", i), top_gamma(r)))


@dataclass
class IdentityReport:
    """Defect forms for the coframe identity suite, keyed by identity name.

    Every entry maps an index tuple to its defect Form.  A defect must be the
    zero form; `dgamma_corollary` records d(gamma_i) itself, which vanishes
    iff the algebra is unimodular (otherwise it equals -tr(ad_i) gamma).
    """

    n: int
    r: int
    defects: dict

    def max_abs(self) -> float:
        return max(
            (form.max_abs() for entry in self.defects.values() for form in entry.values()),
            default=0.0,
        )

    def all_zero(self, include_corollary: bool = False) -> bool:
        for name, entry in self.defects.items():
            if name == "dgamma_corollary" and not include_corollary:
                continue
            if any(not form.is_zero() for form in entry.values()):
                return False
        return True

    def to_dict(self) -> dict:
        out = {"n": self.n, "r": self.r, "identities": {}}
        for name, entry in self.defects.items():
            out["identities"][name] = {
                "max_abs_defect": max((f.max_abs() for f in entry.values()), default=0.0),
                "zero": all(f.is_zero() for f in entry.values()),
            }
        out["all_zero"] = self.all_zero()
        return out


def verify_identities(spec: LieAlgebraSpec, n: int) -> IdentityReport:
    """Machine-check the coframe pairing and differentiation identities.

    Checks, as exact forms: beta/gamma pairing relations, the d(gamma_i) lemma
    with its trace term, d(beta_a) = w^b_a ^ beta_b and the corrected
    d(beta_ab) identity.  Also records d(gamma_i) alone (the unimodular
    corollary).
    """
    if n < 2:
        raise ValueError("base dimension n must be >= 2")
    r = spec.r
    beta = top_beta(n)
    gamma = top_gamma(r)
    tr = spec.trace_ad
    tr_rat = []
    for i in range(r):
        fr = Fraction(float(tr[i])).limit_denominator(10**6)
        if float(fr) != float(tr[i]):
            raise ValueError("trace of ad is not exactly rational")
        tr_rat.append(fr)

    defects: dict = {}

    ent = {}
    for a in range(n):
        for bb in range(n):
            delta = Fraction(1) if a == bb else Fraction(0)
            ent[(a, bb)] = wedge(b(a), beta_down(bb, n)) - beta.scale(delta)
    defects["beta_pairing"] = ent

    ent = {}
    for a in range(n):
        for bb in range(n):
            for cc in range(n):
                for dd in range(n):
                    coef = Fraction((a == cc) * (bb == dd) - (a == dd) * (bb == cc))
                    ent[(a, bb, cc, dd)] = (
                        wedge(b(a), b(bb), beta_down2(cc, dd, n)) - beta.scale(coef)
                    )
    defects["beta_double_pairing"] = ent

    ent = {}
    for i in range(r):
        for j in range(r):
            delta = Fraction(1) if i == j else Fraction(0)
            ent[(i, j)] = wedge(g(i), gamma_down(j, r)) - gamma.scale(delta)
    defects["gamma_pairing"] = ent

    ent = {}
    for i in range(r):
        for j in range(r):
            for k in range(r):
                for ll in range(r):
                    coef = Fraction((i == k) * (j == ll) - (i == ll) * (j == k))
                    ent[(i, j, k, ll)] = (
                        wedge(g(i), g(j), gamma_down2(k, ll, r)) - gamma.scale(coef)
                    )
    defects["gamma_double_pairing"] = ent

    # d gamma_i + tr(ad_i) gamma = 0 (holds for every algebra)
    ent = {}
    coro = {}
    for i in range(r):
        dgi = d(gamma_down(i, r), spec, n)
        ent[(i,)] = dgi + gamma.scale(tr_rat[i])
        coro[(i,)] = dgi
    defects["dgamma_lemma"] = ent
    defects["dgamma_corollary"] = coro

    # d beta_a = w^b_a ^ beta_b
    ent = {}
    for a in range(n):
        rhs = Form()
        for bb in range(n):
            rhs = rhs + wedge(w(bb, a), beta_down(bb, n))
        ent[(a,)] = d(beta_down(a, n), spec, n) - rhs
    defects["dbeta_a"] = ent

    # d beta_ab = w^c_a ^ beta_cb + w^c_b ^ beta_ac  (corrected right-hand side)
    ent = {}
    for a in range(n):
        for bb in range(n):
            rhs = Form()
            for cc in range(n):
                rhs = rhs + wedge(w(cc, a), beta_down2(cc, bb, n))
                rhs = rhs + wedge(w(cc, bb), beta_down2(a, cc, n))
            ent[(a, bb)] = d(beta_down2(a, bb, n), spec, n) - rhs
    defects["dbeta_ab"] = ent

    return IdentityReport(n=n, r=r, defects=defects)
