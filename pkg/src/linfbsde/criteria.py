"""Well-posedness tests for constant-coefficient linear FBSDEs.

Every check returns a :class:`Verdict` whose evidence is a list of scalar
facts.  A fact with a relation (``"<="``, ``">"`` ...) is an inequality that
re-evaluates from the stored numbers; facts without one are informational.
"""
from __future__ import annotations

import math
import operator
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .core import CoeffMatrix, FBSDEError, LinearFBSDE, LQProblem, QuadraticForm3, terminal_singular
from .dominating import ZeroPolynomial, l_poly, real_roots

WELL_POSED = "WellPosed"
NOT_DECIDED = "NotDecided"
EXCLUDED = "ExcludedInput"

MINOR_MARGIN = 1e-10
POLE_EXCLUSION = 1e-9
POLE_BAND = 1e-12

_OPS = {
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
    "==": operator.eq,
}


class SingularTerminal(FBSDEError):
    pass


class NDegenerate(FBSDEError):
    pass


@dataclass(frozen=True)
class Evidence:
    name: str
    value: float
    relation: str | None = None
    bound: float = 0.0

    def holds(self) -> bool:
        if self.relation is None:
            return True
        return bool(_OPS[self.relation](self.value, self.bound))

    def to_record(self) -> dict:
        rec = {"name": self.name, "value": self.value}
        if self.relation is not None:
            rec["relation"] = self.relation
            rec["bound"] = self.bound
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "Evidence":
        return cls(rec["name"], rec["value"], rec.get("relation"), rec.get("bound", 0.0))

    def __str__(self) -> str:
        if self.relation is None:
            return f"{self.name}={self.value:.6g}"
        return f"{self.name}={self.value:.6g} {self.relation} {self.bound:.6g}"


@dataclass(frozen=True)
class Verdict:
    decided: str
    criterion: str
    evidence: tuple[Evidence, ...] = field(default_factory=tuple)

    @property
    def well_posed(self) -> bool:
        return self.decided == WELL_POSED

    def consistent(self) -> bool:
        """Stored inequalities reproduce the decision (all hold for WellPosed)."""
        if self.decided == WELL_POSED:
            return bool(self.criterion) and all(e.holds() for e in self.evidence)
        return True

    def value(self, name: str) -> float:
        for e in self.evidence:
            if e.name == name:
                return e.value
        raise KeyError(name)

    def to_record(self) -> dict:
        return {
            "decided": self.decided,
            "criterion": self.criterion,
            "evidence": [e.to_record() for e in self.evidence],
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Verdict":
        return cls(rec["decided"], rec["criterion"], tuple(Evidence.from_record(e) for e in rec["evidence"]))

    def __str__(self) -> str:
        facts = ", ".join(str(e) for e in self.evidence)
        return f"{self.decided} [{self.criterion}] {facts}"


# ---------------------------------------------------------------- Lemma 2.2


def symmetrize(c: CoeffMatrix) -> QuadraticForm3:
    """Symmetric matrix M with (x,y,z) M (x,y,z)^T equal to the form of rows (-f, b, s)."""
    return QuadraticForm3(
        -c.f1,
        (c.b1 - c.f2) / 2,
        (c.s1 - c.f3) / 2,
        c.b2,
        (c.s2 + c.b3) / 2,
        c.s3,
    )


def leading_minors(m: np.ndarray) -> tuple[float, ...]:
    return tuple(float(np.linalg.det(m[:k, :k])) if k > 1 else float(m[0, 0]) for k in range(1, m.shape[0] + 1))


def is_positive_definite(m: np.ndarray, margin: float = MINOR_MARGIN) -> bool:
    scale = max(1.0, float(np.max(np.abs(m))))
    return all(d > margin * scale**k for k, d in enumerate(leading_minors(m), start=1))


def min_eigenvalue(m: np.ndarray, tol: float = 1e-13) -> float:
    """Smallest eigenvalue of a symmetric matrix.

    Starts from the Gershgorin lower bound and bisects on the predicate
    "m - lam*I is positive definite", tested with leading minors.
    """
    n = m.shape[0]
    radii = np.sum(np.abs(m), axis=1) - np.abs(np.diag(m))
    lo = float(np.min(np.diag(m) - radii))
    hi = float(np.min(np.diag(m)))
    if lo == hi:
        return lo
    eye = np.eye(n)

    def pd(lam: float) -> bool:
        return all(d > 0 for d in leading_minors(m - lam * eye))

    while not pd(lo):
        lo -= max(1.0, abs(lo))
    while hi - lo > tol * max(1.0, abs(hi)):
        mid = 0.5 * (lo + hi)
        if pd(mid):
            lo = mid
        else:
            hi = mid
    return lo


def certify_betas(m: np.ndarray) -> tuple[float, float]:
    """Largest balanced (beta1, beta2) with m - diag(beta1, beta2, beta2) PSD.

    m must be positive definite.  For fixed beta2 below the smallest
    eigenvalue of the (y, z) block the best beta1 is a Schur complement;
    beta2 is then chosen to maximise beta1*beta2 along that frontier.
    """
    lower = m[1:, 1:]
    cross = m[0, 1:]
    lam = min_eigenvalue(lower)

    def beta1(b2: float) -> float:
        return float(m[0, 0] - cross @ np.linalg.solve(lower - b2 * np.eye(2), cross))

    res = minimize_scalar(lambda b2: -beta1(b2) * b2, bounds=(0.0, lam * (1 - 1e-9)), method="bounded",
                          options={"xatol": 1e-12 * max(1.0, lam)})
    b2 = float(res.x)
    b1 = beta1(b2)
    if b1 <= 0:
        b2 = 0.5 * lam
        b1 = beta1(b2)
    b1, b2 = b1 * (1 - 1e-9), b2 * (1 - 1e-9)
    shifted = m - np.diag([b1, b2, b2])
    assert np.min(np.linalg.eigvalsh(shifted)) >= -1e-9 * max(1.0, np.max(np.abs(m)))
    return b1, b2


def check_monotonicity(c: CoeffMatrix, h: float) -> Verdict:
    """Monotonicity conditions: the coefficient form is definite and the sign of h admissible.

    Case (i): form <= -beta1|x|^2 - beta2(|y|^2+|z|^2); with beta2 > 0 the
    admissible terminal factors are h >= 0.  Case (ii): the mirror image with
    h <= 0.
    """
    m = symmetrize(c).array()
    for case, sign, rel in (("i", -1.0, ">="), ("ii", 1.0, "<=")):
        sm = sign * m
        if not is_positive_definite(sm):
            continue
        d = leading_minors(sm)
        b1, b2 = certify_betas(sm)
        ev = [Evidence(f"minor{k}({'-' if sign < 0 else ''}M)", v, ">", 0.0) for k, v in enumerate(d, 1)]
        ev += [Evidence("beta1", b1, ">", 0.0), Evidence("beta2", b2, ">", 0.0),
               Evidence("lambda_min", min_eigenvalue(sm))]
        if (rel == ">=" and h >= 0) or (rel == "<=" and h <= 0):
            return Verdict(WELL_POSED, f"Lemma2.2({case})", tuple(ev + [Evidence("h", h, rel, 0.0)]))
        ev.append(Evidence("h", h))
        return Verdict(NOT_DECIDED, f"Lemma2.2({case})-h-sign", tuple(ev))
    return Verdict(NOT_DECIDED, "Lemma2.2", tuple(Evidence(f"minor{k}(M)", v) for k, v in enumerate(leading_minors(m), 1)))


# ---------------------------------------------------------------- Lemma 3.8


def f_zeros(c: CoeffMatrix) -> list[float] | None:
    """Zero points of F: real roots of L away from the pole 1/s3.  None when F is identically 0."""
    try:
        roots = real_roots(l_poly(c))
    except ZeroPolynomial:
        return None
    if c.s3 == 0:
        return roots
    pole = 1.0 / c.s3
    return [r for r in roots if abs(r - pole) > POLE_EXCLUSION * max(1.0, abs(pole))]


def check_lemma38(f: LinearFBSDE) -> Verdict:
    """Necessary and sufficient condition for well-posedness on every horizon.

    The pole 1/s3 splits the real line; the dominating ODE started at h
    stays bounded iff F has a zero between h and wherever the flow heads
    (or the cubic term vanishes).  With s3 = 0 the pole sits at +infinity.
    """
    c = f.coeffs
    h = f.h
    if terminal_singular(c.s3, h):
        raise SingularTerminal(f"h={h} equals 1/s3")
    L = l_poly(c)
    lead = L.c3
    den = 1.0 - c.s3 * h
    Fh = L(h) / den
    zeros = f_zeros(c)
    if zeros is None:
        zeros = [h]
    elif Fh == 0.0:
        zeros = sorted({*zeros, h})

    if c.s3 == 0:
        below, pole = True, math.inf
        side = Evidence("s3", c.s3, "==", 0.0)
    else:
        pole = 1.0 / c.s3
        below = h < pole
        side = Evidence("h-1/s3", h - pole, "<" if below else ">", 0.0)
    # With s3 = 0 F is a polynomial: a vanishing cubic term only rules out
    # finite-time blow-up if the quadratic term vanishes as well.
    degenerate = lead == 0.0 and (c.s3 != 0 or L.c2 == 0.0)
    degen_ev = [Evidence("b3*s2-b2*s3", lead, "==", 0.0)]
    if c.s3 == 0:
        degen_ev.append(Evidence("L.c2", L.c2, "==", 0.0))

    base = [Evidence("F(h)", Fh)]
    if below:
        if Fh <= 0:
            left = [z for z in zeros if z <= h]
            if left:
                z = max(left)
                return Verdict(WELL_POSED, "Lemma3.8(i)",
                               (side, Evidence("F(h)", Fh, "<=", 0.0), Evidence("zero", z, "<=", h)))
            if degenerate:
                return Verdict(WELL_POSED, "Lemma3.8(i)",
                               (side, Evidence("F(h)", Fh, "<=", 0.0), *degen_ev))
        if Fh >= 0:
            mid = [z for z in zeros if h <= z <= pole]
            if mid:
                z = min(mid)
                ev = [side, Evidence("F(h)", Fh, ">=", 0.0), Evidence("zero", z, ">=", h)]
                if math.isfinite(pole):
                    ev.append(Evidence("zero-1/s3", z - pole, "<=", 0.0))
                return Verdict(WELL_POSED, "Lemma3.8(iii)", tuple(ev))
            if c.s3 == 0 and degenerate:
                # affine F with the pole at +infinity: growth is at most exponential
                return Verdict(WELL_POSED, "Lemma3.8(iii)",
                               (side, Evidence("F(h)", Fh, ">=", 0.0), *degen_ev))
    else:
        if Fh >= 0:
            right = [z for z in zeros if z >= h]
            if right:
                z = min(right)
                return Verdict(WELL_POSED, "Lemma3.8(ii)",
                               (side, Evidence("F(h)", Fh, ">=", 0.0), Evidence("zero", z, ">=", h)))
            if degenerate:
                return Verdict(WELL_POSED, "Lemma3.8(ii)",
                               (side, Evidence("F(h)", Fh, ">=", 0.0), *degen_ev))
        if Fh <= 0:
            mid = [z for z in zeros if pole <= z <= h]
            if mid:
                z = max(mid)
                return Verdict(WELL_POSED, "Lemma3.8(iv)",
                               (side, Evidence("F(h)", Fh, "<=", 0.0), Evidence("zero", z, "<=", h),
                                Evidence("zero-1/s3", z - pole, ">=", 0.0)))
    return Verdict(NOT_DECIDED, "Lemma3.8-fail",
                   tuple([side, *base, Evidence("b3*s2-b2*s3", lead), Evidence("n_zeros", float(len(zeros)))]))


# ---------------------------------------------------------------- Theorem 3.9


def thm39_cases(c: CoeffMatrix, h: float, label: str = "Thm3.9") -> Verdict:
    """Four sign tests on L, evaluated in order; the lowest-numbered case that holds wins."""
    L = l_poly(c)
    s3 = c.s3
    lead = L.c3
    Lh = L(h)
    one_minus = 1.0 - s3 * h
    info = [Evidence("s3", s3), Evidence("L(h)", Lh)]

    if s3 == 0:
        # L(h) s3 <= 0 is vacuous here; F = L is a polynomial and needs F(h) <= 0
        # with a zero to its left, or at most linear growth
        flat = lead < 0 or (lead == 0 and L.c2 >= 0)
        if Lh <= 0 and flat:
            return Verdict(WELL_POSED, f"{label}(i)",
                           (Evidence("1-s3*h", one_minus, ">", 0.0), Evidence("b3*s2-b2*s3", lead, "<=", 0.0),
                            Evidence("L(h)", Lh, "<=", 0.0), Evidence("L.c2", L.c2), *info))
        return Verdict(NOT_DECIDED, label, (Evidence("1-s3*h", one_minus), Evidence("b3*s2-b2*s3", lead),
                                            Evidence("L.c2", L.c2), *info))
    if one_minus > 0 and lead <= 0 and Lh * s3 <= 0:
        return Verdict(WELL_POSED, f"{label}(i)",
                       (Evidence("1-s3*h", one_minus, ">", 0.0), Evidence("b3*s2-b2*s3", lead, "<=", 0.0),
                        Evidence("L(h)*s3", Lh * s3, "<=", 0.0), *info))
    if one_minus < 0 and lead >= 0 and Lh * s3 <= 0:
        return Verdict(WELL_POSED, f"{label}(ii)",
                       (Evidence("1-s3*h", one_minus, "<", 0.0), Evidence("b3*s2-b2*s3", lead, ">=", 0.0),
                        Evidence("L(h)*s3", Lh * s3, "<=", 0.0), *info))
    if s3 != 0:
        Lp = L(1.0 / s3)
        # strict at the pole: L(1/s3) = 0 may be the only zero, and it is not a zero of F
        r = max(1.0, abs(1.0 / s3))
        band = POLE_BAND * L.scale() * r * r * r
        if s3 > 0 and Lp < -band and Lh >= 0:
            return Verdict(WELL_POSED, f"{label}(iii)",
                           (Evidence("s3", s3, ">", 0.0), Evidence("L(1/s3)", Lp, "<", -band),
                            Evidence("L(h)", Lh, ">=", 0.0)))
        if s3 < 0 and Lp > band and Lh <= 0:
            return Verdict(WELL_POSED, f"{label}(iv)",
                           (Evidence("s3", s3, "<", 0.0), Evidence("L(1/s3)", Lp, ">", band),
                            Evidence("L(h)", Lh, "<=", 0.0)))
        info.append(Evidence("L(1/s3)", Lp))
    return Verdict(NOT_DECIDED, label,
                   (Evidence("1-s3*h", one_minus), Evidence("b3*s2-b2*s3", lead), *info))


def check_thm39(f: LinearFBSDE) -> Verdict:
    return thm39_cases(f.coeffs, f.h, "Thm3.9")


# ---------------------------------------------------------------- Corollary 5.2


def check_cor52(lq: LQProblem) -> Verdict:
    if lq.N == 0:
        raise NDegenerate("N must be nonzero")
    q = lq.S * lq.S / lq.N - lq.R
    if lq.N > 0 and q < 0:
        return Verdict(WELL_POSED, "Cor5.2(i)", (Evidence("N", lq.N, ">", 0.0), Evidence("S^2/N-R", q, "<", 0.0)))
    if lq.N < 0 and q > 0:
        return Verdict(WELL_POSED, "Cor5.2(ii)", (Evidence("N", lq.N, "<", 0.0), Evidence("S^2/N-R", q, ">", 0.0)))
    return Verdict(NOT_DECIDED, "Cor5.2", (Evidence("N", lq.N), Evidence("S^2/N-R", q)))
