"""Linear change of variables (X~, Y~) = A (X, Y) with A = (m, 1; n c, c).

Choosing n as a real root of H removes the X~ term from the transformed
backward driver (f~1 = 0), and the transformed system can then be tested with
the same sign criteria as the original.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .core import CoeffMatrix, Cubic, FBSDEError, LinearFBSDE
from .criteria import Verdict, thm39_cases
from .dominating import h_poly, l_poly, real_roots

log = logging.getLogger(__name__)

DET_REL_TOL = 1e-10
DENOM_TOL = 1e-10
TERMINAL_BAND = 1e-9
SIGMA3_FLOOR = 1e-9
X0_BAND = 1e-9


class DegenerateTransform(FBSDEError):
    pass


class TerminalDegenerate(FBSDEError):
    pass


class NoTransformFound(FBSDEError):
    pass


class NoDecouplingRoot(FBSDEError):
    pass


@dataclass(frozen=True)
class TransformParams:
    m: float
    n: float
    c: float

    def __post_init__(self):
        for name in ("m", "n", "c"):
            if not np.isfinite(getattr(self, name)):
                raise DegenerateTransform(f"{name} is not finite")
        if abs(self.det) <= DET_REL_TOL * max(abs(self.m), abs(self.n), 1.0) * abs(self.c) or self.c == 0:
            raise DegenerateTransform(f"|A| = c(m-n) = {self.det:g} vanishes")

    @property
    def a11(self) -> float:
        return self.m

    @property
    def a12(self) -> float:
        return 1.0

    @property
    def a21(self) -> float:
        return self.n * self.c

    @property
    def a22(self) -> float:
        return self.c

    @property
    def det(self) -> float:
        return self.a11 * self.a22 - self.a12 * self.a21

    def matrix(self) -> np.ndarray:
        return np.array([[self.a11, self.a12], [self.a21, self.a22]])

    def inverse(self) -> np.ndarray:
        d = self.det
        return np.array([[self.a22, -self.a12], [-self.a21, self.a11]]) / d

    def z_denominator(self, s3: float) -> float:
        """a22 + a21 s3, the common denominator of the transformed coefficients."""
        den = self.a22 + self.a21 * s3
        if abs(den) <= DENOM_TOL * max(1.0, abs(self.a22), abs(self.a21 * s3)):
            raise DegenerateTransform(f"c(1 + n s3) = {den:g} vanishes")
        return den


def tilde_coeffs(c: CoeffMatrix, p: TransformParams) -> CoeffMatrix:
    """Coefficients of the transformed system, by direct substitution."""
    f1, f2, f3, b1, b2, b3, s1, s2, s3 = c.as_tuple()
    a11, a12, a21, a22 = p.a11, p.a12, p.a21, p.a22
    den = p.z_denominator(s3)
    dd = p.det * den

    # forward-row combinations and backward-row combinations
    xb3 = a11 * b3 - a12 * f3
    yb3 = a21 * b3 - a22 * f3
    xs3 = a11 * s3 + a12

    bt1 = (xb3 * (a21 * a21 * s2 - a21 * a22 * s1)
           + den * (a22 * (a11 * b1 - a12 * f1) - a21 * (a11 * b2 - a12 * f2))) / dd
    bt2 = (xb3 * (a12 * a21 * s1 - a11 * a21 * s2)
           + den * (a11 * (a11 * b2 - a12 * f2) - a12 * (a11 * b1 - a12 * f1))) / dd
    bt3 = xb3 / den
    st1 = (xs3 * (a21 * a21 * s2 - a21 * a22 * s1) + den * (a11 * a22 * s1 - a11 * a21 * s2)) / dd
    st2 = (xs3 * (a12 * a21 * s1 - a11 * a21 * s2) + den * (a11 * a11 * s2 - a11 * a12 * s1)) / dd
    st3 = xs3 / den
    ft1 = (yb3 * (a21 * a22 * s1 - a21 * a21 * s2)
           + den * (a21 * (a21 * b2 - a22 * f2) - a22 * (a21 * b1 - a22 * f1))) / dd
    ft2 = (yb3 * (a11 * a21 * s2 - a12 * a21 * s1)
           + den * (a12 * (a21 * b1 - a22 * f1) - a11 * (a21 * b2 - a22 * f2))) / dd
    ft3 = (a22 * f3 - a21 * b3) / den
    return CoeffMatrix(ft1, ft2, ft3, bt1, bt2, bt3, st1, st2, st3)


def tilde_terminal(h: float, p: TransformParams) -> float:
    den = p.a11 + p.a12 * h
    if abs(den) <= TERMINAL_BAND:
        raise TerminalDegenerate(f"m + h = {den:g}; the transformed terminal condition is undefined")
    return (p.a21 + p.a22 * h) / den


def lambda_poly(c: CoeffMatrix, p: TransformParams) -> Cubic:
    return l_poly(tilde_coeffs(c, p))


def lambda_closed_forms(c: CoeffMatrix, p: TransformParams) -> tuple[float, float, float]:
    """Published closed forms for (Lambda0, Lambda1, Lambda2).

    Kept only to report how far they sit from the direct construction; the
    printed Lambda0 carries the opposite overall sign and the Lambda1/Lambda2
    denominators are inconsistent.
    """
    L = l_poly(c)
    m, n, cc, s3 = p.m, p.n, p.c, c.s3
    k3, k2, k1, k0 = L.c3, L.c2, L.c1, L.c0
    den_c = (n - m) * (cc + n * cc * s3)
    lam0 = (k3 * m**3 - k2 * m**2 + k1 * m - k0) / ((n * cc - m * cc) * (cc + n * cc * s3))
    lam1 = (3 * k3 * m * m * n - k2 * (m * m + 2 * m * n)) / den_c + (k1 * (2 * m + n) - 3 * k0) / den_c
    lam2 = ((-3 * k3 * m * n * n + k2 * (n * n + 2 * m * n)) / den_c
            - (k1 * (2 * n + m) - 3 * k0) / ((n - m) * (1 + n * s3)))
    return lam0, lam1, lam2


def lambda_diagnostics(c: CoeffMatrix, p: TransformParams, tol: float = 1e-8) -> dict:
    direct = lambda_poly(c, p)
    printed = lambda_closed_forms(c, p)
    scale = max(1.0, direct.scale())
    out = {}
    for name, d, q in zip(("Lambda0", "Lambda1", "Lambda2"), direct.coeffs()[:3], printed):
        out[name] = {"direct": d, "closed_form": q, "mismatch": abs(d - q) > tol * scale}
    return out


def check_prop42(tilde: LinearFBSDE) -> Verdict:
    return thm39_cases(tilde.coeffs, tilde.h, "Prop4.2")


@dataclass(frozen=True)
class TransformedSystem:
    params: TransformParams
    tilde: LinearFBSDE
    source: LinearFBSDE
    verdict: Verdict | None = None
    candidates: tuple[tuple[float, float, float, str], ...] = field(default=(), compare=False)

    @property
    def z_map(self) -> tuple[float, float, float]:
        p, s = self.params, self.source.coeffs
        return (p.a21 * s.s1, p.a21 * s.s2, p.a21 * s.s3 + p.a22)

    @property
    def x0_relation(self) -> tuple[float, float]:
        p = self.params
        return (p.det / p.a22, p.a12 / p.a22)

    def tilde_x0(self, u0: float) -> float:
        """Close the implicit initial condition with Y~(0) = u~(0) X~(0)."""
        k, a = self.x0_relation
        den = 1.0 - a * u0
        if abs(den) <= X0_BAND:
            raise DegenerateTransform("initial condition of the transformed system is not solvable")
        return k * self.source.x0 / den

    def to_record(self) -> dict:
        return {
            "params": {"m": self.params.m, "n": self.params.n, "c": self.params.c},
            "tilde_coeffs": list(self.tilde.coeffs.as_tuple()),
            "h_tilde": self.tilde.h,
            "verdict": None if self.verdict is None else self.verdict.to_record(),
            "candidates": [list(t) for t in self.candidates],
        }


def transform_system(f: LinearFBSDE, p: TransformParams) -> TransformedSystem:
    coeffs = tilde_coeffs(f.coeffs, p)
    ht = tilde_terminal(f.h, p)
    tilde = LinearFBSDE(coeffs, ht, 1.0, f.T)
    return TransformedSystem(p, tilde, f, check_prop42(tilde))


def forward_map(p: TransformParams, s: CoeffMatrix, X, Y, Z):
    X, Y, Z = (np.asarray(v, dtype=float) for v in (X, Y, Z))
    Xt = p.a11 * X + p.a12 * Y
    Yt = p.a21 * X + p.a22 * Y
    Zt = p.a21 * s.s1 * X + p.a21 * s.s2 * Y + (p.a21 * s.s3 + p.a22) * Z
    return Xt, Yt, Zt


def invert_solution(ts: TransformedSystem, Xt, Yt, Zt):
    """Recover (X, Y, Z) from transformed paths; arrays of any matching shape."""
    p, s = ts.params, ts.source.coeffs
    inv = p.inverse()
    Xt, Yt, Zt = (np.asarray(v, dtype=float) for v in (Xt, Yt, Zt))
    X = inv[0, 0] * Xt + inv[0, 1] * Yt
    Y = inv[1, 0] * Xt + inv[1, 1] * Yt
    Z = (Zt - p.a21 * s.s1 * X - p.a21 * s.s2 * Y) / p.z_denominator(s.s3)
    return X, Y, Z


# ---------------------------------------------------------------- synthesis


@dataclass(frozen=True)
class SynthesisOptions:
    prefer_decoupling: bool = True
    strict: bool = False  # raise NoDecouplingRoot instead of falling back to an n grid
    m_grid: tuple[float, ...] | None = None
    c_grid: tuple[float, ...] = (1.0,)
    min_gap: float = 0.05


def default_grid(lo: float = -5.0, hi: float = 5.0, step: float = 0.1) -> tuple[float, ...]:
    k = int(round((hi - lo) / step))
    return tuple(float(v) for v in np.round(lo + step * np.arange(k + 1), 12))


def candidate_ns(f: LinearFBSDE, opts: SynthesisOptions) -> list[float]:
    if opts.prefer_decoupling:
        roots = real_roots(h_poly(f.coeffs))
        if roots:
            return sorted(roots, key=lambda r: (abs(r), r > 0))
        if opts.strict:
            raise NoDecouplingRoot("H has no real root")
        log.info("H has no real root; scanning n over the m grid instead")
    grid = opts.m_grid or default_grid()
    return sorted(grid, key=lambda r: (abs(r), r > 0))


def synthesize_transform(f: LinearFBSDE, opts: SynthesisOptions | None = None) -> TransformedSystem:
    """First (n, m, c) in scan order whose transformed system passes the sign test."""
    opts = opts or SynthesisOptions()
    m_grid = opts.m_grid or default_grid()
    tried: list[tuple[float, float, float, str]] = []
    for n in candidate_ns(f, opts):
        for c in opts.c_grid:
            for m in m_grid:
                if abs(m - n) < opts.min_gap:
                    continue
                try:
                    ts = transform_system(f, TransformParams(m, n, c))
                except (DegenerateTransform, TerminalDegenerate) as exc:
                    tried.append((m, n, c, type(exc).__name__))
                    continue
                if abs(ts.tilde.coeffs.s3) < SIGMA3_FLOOR:
                    tried.append((m, n, c, "Sigma3Zero"))
                    continue
                tried.append((m, n, c, ts.verdict.criterion))
                if ts.verdict.well_posed:
                    return TransformedSystem(ts.params, ts.tilde, f, ts.verdict, tuple(tried))
    raise NoTransformFound(f"no admissible transform among {len(tried)} candidates")
