"""The dominating function F(y), its cubic numerator L(y) and the dominating ODE.

For constant coefficients the decoupling field of the linear FBSDE is
Y = u(t) X, and u solves the terminal value problem

    u'(t) = -F(u(t)),   u(T) = h,

    F(y) = f1 + f2 y + y (b1 + b2 y) + (f3 + b3 y) y (s1 + s2 y) / (1 - s3 y)
         = L(y) / (1 - s3 y).
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import (
    COEFF_NAMES,
    CoeffMatrix,
    Cubic,
    FBSDEEnvelope,
    FBSDEError,
    LinearFBSDE,
    validate_envelope,
)

SINGULAR_GUARD = 1e-8
BLOWUP_LEVEL = 1e8
EVAL_GUARD = 1e-12
MAX_REFINE = 2**10
TOUCH_REL = 1e-13


class SingularEvaluation(FBSDEError):
    pass


class ZeroPolynomial(FBSDEError):
    pass


def l_poly(c: CoeffMatrix) -> Cubic:
    """Numerator cubic L(y) = (1 - s3 y) F(y)."""
    return Cubic(
        c.b3 * c.s2 - c.b2 * c.s3,
        c.b2 + c.s2 * c.f3 - c.s3 * c.f2 + c.s1 * c.b3 - c.s3 * c.b1,
        c.f2 + c.b1 + c.f3 * c.s1 - c.f1 * c.s3,
        c.f1,
    )


def h_poly(c: CoeffMatrix) -> Cubic:
    """H(y) = L(-y); a real root n of H makes the transformed f1 vanish."""
    L = l_poly(c)
    return Cubic(-L.c3, L.c2, -L.c1, L.c0)


@dataclass(frozen=True)
class DominatingFn:
    coeffs: CoeffMatrix

    @property
    def singular_point(self) -> float | None:
        return None if self.coeffs.s3 == 0 else 1.0 / self.coeffs.s3

    def __call__(self, y: float) -> float:
        return f_eval(self, y)


def _f_direct(c, y):
    # c is anything with the nine attribute names; works on scalars or arrays.
    return (
        c.f1
        + c.f2 * y
        + y * (c.b1 + c.b2 * y)
        + (c.f3 + c.b3 * y) * y * (c.s1 + c.s2 * y) / (1.0 - c.s3 * y)
    )


def f_eval(d: DominatingFn | CoeffMatrix, y: float) -> float:
    c = d.coeffs if isinstance(d, DominatingFn) else d
    den = 1.0 - c.s3 * y
    if abs(den) <= EVAL_GUARD * max(1.0, abs(c.s3 * y)):
        raise SingularEvaluation(f"1 - s3*y vanishes at y={y}")
    return float(_f_direct(c, y))


# ---------------------------------------------------------------- roots


def _trim(coeffs: list[float]) -> list[float]:
    scale = sum(abs(v) for v in coeffs)
    while coeffs and abs(coeffs[0]) <= 1e-14 * scale:
        coeffs = coeffs[1:]
    return coeffs


def _bisect(p: Callable[[float], float], lo: float, hi: float) -> float:
    plo = p(lo)
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi or hi - lo <= 1e-12 * max(1.0, abs(mid)) * 1e-3:
            break
        pm = p(mid)
        if pm == 0.0:
            return mid
        if (pm > 0) == (plo > 0):
            lo, plo = mid, pm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def real_roots(p: Cubic, tol: float = 1e-9) -> list[float]:
    """All distinct real roots of a cubic (or lower degree), ascending.

    The interval [-R, R] with R the Cauchy bound is split at the critical
    points, so each piece is monotone and holds at most one root; simple
    roots are found by bisection and touching roots by testing the
    critical points themselves.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    coeffs = _trim(list(p.coeffs()))
    if not coeffs:
        raise ZeroPolynomial("every y is a root of the zero polynomial")
    deg = len(coeffs) - 1
    if deg == 0:
        return []
    full = [0.0] * (3 - deg) + coeffs
    q = Cubic(*full)
    scale = q.scale()
    if deg == 1:
        return [-coeffs[1] / coeffs[0]]

    lead = coeffs[0]
    R = 1.0 + max(abs(v) for v in coeffs[1:]) / abs(lead)
    # critical points: roots of the derivative
    dc = [deg * coeffs[0], (deg - 1) * coeffs[1]] + ([coeffs[2]] if deg == 3 else [])
    crit: list[float] = []
    if deg == 2:
        crit = [-dc[1] / dc[0]]
    else:
        a, b, c = dc
        disc = b * b - 4 * a * c
        if disc >= 0:
            sq = math.sqrt(disc)
            qq = -0.5 * (b + math.copysign(sq, b))
            cands = [qq / a] + ([c / qq] if qq != 0 else [])
            crit = sorted(set(cands))
    crit = [x for x in crit if -R < x < R]

    def local(x: float) -> float:
        # size of the individual terms at x: the residual a rounded root can have
        return max(scale, sum(abs(v) * abs(x) ** k for k, v in enumerate(reversed(q.coeffs()))))

    knots = [-R, *crit, R]
    bracketed: list[float] = []
    for lo, hi in zip(knots[:-1], knots[1:]):
        plo, phi = q(lo), q(hi)
        if plo == 0.0:
            bracketed.append(lo)
        if (plo > 0) != (phi > 0) and plo != 0.0 and phi != 0.0:
            bracketed.append(_bisect(q, lo, hi))
    if q(R) == 0.0:
        bracketed.append(R)
    # a critical point counts as a touching root only if it is (near) exact: far
    # from the origin the absolute test is loosened to rounding level, no further
    touching = [x for x in crit if abs(q(x)) <= max(tol * scale, TOUCH_REL * local(x))]

    roots = sorted(bracketed + touching)
    out: list[float] = []
    for r in roots:
        if out and abs(r - out[-1]) <= 1e-9 * max(1.0, abs(r)):
            if abs(q(r)) < abs(q(out[-1])):
                out[-1] = r
            continue
        out.append(r)
    return out


# ---------------------------------------------------------------- ODE


@dataclass(frozen=True)
class OdeStatus:
    kind: str  # "Bounded" | "Singular" | "BlowUp"
    t_star: float | None = None

    @property
    def bounded(self) -> bool:
        return self.kind == "Bounded"

    def __str__(self) -> str:
        return self.kind if self.t_star is None else f"{self.kind}({self.t_star:.6g})"


@dataclass(frozen=True)
class OdeSolution:
    grid: np.ndarray
    values: np.ndarray  # NaN before a halting time
    status: OdeStatus
    s3: float = 0.0

    @property
    def u0(self) -> float:
        return float(self.values[0])

    @property
    def dt(self) -> float:
        return float(self.grid[1] - self.grid[0])


class _Coeffs:
    """Attribute view over a (k, 9) array so ``_f_direct`` can run batched."""

    def __init__(self, arr: np.ndarray):
        for i, name in enumerate(COEFF_NAMES):
            setattr(self, name, arr[..., i])


def _singular(s3, u):
    return np.abs(1.0 - s3 * u) < SINGULAR_GUARD * np.maximum(1.0, np.abs(s3 * u))


def _n_steps(T: float, dt: float) -> int:
    if dt <= 0:
        raise ValueError("dt must be positive")
    if dt > T * (1 + 1e-12):
        raise ValueError("dt must not exceed T")
    return max(1, int(math.ceil(T / dt - 1e-9)))


def _rk4_backward(rhs, side, h: np.ndarray, T: float, n: int):
    """Integrate du/ds = rhs(u) for s = T - t from s=0 (u=h) to s=T.

    ``rhs(u)`` returns (F, singular_mask); ``side(u)`` is the sign of
    1 - s3 u, so a step that jumps over the pole is caught even when no
    stage lands inside the guard band.  Returns values on the ascending
    time grid, per-instance status codes (0 ok, 1 singular, 2 blow-up) and
    halting times.
    """
    k = h.shape[0]
    step = T / n
    vals = np.full((k, n + 1), np.nan)
    vals[:, n] = h
    code = np.zeros(k, dtype=int)
    t_star = np.full(k, np.nan)
    u = h.astype(float).copy()
    alive = np.ones(k, dtype=bool)

    def flag(mask, kind, t):
        nonlocal alive
        hit = mask & alive
        if hit.any():
            code[hit] = kind
            t_star[hit] = t
            alive = alive & ~hit

    _, sing0 = rhs(u)
    flag(sing0, 1, T)
    for i in range(n, 0, -1):
        if not alive.any():
            break
        t = i * step
        with np.errstate(all="ignore"):
            k1, m1 = rhs(u)
            u2 = u + 0.5 * step * k1
            k2, m2 = rhs(u2)
            u3 = u + 0.5 * step * k2
            k3, m3 = rhs(u3)
            u4 = u + step * k3
            k4, m4 = rhs(u4)
            new = u + step / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            s0 = side(u)
            crossed = (side(u2) != s0) | (side(u3) != s0) | (side(u4) != s0) | (side(new) != s0)
        t_new = (i - 1) * step
        flag(m1 | m2 | m3 | m4 | crossed, 1, t - 0.5 * step)
        _, mnew = rhs(np.where(np.isfinite(new), new, 0.0))
        flag(mnew & np.isfinite(new), 1, t_new)
        flag(~np.isfinite(new) | (np.abs(new) > BLOWUP_LEVEL), 2, t_new)
        u = np.where(alive, new, u)
        vals[alive, i - 1] = u[alive]
    return vals, code, t_star


def _status(code: int, t: float) -> OdeStatus:
    return OdeStatus(("Bounded", "Singular", "BlowUp")[code], None if code == 0 else float(t))


def integrate_batch(coeffs: np.ndarray, h: np.ndarray, T: float, dt: float):
    """Batched dominating-ODE integration for a (k, 9) array of coefficient rows."""
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
    h = np.atleast_1d(np.asarray(h, dtype=float))
    view = _Coeffs(coeffs)

    def rhs(u):
        return _f_direct(view, u), _singular(view.s3, u)

    def side(u):
        return 1.0 - view.s3 * u > 0

    n = _n_steps(T, dt)
    vals, code, t_star = _rk4_backward(rhs, side, h, T, n)
    grid = np.linspace(0.0, T, n + 1)
    out = []
    for j in range(coeffs.shape[0]):
        if code[j]:
            # events are confirmed (or dismissed) by the step-refining scalar path
            out.append(integrate_dominating(LinearFBSDE(CoeffMatrix(*coeffs[j]), float(h[j]), 1.0, T), dt))
        else:
            out.append(OdeSolution(grid, vals[j], _status(0, 0.0), float(coeffs[j, 8])))
    return out


def _rk4_step(rhs, side, u: float, step: float) -> tuple[float, str | None]:
    """One RK4 step of du/ds = F(u); returns (new value, event or None)."""
    try:
        k1, m1 = rhs(u)
        u2 = u + 0.5 * step * k1
        k2, m2 = rhs(u2)
        u3 = u + 0.5 * step * k2
        k3, m3 = rhs(u3)
        u4 = u + step * k3
        k4, m4 = rhs(u4)
        new = u + step / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    except (OverflowError, ZeroDivisionError):
        return math.nan, "BlowUp"
    s0 = side(u)
    if m1 or m2 or m3 or m4 or any(side(v) != s0 for v in (u2, u3, u4, new) if math.isfinite(v)):
        return new, "Singular"
    if not math.isfinite(new) or abs(new) > BLOWUP_LEVEL:
        return new, "BlowUp"
    if rhs(new)[1]:
        return new, "Singular"
    return new, None


def _rk4_scalar(rhs, side, h: float, T: float, n: int) -> tuple[np.ndarray, OdeStatus]:
    """Scalar twin of ``_rk4_backward``; ``rhs(u)`` returns (F, is_singular).

    A grid step that raises an event is retried with 2, 4, ... substeps
    (up to ``MAX_REFINE``).  This separates a genuine singularity or blow-up
    from an explicit-RK4 overshoot near a stiff equilibrium close to the pole.
    """
    step = T / n
    vals = [math.nan] * (n + 1)
    vals[n] = u = float(h)
    if rhs(u)[1]:
        return np.array(vals), OdeStatus("Singular", T)
    for i in range(n, 0, -1):
        t = i * step
        new, event = _rk4_step(rhs, side, u, step)
        k = 1
        while event is not None and k < MAX_REFINE:
            k *= 2
            sub, v = step / k, u
            for j in range(k):
                v, event = _rk4_step(rhs, side, v, sub)
                if event is not None:
                    t_event = t - (j + 0.5) * sub
                    break
            new = v
        if event is not None:
            return np.array(vals), OdeStatus(event, t_event)
        vals[i - 1] = u = new
    return np.array(vals), OdeStatus("Bounded")


def integrate_dominating(f: LinearFBSDE, dt: float | None = None) -> OdeSolution:
    """Backward RK4 for the dominating ODE with singularity/blow-up detection."""
    dt = f.T * 1e-4 if dt is None else dt
    c = f.coeffs
    f1, f2, f3, b1, b2, b3, s1, s2, s3 = c.as_tuple()

    def rhs(u: float):
        den = 1.0 - s3 * u
        sing = abs(den) < SINGULAR_GUARD * max(1.0, abs(s3 * u))
        if sing:
            return 0.0, True
        return f1 + f2 * u + u * (b1 + b2 * u) + (f3 + b3 * u) * u * (s1 + s2 * u) / den, False

    def side(u: float) -> bool:
        return 1.0 - s3 * u > 0

    n = _n_steps(f.T, dt)
    vals, status = _rk4_scalar(rhs, side, f.h, f.T, n)
    return OdeSolution(np.linspace(0.0, f.T, n + 1), vals, status, s3)


@dataclass(frozen=True)
class EnvelopeSolution:
    upper: OdeSolution
    lower: OdeSolution

    @property
    def well_posed(self) -> bool:
        if not (self.upper.status.bounded and self.lower.status.bounded):
            return False
        return bool(np.all(self.lower.values <= self.upper.values + 1e-12))


def box_corners(env: FBSDEEnvelope) -> np.ndarray:
    axes = [env.bounds[name].corners() for name in COEFF_NAMES]
    return np.array(list(itertools.product(*axes)), dtype=float)


def integrate_dominating_envelope(env: FBSDEEnvelope, dt: float | None = None) -> EnvelopeSolution:
    """Upper/lower boundary solutions with F maximised/minimised over the coefficient box.

    F is multilinear in every coefficient except s3, and monotone in s3 away
    from the pole, so its extremes over the box are attained at corners.
    """
    validate_envelope(env)
    dt = env.T * 1e-4 if dt is None else dt
    view = _Coeffs(box_corners(env))

    def make_rhs(reduce):
        def rhs(u: float):
            with np.errstate(all="ignore"):
                if bool(_singular(view.s3, u).any()):
                    return 0.0, True
                return float(reduce(_f_direct(view, u))), False

        return rhs

    def side(u: float) -> bytes:
        return (1.0 - view.s3 * u > 0).tobytes()

    n = _n_steps(env.T, dt)
    grid = np.linspace(0.0, env.T, n + 1)
    out = []
    for reduce, h in ((np.max, env.h.hi), (np.min, env.h.lo)):
        vals, status = _rk4_scalar(make_rhs(reduce), side, h, env.T, n)
        out.append(OdeSolution(grid, vals, status))
    return EnvelopeSolution(*out)


def write_csv(sol: OdeSolution, path_or_file) -> None:
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="", encoding="utf-8") if own else path_or_file
    try:
        w = csv.writer(fh)
        w.writerow(["t", "u", "status"])
        for t, u in zip(sol.grid, sol.values):
            w.writerow([repr(float(t)), repr(float(u)), str(sol.status)])
    finally:
        if own:
            fh.close()
