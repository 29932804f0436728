"""Indefinite stochastic LQ control through its Hamiltonian FBSDE.

State  dx = (A x + B u) dt + (C x + D u) dW,  x(0) = x0,
cost   J(u) = 1/2 E[ int_0^T (R x^2 + 2 S u x + N u^2) dt + Q x(T)^2 ].
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import CoeffMatrix, FBSDEError, LinearFBSDE, LQProblem, validate_fbsde, validate_lq
from .criteria import NDegenerate, Verdict, check_cor52, check_lemma38, check_monotonicity, check_thm39
from .dominating import h_poly, real_roots
from .solver import DecouplingField, SimResult, build_field, path_normals, simulate
from .transform import (
    NoTransformFound,
    SynthesisOptions,
    TransformedSystem,
    TransformParams,
    invert_solution,
    synthesize_transform,
    transform_system,
)

log = logging.getLogger(__name__)


class Unsolvable(FBSDEError):
    pass


@dataclass(frozen=True)
class OptimalControlLaw:
    kx: float
    ky: float
    kz: float

    def __call__(self, x, y, z):
        return self.kx * x + self.ky * y + self.kz * z

    def render(self) -> str:
        terms = []
        for k, name in ((self.kx, "x"), (self.ky, "y"), (self.kz, "z")):
            if k == 0:
                continue
            sign = "-" if k < 0 else "+"
            mag = abs(k)
            coef = "" if mag == 1 else f"{mag:.6g}"
            terms.append(f"{sign} {coef}{name}")
        if not terms:
            return "u = 0"
        s = " ".join(terms)
        return "u = " + (s[2:] if s.startswith("+ ") else "-" + s[2:])


def _require_n(lq: LQProblem) -> None:
    if lq.N == 0:
        raise NDegenerate("N must be nonzero")


def build_hamiltonian(lq: LQProblem) -> LinearFBSDE:
    _require_n(lq)
    A, B, C, D, R, S, N = lq.A, lq.B, lq.C, lq.D, lq.R, lq.S, lq.N
    b = (A - B * S / N, -B * B / N, -B * D / N)
    s = (C - D * S / N, -D * B / N, -D * D / N)
    f = (R - S * S / N, A - S * B / N, C - S * D / N)
    return LinearFBSDE(CoeffMatrix.from_rows(f, b, s), lq.Q, lq.x0, lq.T)


def optimal_law(lq: LQProblem) -> OptimalControlLaw:
    _require_n(lq)
    return OptimalControlLaw(-lq.S / lq.N, -lq.B / lq.N, -lq.D / lq.N)


def construction_discrepancy(lq: LQProblem, used: LinearFBSDE) -> dict[str, float]:
    """Entries where ``used`` differs from the Hamiltonian built from the LQ data."""
    built = build_hamiltonian(lq)
    out = {}
    for name, a, b in zip(("f1", "f2", "f3", "b1", "b2", "b3", "s1", "s2", "s3"),
                          built.coeffs.as_tuple(), used.coeffs.as_tuple()):
        if a != b:
            out[name] = b - a
    if built.h != used.h:
        out["h"] = used.h - built.h
    return out


# ---------------------------------------------------------------- pipeline


@dataclass(frozen=True)
class LQOptions:
    n_paths: int = 10_000
    dt: float = 1e-3
    seed: int = 0
    override: LinearFBSDE | None = None
    transform: str = "auto"  # "auto" | "always" | "never"
    params: TransformParams | None = None
    synthesis: SynthesisOptions = field(default_factory=SynthesisOptions)


@dataclass(frozen=True)
class LQSolution:
    law: OptimalControlLaw
    fbsde: LinearFBSDE
    chain: tuple[Verdict, ...]
    transformed: TransformedSystem | None
    sim: SimResult
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    u: np.ndarray
    gain: np.ndarray  # u = gain(t) * x along every path

    @property
    def direct(self) -> bool:
        return self.transformed is None


def verdict_chain(lq: LQProblem, fb: LinearFBSDE) -> tuple[Verdict, ...]:
    return (
        check_monotonicity(fb.coeffs, fb.h),
        check_lemma38(fb),
        check_thm39(fb),
        check_cor52(lq),
    )


def reference_params(fb: LinearFBSDE, near: float = -0.658, m: float = 1.0, c: float = 1.0) -> TransformParams:
    """(m, n, c) with n the real root of H closest to ``near``."""
    roots = real_roots(h_poly(fb.coeffs))
    if not roots:
        raise Unsolvable("H has no real root")
    return TransformParams(m, min(roots, key=lambda r: abs(r - near)), c)


def solve_lq(lq: LQProblem, opts: LQOptions | None = None) -> LQSolution:
    opts = opts or LQOptions()
    lq = validate_lq(lq)
    law = optimal_law(lq)
    fb = validate_fbsde(opts.override) if opts.override is not None else build_hamiltonian(lq)
    chain = verdict_chain(lq, fb)
    decided = any(v.well_posed for v in chain)

    use_transform = opts.transform == "always" or (opts.transform == "auto" and not decided)
    if not use_transform:
        if not decided:
            raise Unsolvable("no criterion decides the Hamiltonian system and transforms are disabled")
        fld = build_field(fb, opts.dt)
        sim = simulate(fb, fld, opts.n_paths, opts.dt, opts.seed, keep_paths=True)
        p = sim.paths
        x, y, z = p.X, p.Y, p.Z
        ts = None
        gain = law.kx + law.ky * fld.u + law.kz * fld.z_ratio
    else:
        try:
            ts = transform_system(fb, opts.params) if opts.params else synthesize_transform(fb, opts.synthesis)
        except NoTransformFound as exc:
            raise Unsolvable(str(exc)) from exc
        if not ts.verdict.well_posed:
            raise Unsolvable(f"transformed system not decided: {ts.verdict}")
        chain = chain + (ts.verdict,)
        fld = build_field(ts.tilde, opts.dt)
        sim = simulate(ts.tilde, fld, opts.n_paths, opts.dt, opts.seed, x0=ts.tilde_x0(fld.u[0]), keep_paths=True)
        p = sim.paths
        x, y, z = invert_solution(ts, p.X, p.Y, p.Z)
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = np.nanmean(law(x, y, z) / x, axis=0)
    return LQSolution(law, fb, chain, ts, sim, p.t, x, y, z, law(x, y, z), np.asarray(gain))


# ---------------------------------------------------------------- stationarity


def _const_one(t: np.ndarray, T: float) -> np.ndarray:
    return np.ones_like(t)


def _ramp(t: np.ndarray, T: float) -> np.ndarray:
    return t / T


def _square(t: np.ndarray, T: float) -> np.ndarray:
    return np.where(t < 0.5 * T, 1.0, -1.0)


DIRECTIONS: dict[str, Callable[[np.ndarray, float], np.ndarray]] = {
    "one": _const_one,
    "ramp": _ramp,
    "square": _square,
}


def simulate_cost(lq: LQProblem, gain: np.ndarray, v: np.ndarray, eps: float, dW: np.ndarray, dt: float) -> float:
    """J for u = ubar + eps v, where ubar = gain * xbar along the unperturbed
    closed-loop state; both states share the increments ``dW``."""
    n = dW.shape[1]
    xb = np.full(dW.shape[0], lq.x0)
    x = xb.copy()
    run = np.zeros(dW.shape[0])
    for j in range(n):
        ub = gain[j] * xb
        u = ub + eps * v[j]
        run += (lq.R * x * x + 2 * lq.S * u * x + lq.N * u * u) * dt
        x_next = x + (lq.A * x + lq.B * u) * dt + (lq.C * x + lq.D * u) * dW[:, j]
        xb = xb + (lq.A * xb + lq.B * ub) * dt + (lq.C * xb + lq.D * ub) * dW[:, j]
        x = x_next
    return float(0.5 * np.mean(run + lq.Q * x * x))


@dataclass(frozen=True)
class StationarityEntry:
    direction: str
    eps: float
    J0: float
    diff: float  # |J(+eps) - J(-eps)|
    quotient: float  # diff / (2 eps)
    passed: bool


@dataclass(frozen=True)
class StationarityReport:
    entries: tuple[StationarityEntry, ...]
    shrink: dict[str, float]  # per direction: diff at largest eps / diff at smallest eps

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def to_record(self) -> dict:
        return {"passed": self.passed, "shrink": dict(self.shrink), "entries": [vars(e).copy() for e in self.entries]}


def stationarity_check(
    lq: LQProblem,
    gain: np.ndarray,
    eps_list=(1e-1, 1e-2),
    directions=("one",),
    n_paths: int = 10_000,
    dt: float = 1e-3,
    seed: int = 7,
    C: float = 10.0,
) -> StationarityReport:
    """Centered finite differences of J along deterministic directions.

    ``gain`` is the feedback u = gain(t) x on the simulation grid (left
    endpoints used).  The pass test reads |J(+e) - J(-e)| / (2e) <= C e max(1, |J|).
    """
    n = int(round(lq.T / dt))
    gain = np.asarray(gain, dtype=float)
    if len(gain) == n + 1:
        gain = gain[:-1]
    if len(gain) != n:
        raise ValueError(f"gain has {len(gain)} entries, expected {n}")
    dW = np.stack([path_normals(seed, i, n) for i in range(n_paths)]) * math.sqrt(dt)
    t = np.linspace(0.0, lq.T, n + 1)[:-1]
    J0 = simulate_cost(lq, gain, np.zeros(n), 0.0, dW, dt)
    entries, shrink = [], {}
    for name in directions:
        v = DIRECTIONS[name](t, lq.T)
        diffs = {}
        for eps in eps_list:
            if eps == 0:
                entries.append(StationarityEntry(name, 0.0, J0, 0.0, 0.0, True))
                continue
            jp = simulate_cost(lq, gain, v, eps, dW, dt)
            jm = simulate_cost(lq, gain, v, -eps, dW, dt)
            d = abs(jp - jm)
            q = d / (2 * eps)
            diffs[eps] = d
            entries.append(StationarityEntry(name, eps, J0, d, q, q <= C * eps * max(1.0, abs(J0))))
        nz = sorted(e for e in diffs if e > 0)
        if len(nz) >= 2 and diffs[nz[0]] > 0:
            shrink[name] = diffs[nz[-1]] / diffs[nz[0]]
    return StationarityReport(tuple(entries), shrink)


def field_gain(law: OptimalControlLaw, fld: DecouplingField) -> np.ndarray:
    return law.kx + law.ky * fld.u + law.kz * fld.z_ratio
