"""Monte-Carlo solution of a well-posed constant-coefficient linear FBSDE.

The decoupling field Y = u(t) X reduces the system to the scalar linear SDE

    dX = (b1 + b2 u + b3 z) X dt + (s1 + s2 u + s3 z) X dW,   z = u (s1 + s2 u) / (1 - s3 u),

with Z = z X.  Paths use Euler-Maruyama; each path draws from its own Philox
stream keyed by (seed, path index), so results do not depend on blocking.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .core import FBSDEError, LinearFBSDE
from .dominating import OdeSolution, OdeStatus, integrate_dominating

BLOWUP_X = 1e12
BLOCK = 2048
RESIDUAL_C = 5.0
HALVING_RATIO = 1.2


class NotWellPosedNumerically(FBSDEError):
    def __init__(self, status: OdeStatus):
        super().__init__(f"dominating ODE did not stay bounded: {status}")
        self.status = status


@dataclass(frozen=True)
class DecouplingField:
    ode: OdeSolution
    z_ratio: np.ndarray

    @property
    def grid(self) -> np.ndarray:
        return self.ode.grid

    @property
    def u(self) -> np.ndarray:
        return self.ode.values

    @classmethod
    def from_values(cls, f: LinearFBSDE, grid: np.ndarray, u: np.ndarray) -> "DecouplingField":
        c = f.coeffs
        u = np.asarray(u, dtype=float)
        z = u * (c.s1 + c.s2 * u) / (1.0 - c.s3 * u)
        if not np.all(np.isfinite(z)):
            raise NotWellPosedNumerically(OdeStatus("Singular"))
        return cls(OdeSolution(np.asarray(grid, dtype=float), u, OdeStatus("Bounded"), c.s3), z)

    def shifted(self, f: LinearFBSDE, delta: float) -> "DecouplingField":
        """Same grid, u moved by ``delta``; a deliberately wrong field for negative controls."""
        return DecouplingField.from_values(f, self.grid, self.u + delta)


def build_field(f: LinearFBSDE, dt: float | None = None) -> DecouplingField:
    ode = integrate_dominating(f, dt)
    if not ode.status.bounded:
        raise NotWellPosedNumerically(ode.status)
    return DecouplingField.from_values(f, ode.grid, ode.values)


@dataclass(frozen=True)
class Stats:
    mean: float
    mean_abs: float
    max_abs: float
    std: float

    @classmethod
    def of(cls, v: np.ndarray) -> "Stats":
        if v.size == 0:
            return cls(math.nan, math.nan, math.nan, math.nan)
        a = np.abs(v)
        return cls(float(v.mean()), float(a.mean()), float(a.max()), float(v.std()))


@dataclass(frozen=True)
class Paths:
    t: np.ndarray
    X: np.ndarray  # (n_paths, n_steps + 1)
    Y: np.ndarray
    Z: np.ndarray
    dW: np.ndarray  # (n_paths, n_steps)


@dataclass(frozen=True)
class SimResult:
    n_paths: int
    dt: float
    seed: int
    x0: float
    terminal_residual: Stats
    bsde_residual: Stats
    mean_XT: float
    var_XT: float
    Y0: float
    scale: float  # 1 + mean over paths of max_t |X|
    n_aborted: int
    paths: Paths | None = field(default=None, compare=False, repr=False)

    def to_record(self) -> dict:
        rec = {k: getattr(self, k) for k in ("n_paths", "dt", "seed", "x0", "mean_XT", "var_XT", "Y0", "scale", "n_aborted")}
        rec["terminal_residual"] = vars(self.terminal_residual).copy()
        rec["bsde_residual"] = vars(self.bsde_residual).copy()
        return rec


def path_normals(seed: int, path: int, n: int) -> np.ndarray:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, path], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key)).standard_normal(n)


def _field_on_grid(fld: DecouplingField, T: float, dt: float) -> tuple[np.ndarray, np.ndarray, int]:
    n = int(round(T / dt))
    if n < 1 or abs(n * dt - T) > 1e-12 * max(1.0, T):
        raise ValueError(f"dt={dt} does not divide T={T}")
    m = len(fld.grid) - 1
    if m % n:
        raise ValueError(f"field grid ({m} steps) is not a refinement of the simulation grid ({n} steps)")
    stride = m // n
    return fld.u[::stride], fld.z_ratio[::stride], n


def simulate(
    f: LinearFBSDE,
    fld: DecouplingField,
    n_paths: int,
    dt: float,
    seed: int,
    *,
    x0: float | None = None,
    keep_paths: bool = False,
) -> SimResult:
    c = f.coeffs
    x0 = f.x0 if x0 is None else float(x0)
    u, z, n = _field_on_grid(fld, f.T, dt)
    drift = c.b1 + c.b2 * u[:-1] + c.b3 * z[:-1]
    vol = c.s1 + c.s2 * u[:-1] + c.s3 * z[:-1]
    # backward driver per unit X and martingale integrand per unit X
    gen = c.f1 + c.f2 * u[:-1] + c.f3 * z[:-1]
    sq = math.sqrt(dt)

    term, resid, xT, xmax, aborted = [], [], [], [], 0
    kept = {k: [] for k in ("X", "dW")} if keep_paths else None
    for start in range(0, n_paths, BLOCK):
        ids = range(start, min(n_paths, start + BLOCK))
        dW = np.stack([path_normals(seed, i, n) for i in ids]) * sq
        k = dW.shape[0]
        X = np.empty((k, n + 1))
        X[:, 0] = x0
        for j in range(n):
            X[:, j + 1] = X[:, j] * (1.0 + drift[j] * dt + vol[j] * dW[:, j])
        with np.errstate(invalid="ignore", over="ignore"):
            bad = ~np.all(np.isfinite(X) & (np.abs(X) <= BLOWUP_X), axis=1)
        aborted += int(bad.sum())
        ok = ~bad
        Xo, dWo = X[ok], dW[ok]
        Yo = Xo * u
        YT = Yo[:, -1]
        term.append(np.abs(YT - f.h * Xo[:, -1]))
        Zo = Xo[:, :-1] * z[:-1]
        integral = (Xo[:, :-1] * gen).sum(axis=1) * dt - (Zo * dWo).sum(axis=1)
        resid.append(Yo[:, 0] - (YT + integral))
        xT.append(Xo[:, -1])
        xmax.append(np.abs(Xo).max(axis=1))
        if kept is not None:
            kept["X"].append(X)
            kept["dW"].append(dW)

    term_v = np.concatenate(term)
    resid_v = np.concatenate(resid)
    xT_v = np.concatenate(xT)
    xmax_v = np.concatenate(xmax)
    paths = None
    if kept is not None:
        X = np.concatenate(kept["X"])
        paths = Paths(np.linspace(0.0, f.T, n + 1), X, X * u, X * z, np.concatenate(kept["dW"]))
    return SimResult(
        n_paths=n_paths,
        dt=dt,
        seed=seed,
        x0=x0,
        terminal_residual=Stats.of(term_v),
        bsde_residual=Stats.of(resid_v),
        mean_XT=float(xT_v.mean()) if xT_v.size else math.nan,
        var_XT=float(xT_v.var()) if xT_v.size else math.nan,
        Y0=float(u[0] * x0),
        scale=1.0 + (float(xmax_v.mean()) if xmax_v.size else math.inf),
        n_aborted=aborted,
        paths=paths,
    )


@dataclass(frozen=True)
class VerifyReport:
    passed: bool
    residual: float
    bound: float
    ratio: float | None
    detail: str

    def to_record(self) -> dict:
        return vars(self).copy()


def verify_bsde(sr: SimResult, sr_half: SimResult | None = None) -> VerifyReport:
    """Residual bound C sqrt(dt), and (given a run at dt/2) a shrinking residual."""
    r = sr.bsde_residual.mean_abs
    bound = RESIDUAL_C * math.sqrt(sr.dt) * sr.scale
    ok = sr.n_aborted == 0 and r <= bound
    ratio = None
    detail = f"mean|R|={r:.3g} vs bound {bound:.3g}"
    if sr_half is not None:
        r2 = sr_half.bsde_residual.mean_abs
        if r == 0.0 and r2 == 0.0:
            ratio = math.inf
        else:
            ratio = r / r2 if r2 > 0 else math.inf
        ok = ok and sr_half.n_aborted == 0 and ratio >= HALVING_RATIO
        detail += f"; ratio {ratio:.3g} (need >= {HALVING_RATIO})"
    if sr.n_aborted:
        detail += f"; {sr.n_aborted} paths aborted"
    return VerifyReport(bool(ok), r, bound, ratio, detail)


def solve_and_verify(f: LinearFBSDE, n_paths: int, dt: float, seed: int, *, x0: float | None = None):
    """Simulate at dt and dt/2 with the same seed; returns (result, half-step result, report)."""
    fld = build_field(f, dt / 2)
    sr = simulate(f, fld, n_paths, dt, seed, x0=x0)
    sr_half = simulate(f, fld, n_paths, dt / 2, seed, x0=x0)
    return sr, sr_half, verify_bsde(sr, sr_half)


def write_paths_csv(paths: Paths, fh, max_paths: int | None = None) -> None:
    w = csv.writer(fh)
    w.writerow(["path_id", "t", "X", "Y", "Z"])
    n = paths.X.shape[0] if max_paths is None else min(max_paths, paths.X.shape[0])
    for i in range(n):
        for j, t in enumerate(paths.t):
            zj = paths.Z[i, j] if j < paths.Z.shape[1] else math.nan
            w.writerow([i, repr(float(t)), repr(float(paths.X[i, j])), repr(float(paths.Y[i, j])), repr(float(zj))])


def summary_json(sr: SimResult) -> str:
    return json.dumps(sr.to_record(), indent=2)
