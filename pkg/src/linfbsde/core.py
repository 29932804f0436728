"""Domain types, validation and config ingestion for scalar linear FBSDEs.

The system handled throughout the package is

    dX = (b1 X + b2 Y + b3 Z) dt + (s1 X + s2 Y + s3 Z) dW,   X(0) = x0
   -dY = (f1 X + f2 Y + f3 Z) dt - Z dW,                      Y(T) = h X(T)

with constant scalar coefficients.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields
from typing import Any, Iterable

import numpy as np

TERMINAL_REL_TOL = 1e-12

COEFF_NAMES = ("f1", "f2", "f3", "b1", "b2", "b3", "s1", "s2", "s3")


# ---------------------------------------------------------------- errors


class FBSDEError(Exception):
    """Base class for all package errors."""


@dataclass(frozen=True)
class Issue:
    code: str
    field: str | None = None
    message: str = ""

    def __str__(self) -> str:
        where = f"[{self.field}] " if self.field else ""
        return f"{self.code}: {where}{self.message}".rstrip(": ")


class ValidationError(FBSDEError):
    """Raised with every violated invariant collected in ``issues``."""

    def __init__(self, issues: Iterable[Issue]):
        self.issues = tuple(issues)
        super().__init__("; ".join(str(i) for i in self.issues))

    @property
    def codes(self) -> tuple[str, ...]:
        return tuple(i.code for i in self.issues)


class ConfigError(FBSDEError):
    code = "ConfigError"


class ConfigSyntaxError(ConfigError):
    code = "SyntaxError"

    def __init__(self, line: int, msg: str):
        self.line = line
        super().__init__(f"line {line}: {msg}")


class MissingField(ConfigError):
    code = "MissingField"

    def __init__(self, name: str):
        self.name = name
        super().__init__(f"missing field {name!r}")


class UnknownField(ConfigError):
    code = "UnknownField"

    def __init__(self, name: str):
        self.name = name
        super().__init__(f"unknown field {name!r}")


# ---------------------------------------------------------------- types


@dataclass(frozen=True)
class CoeffMatrix:
    """The nine scalar coefficients of a linear FBSDE."""

    f1: float
    f2: float
    f3: float
    b1: float
    b2: float
    b3: float
    s1: float
    s2: float
    s3: float

    @classmethod
    def from_rows(cls, f: Iterable[float], b: Iterable[float], s: Iterable[float]) -> "CoeffMatrix":
        f1, f2, f3 = (float(v) for v in f)
        b1, b2, b3 = (float(v) for v in b)
        s1, s2, s3 = (float(v) for v in s)
        return cls(f1, f2, f3, b1, b2, b3, s1, s2, s3)

    @classmethod
    def zeros(cls) -> "CoeffMatrix":
        return cls(*([0.0] * 9))

    @property
    def f(self) -> tuple[float, float, float]:
        return (self.f1, self.f2, self.f3)

    @property
    def b(self) -> tuple[float, float, float]:
        return (self.b1, self.b2, self.b3)

    @property
    def s(self) -> tuple[float, float, float]:
        return (self.s1, self.s2, self.s3)

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(getattr(self, n) for n in COEFF_NAMES)

    def matrix(self) -> np.ndarray:
        """The 3x3 array with rows (-f, b, s) used by the monotonicity conditions."""
        return np.array(
            [
                [-self.f1, -self.f2, -self.f3],
                [self.b1, self.b2, self.b3],
                [self.s1, self.s2, self.s3],
            ]
        )

    def scale(self) -> float:
        return max(1.0, max(abs(v) for v in self.as_tuple()))


@dataclass(frozen=True)
class LinearFBSDE:
    coeffs: CoeffMatrix
    h: float
    x0: float = 1.0
    T: float = 1.0


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    @property
    def degenerate(self) -> bool:
        return self.lo == self.hi

    def corners(self) -> tuple[float, ...]:
        return (self.lo,) if self.degenerate else (self.lo, self.hi)


@dataclass(frozen=True)
class FBSDEEnvelope:
    """Constant-per-coefficient bounds for time-varying coefficients and a random h."""

    bounds: dict[str, Interval]
    h: Interval
    x0: float = 1.0
    T: float = 1.0

    def midpoint(self) -> LinearFBSDE:
        c = CoeffMatrix(**{k: 0.5 * (self.bounds[k].lo + self.bounds[k].hi) for k in COEFF_NAMES})
        return LinearFBSDE(c, 0.5 * (self.h.lo + self.h.hi), self.x0, self.T)

    @classmethod
    def from_fbsde(cls, fb: LinearFBSDE, widen: float = 0.0, widen_h: float = 0.0) -> "FBSDEEnvelope":
        bounds = {
            k: Interval(getattr(fb.coeffs, k) - widen, getattr(fb.coeffs, k) + widen)
            for k in COEFF_NAMES
        }
        return cls(bounds, Interval(fb.h - widen_h, fb.h + widen_h), fb.x0, fb.T)


@dataclass(frozen=True)
class Cubic:
    """c3*y**3 + c2*y**2 + c1*y + c0."""

    c3: float
    c2: float
    c1: float
    c0: float

    def __call__(self, y):
        return ((self.c3 * y + self.c2) * y + self.c1) * y + self.c0

    def coeffs(self) -> tuple[float, float, float, float]:
        return (self.c3, self.c2, self.c1, self.c0)

    def derivative(self, y):
        return (3.0 * self.c3 * y + 2.0 * self.c2) * y + self.c1

    def scale(self) -> float:
        return abs(self.c3) + abs(self.c2) + abs(self.c1) + abs(self.c0)


@dataclass(frozen=True)
class QuadraticForm3:
    """Symmetric 3x3 matrix, stored as its upper triangle so symmetry holds by construction."""

    m11: float
    m12: float
    m13: float
    m22: float
    m23: float
    m33: float

    def array(self) -> np.ndarray:
        return np.array(
            [
                [self.m11, self.m12, self.m13],
                [self.m12, self.m22, self.m23],
                [self.m13, self.m23, self.m33],
            ]
        )

    def __neg__(self) -> "QuadraticForm3":
        return QuadraticForm3(*(-getattr(self, f.name) for f in fields(self)))

    def __call__(self, x: float, y: float, z: float) -> float:
        v = np.array([x, y, z])
        return float(v @ self.array() @ v)


@dataclass(frozen=True)
class LQProblem:
    """Scalar stochastic LQ problem with constant data.

    dx = (A x + B u) dt + (C x + D u) dW,
    J = 1/2 E int (R x^2 + 2 S u x + N u^2) dt + 1/2 E[Q x(T)^2].
    """

    A: float
    B: float
    C: float
    D: float
    R: float
    S: float
    N: float
    Q: float
    x0: float = 1.0
    T: float = 1.0


# ---------------------------------------------------------------- validation


def _finite_issues(values: dict[str, float]) -> list[Issue]:
    out = []
    for name, v in values.items():
        if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
            out.append(Issue("NonFinite", name, f"value {v!r} is not a finite real"))
    return out


def terminal_singular(s3: float, h: float) -> bool:
    if s3 == 0.0:
        return False
    return abs(h - 1.0 / s3) <= TERMINAL_REL_TOL * max(1.0, abs(h))


def validate_fbsde(raw: LinearFBSDE | dict[str, Any]) -> LinearFBSDE:
    """Check all invariants of a linear FBSDE and return it as a ``LinearFBSDE``.

    ``raw`` may already be a ``LinearFBSDE`` (idempotent) or a mapping with
    keys ``coeffs`` (a ``CoeffMatrix`` or mapping of the nine names), ``h``,
    ``x0`` and ``T``.  Every violation is collected before raising.
    """
    if isinstance(raw, LinearFBSDE):
        coeffs, h, x0, T = raw.coeffs, raw.h, raw.x0, raw.T
        cvals = {n: getattr(coeffs, n) for n in COEFF_NAMES}
    else:
        c = raw["coeffs"]
        cvals = {n: (getattr(c, n) if isinstance(c, CoeffMatrix) else c[n]) for n in COEFF_NAMES}
        h, x0, T = raw["h"], raw.get("x0", 1.0), raw.get("T", 1.0)

    issues = _finite_issues({**cvals, "h": h, "x0": x0, "T": T})
    bad = {i.field for i in issues}
    if "T" not in bad and T <= 0:
        issues.append(Issue("HorizonNonPositive", "T", f"T={T} must be > 0"))
    if "h" not in bad and "s3" not in bad and terminal_singular(cvals["s3"], h):
        issues.append(Issue("TerminalSingular", "h", f"h={h} equals 1/s3"))
    if issues:
        raise ValidationError(issues)
    coeffs = CoeffMatrix(**{n: float(v) for n, v in cvals.items()})
    return LinearFBSDE(coeffs, float(h), float(x0), float(T))


def validate_lq(raw: LQProblem) -> LQProblem:
    vals = {f.name: getattr(raw, f.name) for f in fields(raw)}
    issues = _finite_issues(vals)
    bad = {i.field for i in issues}
    if "N" not in bad and raw.N == 0:
        issues.append(Issue("NDegenerate", "N", "N must be nonzero"))
    if "T" not in bad and raw.T <= 0:
        issues.append(Issue("HorizonNonPositive", "T", f"T={raw.T} must be > 0"))
    if issues:
        raise ValidationError(issues)
    return LQProblem(**{k: float(v) for k, v in vals.items()})


def validate_envelope(env: FBSDEEnvelope) -> FBSDEEnvelope:
    issues: list[Issue] = []
    for name, iv in [*env.bounds.items(), ("h", env.h)]:
        issues += _finite_issues({f"{name}.lo": iv.lo, f"{name}.hi": iv.hi})
        if iv.lo > iv.hi:
            issues.append(Issue("IntervalInvalid", name, f"[{iv.lo}, {iv.hi}] is empty"))
    missing = set(COEFF_NAMES) - set(env.bounds)
    for name in sorted(missing):
        issues.append(Issue("MissingField", name, "no bounds given"))
    if env.T <= 0:
        issues.append(Issue("HorizonNonPositive", "T", f"T={env.T} must be > 0"))
    if issues:
        raise ValidationError(issues)
    return env


# ---------------------------------------------------------------- config IO

_FBSDE_KEYS = ("kind", "b", "sigma", "f", "h", "x0", "T")
_LQ_KEYS = ("kind", "A", "B", "C", "D", "R", "S", "N", "Q", "x0", "T")


def _reject_constant(name: str):
    raise ConfigSyntaxError(0, f"non-decimal literal {name}")


def _check_keys(doc: dict, allowed: tuple[str, ...]) -> None:
    for k in doc:
        if k not in allowed:
            raise UnknownField(k)
    for k in allowed:
        if k not in doc:
            raise MissingField(k)


def _num(name: str, v: Any) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValidationError([Issue("NonFinite", name, f"value {v!r} is not a number")])
    return float(v)


def _num_or_interval(name: str, v: Any) -> float | Interval:
    if isinstance(v, list):
        if len(v) != 2:
            raise ValidationError([Issue("IntervalInvalid", name, "interval needs [lo, hi]")])
        return Interval(_num(name, v[0]), _num(name, v[1]))
    return _num(name, v)


def _triple(doc: dict, key: str) -> list:
    v = doc[key]
    if not isinstance(v, list) or len(v) != 3:
        raise ValidationError([Issue("NonFinite", key, "expected a list of three entries")])
    return v


def parse_config(text: str) -> LinearFBSDE | FBSDEEnvelope | LQProblem:
    """Parse a JSON config document (strict: unknown keys are rejected)."""
    try:
        doc = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as e:
        raise ConfigSyntaxError(e.lineno, e.msg) from None
    if not isinstance(doc, dict):
        raise ConfigSyntaxError(1, "top level must be an object")
    if "kind" not in doc:
        raise MissingField("kind")
    kind = doc["kind"]
    if kind == "lq":
        _check_keys(doc, _LQ_KEYS)
        return validate_lq(LQProblem(**{k: _num(k, doc[k]) for k in _LQ_KEYS[1:]}))
    if kind != "fbsde":
        raise ConfigSyntaxError(1, f"unknown kind {kind!r}")

    _check_keys(doc, _FBSDE_KEYS)
    entries: dict[str, float | Interval] = {}
    for key, prefix in (("b", "b"), ("sigma", "s"), ("f", "f")):
        for i, v in enumerate(_triple(doc, key), start=1):
            entries[f"{prefix}{i}"] = _num_or_interval(f"{key}[{i - 1}]", v)
    h = _num_or_interval("h", doc["h"])
    x0, T = _num("x0", doc["x0"]), _num("T", doc["T"])

    if any(isinstance(v, Interval) for v in [*entries.values(), h]):
        as_iv = lambda v: v if isinstance(v, Interval) else Interval(v, v)  # noqa: E731
        env = FBSDEEnvelope({k: as_iv(v) for k, v in entries.items()}, as_iv(h), x0, T)
        return validate_envelope(env)
    return validate_fbsde({"coeffs": entries, "h": h, "x0": x0, "T": T})


def to_document(obj: LinearFBSDE | FBSDEEnvelope | LQProblem) -> dict:
    """Inverse of ``parse_config`` (as a dict; ``json.dumps`` it for text)."""
    if isinstance(obj, LQProblem):
        return {"kind": "lq", **{k: getattr(obj, k) for k in _LQ_KEYS[1:]}}
    if isinstance(obj, FBSDEEnvelope):
        iv = lambda i: i.lo if i.degenerate else [i.lo, i.hi]  # noqa: E731
        get = lambda p: [iv(obj.bounds[f"{p}{i}"]) for i in (1, 2, 3)]  # noqa: E731
        return {"kind": "fbsde", "b": get("b"), "sigma": get("s"), "f": get("f"),
                "h": iv(obj.h), "x0": obj.x0, "T": obj.T}
    c = obj.coeffs
    return {"kind": "fbsde", "b": list(c.b), "sigma": list(c.s), "f": list(c.f),
            "h": obj.h, "x0": obj.x0, "T": obj.T}


def serialize(obj) -> str:
    return json.dumps(to_document(obj), indent=2)


def load_config(path) -> LinearFBSDE | FBSDEEnvelope | LQProblem:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
