"""Coefficient matrices sharing the dominating function F, and parameter searches
that make such a matrix satisfy the monotonicity conditions."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core import CoeffMatrix, FBSDEError
from .criteria import Verdict, check_monotonicity, leading_minors, symmetrize

log = logging.getLogger(__name__)

DET_MARGIN = 1e-9


class EmptyGate(FBSDEError):
    pass


@dataclass(frozen=True)
class EquivalentMatrix:
    kind: str  # "B", "C", "BfromRemark", "CfromRemark", "D"
    params: tuple[float, ...]
    matrix: CoeffMatrix


def equiv_B(c: CoeffMatrix, p: float) -> EquivalentMatrix:
    """f3 -> f3 - p and the b-row shifted by p times the s-row.

    Structurally the same system driven by dW + p dt.
    """
    m = CoeffMatrix(
        c.f1, c.f2, c.f3 - p,
        c.b1 + c.s1 * p, c.b2 + c.s2 * p, c.b3 + c.s3 * p,
        c.s1, c.s2, c.s3,
    )
    return EquivalentMatrix("B", (p,), m)


def equiv_C(c: CoeffMatrix, q: float) -> EquivalentMatrix:
    m = CoeffMatrix(
        c.f1, c.f2 + c.f3 * q, c.f3,
        c.b1, c.b2 + c.b3 * q, c.b3,
        c.s1 - q, c.s2 + c.s3 * q, c.s3,
    )
    return EquivalentMatrix("C", (q,), m)


def equiv_D(c: CoeffMatrix, p: float, q: float) -> EquivalentMatrix:
    f3p = c.f3 - p
    b3p = c.b3 + c.s3 * p
    m = CoeffMatrix(
        c.f1, c.f2 + f3p * q, f3p,
        c.b1 + c.s1 * p, c.b2 + c.s2 * p + b3p * q, b3p,
        c.s1 - q, c.s2 + c.s3 * q, c.s3,
    )
    return EquivalentMatrix("D", (p, q), m)


def equiv_remark35(c: CoeffMatrix, which: str, param: float) -> EquivalentMatrix:
    """Variants exploiting the symmetric roles of b1 and f2 in F.

    ``which="B"``: f2 also absorbs s1*p instead of b1.
    ``which="C"``: b1 absorbs f3*q instead of f2.
    """
    if which == "B":
        p = param
        m = CoeffMatrix(
            c.f1, c.f2 + c.s1 * p, c.f3 - p,
            c.b1, c.b2 + c.s2 * p, c.b3 + c.s3 * p,
            c.s1, c.s2, c.s3,
        )
        return EquivalentMatrix("BfromRemark", (p,), m)
    if which == "C":
        q = param
        m = CoeffMatrix(
            c.f1, c.f2, c.f3,
            c.b1 + c.f3 * q, c.b2 + c.b3 * q, c.b3,
            c.s1 - q, c.s2 + c.s3 * q, c.s3,
        )
        return EquivalentMatrix("CfromRemark", (q,), m)
    raise ValueError(f"which must be 'B' or 'C', got {which!r}")


# ---------------------------------------------------------------- searches


@dataclass(frozen=True)
class FeasiblePoint:
    param: float
    det2: float
    det3: float
    verdict: Verdict


def _gate(c: CoeffMatrix, h: float) -> str:
    if h < 0 and c.f1 < 0:
        return "i"
    if h > 0 and c.f1 > 0:
        return "ii"
    raise EmptyGate(f"neither gate holds: h={h}, f1={c.f1} (need h<0,f1<0 or h>0,f1>0)")


def _grid(lo: float, hi: float, step: float) -> np.ndarray:
    n = int(round((hi - lo) / step))
    return np.round(lo + step * np.arange(n + 1), 12)


def _search(c: CoeffMatrix, h: float, lo: float, hi: float, step: float, make) -> list[FeasiblePoint]:
    case = _gate(c, h)
    out = []
    for v in _grid(lo, hi, step):
        mat = make(c, float(v)).matrix
        d = leading_minors(symmetrize(mat).array())
        det2, det3 = d[1], d[2]
        if det2 <= DET_MARGIN:
            continue
        if case == "i" and not det3 > DET_MARGIN:
            continue
        if case == "ii" and not det3 < -DET_MARGIN:
            continue
        verdict = check_monotonicity(mat, h)
        if not verdict.well_posed:
            log.warning("minor pattern holds at %g but monotonicity check disagrees: %s", v, verdict)
            continue
        out.append(FeasiblePoint(float(v), det2, det3, verdict))
    return out


def feasible_p(c: CoeffMatrix, h: float, lo: float = -10.0, hi: float = 10.0, step: float = 0.01) -> list[FeasiblePoint]:
    """Grid values of p for which B(p) satisfies the monotonicity conditions.

    Gate (i) h<0, f1<0: both leading minors of the symmetrised B(p) positive.
    Gate (ii) h>0, f1>0: 2x2 minor positive, 3x3 minor negative.
    """
    return _search(c, h, lo, hi, step, equiv_B)


def feasible_q(c: CoeffMatrix, h: float, lo: float = -10.0, hi: float = 10.0, step: float = 0.01) -> list[FeasiblePoint]:
    """As :func:`feasible_p` with the C(q) family."""
    return _search(c, h, lo, hi, step, equiv_C)


def write_feasible_csv(points: list[FeasiblePoint], name: str, fh) -> None:
    import csv

    w = csv.writer(fh)
    w.writerow(["param", "value", "det2", "det3", "verdict"])
    for pt in points:
        w.writerow([name, repr(pt.param), repr(pt.det2), repr(pt.det3), pt.verdict.criterion])
