"""Well-posedness analysis, equivalence/decoupling transforms and Monte-Carlo
solution of scalar linear forward-backward SDEs, with an LQ control front end."""

from .core import (
    CoeffMatrix,
    Cubic,
    FBSDEEnvelope,
    Interval,
    LinearFBSDE,
    LQProblem,
    QuadraticForm3,
    parse_config,
    serialize,
    validate_fbsde,
)

__version__ = "0.1.0"

__all__ = [
    "CoeffMatrix",
    "Cubic",
    "FBSDEEnvelope",
    "Interval",
    "LinearFBSDE",
    "LQProblem",
    "QuadraticForm3",
    "parse_config",
    "serialize",
    "validate_fbsde",
]
