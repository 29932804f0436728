"""Worked instances used by the scripts, the CLI presets and the regression tests."""
from __future__ import annotations

from .core import CoeffMatrix, LinearFBSDE, LQProblem

# Constant instance decided by the unified approach but not by monotonicity.
COUPLED_EXAMPLE = LinearFBSDE(
    CoeffMatrix.from_rows(f=(-2.0, 0.0, 1.0), b=(1.0, -1.0, -2.0), s=(0.0, 2.0, 1.0)),
    h=-1.0,
)

# Indefinite LQ problem of the closing example.
LQ_EXAMPLE = LQProblem(A=1.0, B=1.0, C=1.0, D=2.0, R=1.0, S=2.0, N=-1.0, Q=-4.0)

# The Hamiltonian system exactly as printed for that LQ problem.  Its b3 = -2
# differs from what the LQ data produce (+2); see ``lq.build_hamiltonian``.
PRINTED_HAMILTONIAN = LinearFBSDE(
    CoeffMatrix.from_rows(f=(5.0, 3.0, 5.0), b=(3.0, 1.0, -2.0), s=(5.0, 2.0, 4.0)),
    h=-4.0,
)

# Printed (two-decimal) transformed system for (m, n, c) = (1, -0.658, 1).
PRINTED_TRANSFORMED = LinearFBSDE(
    CoeffMatrix.from_rows(f=(0.0, 0.69, -2.26), b=(8.75, -5.11, 4.29), s=(-3.87, 1.84, -3.06)),
    h=1.55,
)
