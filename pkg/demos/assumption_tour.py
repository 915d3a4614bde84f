"""Numerical checks of the distributional conditions and the minimax rates."""

import math

from adaptive_transfer import ParameterVector, rate_bounds, setting1
from adaptive_transfer.diagnostics import (
    check_margin_assumption,
    check_smoothness,
    check_tail_assumption,
    lower_density,
)
from adaptive_transfer.distributions import GammaFamily, GaussianScale

# far from the mode the Gaussian lower density is twice the density
for x in (2.0, 3.0):
    pdf = math.exp(-x * x / 2) / math.sqrt(2 * math.pi)
    print(f"omega(N(0,1), {x}) = {lower_density(GaussianScale(1.0), x, 1):.6f}   2 phi(x) = {2 * pdf:.6f}")

for g in (0.5, 1.0, 2.0):
    C = max(2 / g ** g, 2 ** g)
    rep = check_tail_assumption(GammaFamily(g), GammaFamily(g), 1, 1, g, g, C, [0.05, 0.1, 0.2, 0.4])
    est = ", ".join(f"{c.estimate:.3f}<={c.bound:.3f}" for c in rep["target"].checks)
    print(f"gamma = {g}: {est}  passed={rep['target'].passed}")

m = check_margin_assumption(setting1(), 1.0, 1.0, [0.25]).checks[0]
print(f"sinusoid margin mass at 0.25: {m.estimate:.4f} +- {m.standard_error:.4f} (exact 1/3)")
s = check_smoothness(setting1(), "Q", 1.0, 2 * math.pi)
print(f"sinusoid Lipschitz ratio: {s.extra['max_ratio']:.3f} (bound 2 pi)")

theta = ParameterVector(Delta=0.0, phi=1.0, Lstar=1, d_Q=2, gamma_Q=1, d_P=2, gamma_P=1, C_PQ=2,
                        alpha=1, C_M=1, beta=1, C_S=1)
for n_P in (0, 100, 1000, 10_000):
    rb = rate_bounds(theta, n_P, 100)
    print(f"n_P = {n_P:5d}: lower {rb.lower:.4f}  upper {rb.upper:.4f}")
