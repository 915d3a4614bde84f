"""Sample from the hypercube family used in the minimax lower bound.

Neighbouring vertices share their marginals and disagree only at one
lattice atom, which is what makes them hard to tell apart.
"""

import numpy as np

from adaptive_transfer.diagnostics import density_ratios, lattice_lower_density_bound
from adaptive_transfer.distributions import assouad_constraints, assouad_family, sample

args = dict(q=2, r=0.5, w_P=0.2, w_Q=0.3, eps_P=0.01, eps_Q=0.01, d_Q=2, d_P=2, d=2)
print(assouad_constraints(**args))

family = dict(assouad_family(**args))
s, t = (1, 1, -1, 1), (1, -1, -1, 1)
mu = family[s].marginal_Q
atoms = mu.atoms()
print("eta_Q at atoms, vertex s:", family[s].eta_Q(atoms))
print("eta_Q at atoms, vertex t:", family[t].eta_Q(atoms))

D = sample(family[s], "Q", 2000, seed=0)
where = mu.locate(D.X)
freqs = [float(np.mean(where == k)) for k in range(5)]
print("cube fraction", freqs[0], "atom fractions", freqs[1:])

ratios = density_ratios(mu, atoms, mu.d0).min(axis=1)
print("lattice lower density", ratios, ">= floor", lattice_lower_density_bound(mu, on_atom=True))
