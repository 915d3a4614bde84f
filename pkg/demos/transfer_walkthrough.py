"""Fit the adaptive transfer classifier on the second benchmark setting.

Compares the selected classifier with a target-only fit and the pooled
baseline as the amount of source data grows, using exact quadrature risk.
"""

from adaptive_transfer import Dataset, fit_atl, fit_pooled, sample, setting2
from adaptive_transfer.diagnostics import Quadrature, risk
from adaptive_transfer.experiment import default_atl_config

spec = setting2()
cfg = default_atl_config()
D_Q = sample(spec, "Q", 100, seed=1)
D_P_all = sample(spec, "P", 1000, seed=2)
mode = Quadrature(256)

target_only = fit_atl(Dataset.empty(2), D_Q, cfg)
print(f"target only          error {100 * risk(target_only.chosen, spec, mode).test_error:5.1f}%")

for n_P in (100, 500, 1000):
    D_P = D_P_all.head(n_P)
    atl = fit_atl(D_P, D_Q, cfg)
    pooled = fit_pooled(D_P, D_Q, cfg)
    e_atl = 100 * risk(atl.chosen, spec, mode).test_error
    e_pool = 100 * risk(pooled.chosen, spec, mode).test_error
    print(f"n_P = {n_P:4d}  ATL {e_atl:5.1f}%  pooled {e_pool:5.1f}%  chose {atl.describe()}")
