"""
Folds of a two-point boundary value problem
===========================================

u'' = u^2 (u^2 - p) with u'(0) = 0, u(1) = 0 on five grid points.
Reference folds come from continuation plus a sigma_min scan; the surrogate
search is compared against them branch by branch.
"""

# %%
from bifurnet import oracle
from bifurnet.datagen import trace_ex4_branches
from bifurnet.problems import ex4_bvp

spec = ex4_bvp()
for br in trace_ex4_branches():
    scan = oracle.sigma_min_scan(spec, br)
    f = scan.folds[-1]
    print(f"{br.label:12s} nodes={len(br):4d}  fold p={f.p:.6f}  ({f.method})")

# %%
# one branch end to end with the desk settings (about a minute)
from bifurnet import experiments

res = experiments.run_ex4(branches=[1])
for row in res.rows:
    print(row)

# %%
# why the fourth fold is hard: sigma_min collapses within a short stretch of p
br = trace_ex4_branches()[3]
for p, s in list(zip(br.p[:, 0], br.sigma_min))[-40::4]:
    print(f"p={p:.6f}  sigma_min={s:.3e}")
