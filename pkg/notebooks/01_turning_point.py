"""
Turning point of x^2 = p
========================

Train surrogates of increasing width on samples of u = sqrt(p) and watch
the located turning point move toward p = 0.
"""

# %%
import numpy as np

from bifurnet import SearchConfig, TrainConfig, find_bifurcation, train_best_of_k
from bifurnet.datagen import gen_ex1
from bifurnet.network import forward
from bifurnet.problems import ex1_turning

spec = ex1_turning()
data = gen_ex1(count=1600, seed=0)
print(len(data), "samples, p in", min(s.p[0] for s in data), "to", max(s.p[0] for s in data))

# %%
# a few thousand epochs are enough to see the trend; the acceptance run uses 20000
for width in (20, 80, 320):
    cfg = TrainConfig(lam=1.0, epochs=4000, width=width, activation="relu")
    net, reports = train_best_of_k(data, spec, cfg)
    res = find_bifurcation(net, spec, SearchConfig(lam=1.0))
    print(f"N={width:4d}  f1={reports[0].final_loss:.2e}  p*={res.p_star[0]:+.4f}  f2={res.f2_value:.2e}")

# %%
# sigma_min of F_u along the surrogate; it should dip to zero at the turning point
p = np.linspace(0.0, 2.0, 9)[:, None]
u = forward(net, p)
print(np.column_stack([p[:, 0], u[:, 0], np.abs(2 * u[:, 0])]).round(4))
