"""
Double-root curve of x^2 + b x + c
==================================

One surrogate over (b, c), then a sweep with b frozen on a grid.
"""

# %%
import numpy as np

from bifurnet import SearchConfig, TrainConfig, sweep_bifurcation, train_best_of_k
from bifurnet.datagen import gen_ex2
from bifurnet.oracle import quadratic_curve
from bifurnet.problems import ex2_quadratic

spec = ex2_quadratic()
data = gen_ex2(n_b=1250, reps=5, seed=0)
net, reports = train_best_of_k(data, spec, TrainConfig(epochs=1000, width=160, batch=250, activation="relu"))
print("f1", reports[0].final_loss)

# %%
b = np.round(np.arange(-20, 21, 4) / 10, 12)
found = sweep_bifurcation(net, spec, {"b": b}, SearchConfig())
c = np.array([r.p_star[1] for r in found])
for bi, ci, ce in zip(b, c, quadratic_curve(b)):
    print(f"b={bi:+.1f}  c*={ci:.4f}  b^2/4={ce:.4f}")
print("max error", np.max(np.abs(c - quadratic_curve(b))))
