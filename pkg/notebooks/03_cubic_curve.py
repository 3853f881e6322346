"""
Triple-root curve of x^3 + b x^2 + c x + d
==========================================

Sweep b over [0, 3/2] and score (c*, d*) with the L1 curve error.
"""

# %%
from bifurnet import experiments

res = experiments.run_ex3(epochs=1000)
for row in res.rows[::5]:
    print({k: round(v, 4) for k, v in row.items()})
print(res.summary)
