"""
Turing threshold of the Schnakenberg system
===========================================

Critical diffusion ratio d* over a few (b, eta) nodes: surrogate search
against the linear dispersion relation.
"""

# %%
import numpy as np

from bifurnet import oracle

bs = oracle.EX5_FIXTURE_BS
etas = oracle.EX5_FIXTURE_ETAS
table = np.array([[oracle.schnakenberg_dstar(1 / 3, b, eta) for eta in etas] for b in bs])
print("dispersion relation d*:")
print(table.round(3))

# %%
from bifurnet import experiments

res = experiments.run_ex5(bs=bs[:1], etas=etas, epochs=2000, warmup_epochs=500)
for row in res.rows:
    print(f"b={row['b']:.4f} eta={row['eta']:.0f}  d*={row['d_star']:.3f}  oracle={row['d_oracle']:.3f}  "
          f"rel={row['rel_error']:.3f}")
