"""Ladder exponents of the integrated walk from a small fluctuation run.

Estimates Phi(q) from Levy blocks and kappa_+(q), kappa_-(q) from the
Frullani integral, then prints their log-slopes and the product ratio
kappa_+ kappa_- / Phi, which should be flat in q.  About a minute.

    python demos/kappa_small.py
"""
import numpy as np

from persistence_lab.excursions import levy_block_table
from persistence_lab.fluctuation import kappa_estimate, log_grid, phi_estimate, product_ratio
from persistence_lab.model import build_model

chain = build_model("srw", half_width=3000).chain()
q = np.logspace(-3, -1, 7)
blocks = levy_block_table(chain, 1.0, 20_000, 1)
phi = phi_estimate(blocks.dtau, q)
kt = kappa_estimate(chain, q, log_grid(1e-4, 1e3, 32), 500, 2,
                    phi=lambda x: float(np.interp(x, phi.q, phi.phi)))
ratio, spread = product_ratio(kt, phi)
print(f"Phi slope      {phi.slope():.3f}  (1/2 expected)")
print(f"kappa_+ slope  {kt.slope('plus'):.3f}  (1/4 expected)")
print(f"kappa_- slope  {kt.slope('minus'):.3f}")
print(f"product ratio spread {spread:.3f}")
