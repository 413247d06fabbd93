"""Print closed-form exponents for a sweep of skew Bessel parameters.

    python demos/theory_table.py
"""
from persistence_lab import family_exponents

print(f"{'delta':>6} {'eta':>6} {'gamma':>6} {'alpha':>8} {'rho':>8} {'theta':>8}")
for delta in (0.6, 1.0, 1.4):
    for eta in (-0.5, 0.0, 0.5):
        b = family_exponents("skew_bessel", delta=delta, eta=eta, gamma=1.0)
        print(f"{delta:6.2f} {eta:6.2f} {1.0:6.2f} {b.alpha:8.4f} {b.rho:8.4f} {b.theta:8.4f}")

# integrated random walk and the Bessel-like walk at mu = 0.4
for fam, kw in (("srw", {}), ("bessel_walk", {"mu": 0.4}), ("ou", {})):
    print(fam, kw, f"theta = {family_exponents(fam, **kw).theta:.4f}")
