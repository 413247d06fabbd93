"""Draw a few paths conditioned to keep zeta below 1 up to t = 200.

Writes ``trajectory_*.csv`` (columns t, X, zeta) to ./runs/demo_conditioned
and prints the maximum of zeta on each accepted path.

    python demos/conditioned_paths.py
"""
from persistence_lab.runner import sample_conditioned_trajectories

cfg = {
    "name": "demo_conditioned",
    "kind": "persistence",
    "model": {"family": "srw", "params": {"half_width": 400}},
    "z": 1.0,
    "horizon": 200.0,
    "replicas": 1,
    "seed": 3,
}
traces, acc = sample_conditioned_trajectories(cfg, 200.0, 5, "runs/demo_conditioned")
print(f"acceptance rate ~ {acc:.4f}")
for k, tr in enumerate(traces):
    print(f"path {k}: {tr.t.size - 1} jumps, max zeta {tr.xi[-1]:.2f}, final X {tr.x[-1]:+.0f}")
