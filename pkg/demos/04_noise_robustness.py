"""
Noise robustness on a two-material star
=======================================

The same inversion at three noise levels. Iterations stop when the relative
change of J falls below the tolerance.
"""

import numpy as np

from dmol.discretization import build_mesh
from dmol.forward import reference_solution
from dmol.inverse import InverseConfig, MeasurementGrid, run_inversion, synthesize_measurements
from dmol.problems import STAR3_INIT, star3_problem, uniform_material

m = 16
pb = star3_problem(M=128, order=1)
init = uniform_material(pb, m, STAR3_INIT)
mesh = build_mesh(pb.domain, 128, 1, extra_nodes=init.edges)
grid = MeasurementGrid.build(pb.shape, extra_nodes=mesh.nodes)

# one reference solve serves all noise levels
ref, M_used = reference_solution(pb, M_ref=64, order_ref=2)
cfg = InverseConfig(m=m, init=init, max_iter=600, relative_steps=True, tau0=0.1, decay=50.0)

for delta in (0.001, 0.003, 0.005):
    z = synthesize_measurements(pb.material, pb, delta, seed=1, grid=grid, solution=ref)
    res = run_inversion(cfg, pb, z, truth=pb.material)
    last = res.history[-1]
    print(f"delta={delta}: {len(res.history)} iterations, l1 error {last['l1_rel_error']:.3e} ({res.stop_reason})")
