"""
Interface singularity in a four-material star
=============================================

Four sectors of the same anisotropic tensor scaled by 10, 5, 1 and 5 meet at
the origin of a five-lobed star. The exponent gamma_3 below one signals a
stress singularity at the junction. A body force enters through a particular
solution; a brute-force strip solver confirms that part.
"""

import numpy as np

from dmol.forward import gamma_index, reference_solution, solve_forward
from dmol.oracles import compare_h1, fd_solve
from dmol.problems import STAR5_GAMMA3, star5_problem

# %%
# Singular exponent against the tabulated value.
for M in (16, 32, 64, 128):
    g = gamma_index(solve_forward(star5_problem(M=M, order=1)), 3)
    print(f"M={M:4d}  gamma_3 = {g:.10f}  error {abs(g - STAR5_GAMMA3):.3e}")

# %%
# Radial derivatives along the ray phi = pi as r -> 0. The singular mode
# makes one component grow and the other fall.
ref, M_used = reference_solution(star5_problem(), M_ref=128, order_ref=2)
r_tilde = ref.shape.radius(np.pi)
for r in (1e-1, 1e-3, 1e-5):
    rho = np.log(r / r_tilde)
    g = ref.evaluate_gradient(rho, np.pi)  # (2, 2): rows u1, u2
    e_r = np.array([np.cos(np.pi), np.sin(np.pi)])
    print(f"r={r:.0e}: du1/dr = {g[0] @ e_r:+.4e}, du2/dr = {g[1] @ e_r:+.4e}")

# %%
# Cross-check of the body-force treatment against the strip solver, away
# from the corner (r > 0.1). The difference shrinks as the strip grid is refined.
for n_rho, n_phi in ((40, 64), (80, 128)):
    fd = fd_solve(star5_problem(), n_rho=n_rho, n_phi=n_phi)
    print(f"strip grid {n_rho}x{n_phi}: relative H1 difference {compare_h1(fd, ref):.3e}")
