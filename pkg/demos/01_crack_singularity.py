"""
Crack tip in an anisotropic plate
=================================

A slit along the negative x axis, one anisotropic material, and boundary
data taken from the exact square-root crack field. The modal solver should
find the exponent 1/2 and converge to the exact field as the angular mesh
is refined.
"""

import numpy as np

from dmol.forward import convergence_study, gamma_index, solve_forward
from dmol.problems import CRACK_TENSOR, crack_problem

# %%
# The exact field comes from the two roots of the characteristic quartic in
# the upper half plane.
pb, exact = crack_problem(M=32, order=1)
print("tensor (a11, a22, a33, a12, a13, a23):", CRACK_TENSOR.as_vector())

sol = solve_forward(pb)
print("gamma_3 on M=32:", gamma_index(sol, 3), "(exact 0.5)")

# %%
# The field near the tip: the radial derivative grows like r^(-1/2).
r_tilde = pb.shape.radius(np.pi / 2)
for r in (1e-2, 1e-4, 1e-6):
    rho = np.log(r / r_tilde)
    g = sol.evaluate_gradient(rho, np.pi / 2)
    print(f"r = {r:.0e}: |grad u| = {np.linalg.norm(g):.3e}, times sqrt(r): {np.linalg.norm(g) * np.sqrt(r):.4f}")

# %%
# Mesh refinement: eigenvalue error and relative H1 error against the
# exact field, for linear and quadratic elements.
for order in (1, 2):
    rep = convergence_study(pb, [8, 16, 32, 64], order, reference="exact", exact=exact)
    print(f"\nP{order}")
    print("   M   eig_error  order     h1_rel  order")
    for M, e, eo, h, ho in rep.rows():
        eo = "" if eo is None else f"{eo:5.2f}"
        ho = "" if ho is None else f"{ho:5.2f}"
        print(f"{M:4d}  {e:10.3e}  {eo:>5}  {h:10.3e}  {ho:>5}")
