# %% [markdown]
# # Exit times: Monte Carlo against the grid solver
#
# The mean exit time from (-1, 1) solves I u = -1 with zero exterior data.
# We estimate it by path simulation and by the finite-difference scheme,
# and check the r^alpha scaling of the exit time from balls.

# %%
import numpy as np

from levykit.fd import assemble_and_solve
from levykit.feynman_kac import DirichletProblem, dirichlet_solve, exit_time_moments
from levykit.kernels import Ball, make_kernel
from levykit.paths import EulerConfig
from levykit.sampling import RngStream

m = make_kernel("constant", 1, 1.5)
grid = assemble_and_solve(m, (-1.0, 1.0), 256, lambda x: np.ones_like(x))
prob = DirichletProblem(m, Ball([0.0], 1.0), f=1.0)
cfg = EulerConfig(dt=2e-3, t_max=20.0)

# %%
for i, x in enumerate((0.0, 0.5, 0.9)):
    est = dirichlet_solve(prob, [x], 4000, cfg, RngStream(1, i))
    print(f"x={x:.1f}  MC {est.mean:.4f} +- {est.stderr:.4f}   grid {grid(np.array([x]))[0]:.4f}")

# %%
# E_0 tau(B_r) / r^alpha should not depend on r
for j, r in enumerate((0.5, 1.0, 2.0)):
    tab = exit_time_moments(DirichletProblem(m, Ball([0.0], r)), [0.0], 2, 4000,
                            EulerConfig(dt=2e-3 * r**1.5, t_max=40 * r**1.5), RngStream(2, j))
    print(f"r={r:.1f}  E tau / r^a = {tab[0].mean / r**1.5:.4f} +- {tab[0].stderr / r**1.5:.4f}")
