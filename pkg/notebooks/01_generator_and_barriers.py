# %% [markdown]
# # The non-local generator on test functions
#
# We apply the generator of the symmetric stable kernel to a Gaussian and
# compare with the Fourier value, then look at the barrier integrals A(s), B(s)
# that control boundary behaviour.

# %%
import math

import numpy as np

from levykit.kernels import make_kernel
from levykit.operator import apply_generator, barrier_integrals, gaussian_probe, getoor_probe

m = make_kernel("constant", 1, 1.5)

# %%
# e^{-x^2} at the origin: the symbol |xi|^1.5 gives 2^1.5 Gamma(5/4) / sqrt(pi)
f = gaussian_probe(1, 1 / math.sqrt(2))
val = apply_generator(m, f, np.array([0.0]))
exact = -(2**1.5) * math.gamma(1.25) / math.sqrt(math.pi)
print(f"I f(0) = {val:.10f}, Fourier value {exact:.10f}")

# %%
# (1 - x^2)_+^{alpha/2} is mapped to a constant inside the unit interval
g = getoor_probe(0.75, 1)
for x in (0.0, 0.3, 0.6, 0.9):
    print(f"x={x:.1f}  I g = {apply_generator(m, g, np.array([x])):.6f}")

# %%
# at q = s the barrier integral A vanishes; below it A < 0
for s in (0.6, 0.75, 0.9):
    for q in (s - 0.4, s - 0.2, s):
        A, B = barrier_integrals(s, q)
        print(f"s={s:.2f} q={q:.3f}  A={A:+.3e}  B={B:.4f}")
