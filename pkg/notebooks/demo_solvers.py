"""
The limiting profile
====================

The limit F solves F'(x) = x * int_x^inf z^-1 dPsi(F(z)). Two solvers
compute it: a damped fixed-point iteration and shooting on the
equivalent second-order equation. They agree, and their tails match
the predicted asymptotics.
"""

import numpy as np

from intervalchoice import metrics, parse_rule
from intervalchoice.evolution import (
    fixed_point,
    min_k_constant,
    min_k_phase,
    ode_solve,
    tail_fit,
)

# %%
# Uniform choice has the closed form F(x) = 1 - (1 + x) e^-x.
F = fixed_point(parse_rule("uniform"))
print("F(1) =", float(F(1.0)), " exact", 1 - 2 / np.e)

# %%
# Both methods on max-2 and min-2, with the normalizations that every
# stationary profile satisfies.
for name in ("max:2", "min:2"):
    rule = parse_rule(name)
    A = fixed_point(rule)
    B = ode_solve(rule)
    sup = float(np.max(np.abs(A.values - np.asarray(B(A.xs)))))
    print(f"{name}: iterations={A.meta['iterations']} shots={B.meta['shots']} sup gap={sup:.1e}")
    print(f"   mass={metrics.underlying_mass(A):.9f} candy={metrics.candy_norm(A):.9f} "
          f"drift={metrics.drift_D(rule, A):.9f}")

# %%
# Tails: max-k decays like x exp(-k x); min-k like c_k / x^(1/(k-1)).
for k in (2, 3):
    fit = tail_fit(fixed_point(parse_rule(f"max:{k}")), "max_tail", (8.0, 14.0))
    print(f"max:{k} slope {fit.slope:.4f} (prefactor {fit.level:.4f})")
F2 = fixed_point(parse_rule("min:2"))
fit = tail_fit(F2, "min_tail", (100.0, 1000.0))
print(f"min:2 slope {fit.slope:.4f} level {fit.level:.4f} vs c_2 = {min_k_constant(2)}")

# %%
# The same constant appears as the saddle value of a planar ODE.
for k in (2, 3):
    res = min_k_phase(k)
    print(f"k={k}: G(inf) = {res.G_infinity:.6f}  c_k = {res.c_k:.6f}")

# %%
# As k grows, max-k approaches always splitting the largest interval,
# whose limit is x^2/4 capped at 1.
F50 = fixed_point(parse_rule("max:50"))
print("max:50 sup distance to x^2/4 ∧ 1:",
      float(np.max(np.abs(F50.values - np.minimum(F50.xs**2 / 4, 1)))))
