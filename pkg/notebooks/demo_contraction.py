"""
Contraction of the deterministic evolution
==========================================

Two profiles evolved under the same rule approach each other at rate
e^-t in the weighted norm int x^-2 |f| dx. Here the pair is the
Kakutani limit x^2/4 ∧ 1 and the size-biased exponential.
"""

import math

import numpy as np

from intervalchoice import metrics, parse_rule
from intervalchoice.evolution import default_grid, evolve, kakutani_profile, size_biased_exponential

for name in ("uniform", "max:2", "min:2"):
    rule = parse_rule(name)
    xs = np.union1d(default_grid(rule), [2.0])   # keep the kink of x^2/4 on the grid
    F0, G0 = kakutani_profile(xs), size_biased_exponential(xs)
    f = evolve(rule, F0, 2.0, 4)
    g = evolve(rule, G0, 2.0, 4)
    d0 = metrics.d_candy(F0, G0)
    print(name)
    for t, a, b in zip(f.times, f.frames, g.frames):
        d = metrics.d_candy(a, b)
        print(f"  t={t:4.2f}  d={d:.5f}  ratio to e^-t d0 = {d / (math.exp(-t) * d0):.4f}")
