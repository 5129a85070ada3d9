import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from intervalchoice.evolution import kakutani_profile, size_biased_exponential
from intervalchoice.grid import GridError, GridFunction, make_grid
from intervalchoice.metrics import (
    DivergenceError,
    candy_norm,
    d_candy,
    d_l1loc,
    drift_D,
    entropy_of,
    in_unit_ball,
    ks_distance,
    ks_to_sample,
    underlying_mass,
)
from intervalchoice.psi import MaxK, UniformChoice

XS = make_grid(40.0, 4096)
XK = np.union1d(XS, [2.0])


def step_at(points, xs=None):
    """Near-step distribution functions jumping at each of ``points``."""
    pts = sorted(points)
    xs = np.array([0.0, 0.5] + [q for p in pts for q in (p, p + 1e-9)] + [2 * pts[-1] + 1.0])
    xs = np.unique(xs)
    vals = np.zeros_like(xs)
    for p in pts:
        vals += (xs > p) / len(pts)
    return GridFunction(xs, vals, tail_value=1.0)


def test_grid_shape():
    xs = make_grid(40.0, 4096)
    assert xs[0] == 0.0 and xs[1] == pytest.approx(1e-3) and xs[-1] == pytest.approx(40.0)
    assert len(xs) == 4097
    assert 2.0 in make_grid(40.0, 100, extra=[2.0])
    with pytest.raises(GridError):
        GridFunction(np.array([0.0, 1.0, 0.5]), np.zeros(3))
    with pytest.raises(GridError):
        GridFunction(XS, XS[::-1] / 40)


def test_candy_examples():
    assert candy_norm(kakutani_profile(XK)) == pytest.approx(1.0, abs=1e-6)
    zero = GridFunction(XS, np.zeros_like(XS), tail_value=0.0)
    assert candy_norm(zero) == 0.0
    assert candy_norm(size_biased_exponential(XS)) == pytest.approx(1.0, abs=1e-6)
    plain = GridFunction(XS, size_biased_exponential(XS).values)
    assert candy_norm(plain) == pytest.approx(1.0, abs=1e-6)


def test_candy_divergence_at_origin():
    one = GridFunction(XS, np.ones_like(XS))
    with pytest.raises(DivergenceError):
        candy_norm(one)


def test_candy_sign_split_exact():
    # f = x - 1 on [0, 2] has a root inside a segment: compare with the analytic
    # integral of x^-2 |x - 1| over [a, 2]
    xs = np.array([0.0, 0.5, 1.5, 2.0])
    f = GridFunction(xs, np.array([0.0, -0.5, 0.5, 1.0]), tail_value=1.0,
                     tail_terms=((-1.0, 50.0),), signed=True)
    near = 0.5 / 0.5                           # near-zero piece: |f(x_1)| / x_1
    seg1 = (1 / 0.5 - 1) - math.log(1 / 0.5)   # int_0.5^1 (1 - x)/x^2
    seg2 = math.log(1.5) - (1 - 1 / 1.5)       # int_1^1.5 (x - 1)/x^2
    seg3 = math.log(2 / 1.5) - (1 / 1.5 - 1 / 2)
    tail = (1.0 - 1.0 / 51.0) / 2.0
    assert candy_norm(f) == pytest.approx(near + seg1 + seg2 + seg3 + tail, rel=1e-12)


def test_d_candy_examples():
    K = kakutani_profile(XK)
    E = size_biased_exponential(XK)
    zero = GridFunction(XK, np.zeros_like(XK), tail_value=0.0)
    assert d_candy(K, K) == 0.0
    assert d_candy(K, zero) == pytest.approx(1.0, abs=1e-6)
    assert d_candy(K, E) <= 2.0
    assert d_candy(K, E) == pytest.approx(d_candy(E, K), rel=1e-12)


def test_d_candy_merges_grids():
    E1 = size_biased_exponential(XS)
    E2 = size_biased_exponential(make_grid(40.0, 3000))
    assert d_candy(E1, E2) < 1e-6


def test_d_l1loc_examples():
    one = GridFunction(XS, np.ones_like(XS))
    zero = GridFunction(XS, np.zeros_like(XS), tail_value=0.0)
    assert d_l1loc(one, one) == 0.0
    assert d_l1loc(one, zero) == pytest.approx(1.0 - 2.0**-30, abs=1e-15)


def test_d_l1loc_domination():
    K = kakutani_profile(XK)
    E = size_biased_exponential(XK)
    d = d_l1loc(K, E)
    dc = d_candy(K, E)
    for k in (1, 2, 3, 5, 10, 30):
        assert d <= 2.0**-k + k * k * dc


def test_entropy_examples():
    assert entropy_of(step_at([1.0])) == pytest.approx(0.0, abs=1e-8)
    assert entropy_of(size_biased_exponential(XS)) == pytest.approx(1 - np.euler_gamma, abs=1e-8)
    # int_0^2 log x d(x^2/4) = log 2 - 1/2
    assert entropy_of(kakutani_profile(XK)) == pytest.approx(math.log(2) - 0.5, abs=1e-6)
    with pytest.raises(DivergenceError):
        entropy_of(GridFunction(XS, np.ones_like(XS)))


def test_drift_examples():
    assert drift_D(UniformChoice(), size_biased_exponential(XS)) == pytest.approx(1.0, abs=1e-6)
    assert drift_D(UniformChoice(), GridFunction(XS, np.ones_like(XS))) == 0.0


def test_ks_examples():
    xs = np.array([0.0, 0.5, 1.0, 1 + 1e-9, 2.0, 2 + 1e-9, 3.0])
    A = GridFunction(xs, [0, 0, 0, 1, 1, 1, 1.0])
    B = GridFunction(xs, [0, 0, 0, 0, 0, 1, 1.0])
    assert ks_distance(A, A) == 0.0
    assert ks_distance(A, B) == 1.0


def test_ks_refinement_monotone():
    E = size_biased_exponential(XS)
    coarse = GridFunction(make_grid(40.0, 50), E(make_grid(40.0, 50)) + 0.0)
    fine_xs = np.union1d(make_grid(40.0, 50), make_grid(40.0, 400))
    fine = GridFunction(fine_xs, np.maximum.accumulate(E(fine_xs)))
    K1 = kakutani_profile(make_grid(40.0, 50))
    K2 = kakutani_profile(fine_xs)
    assert ks_distance(fine, K2) >= ks_distance(coarse, K1) - 1e-15


def test_ks_to_sample():
    E = size_biased_exponential(XS)
    s = np.array([1.0, 1.0, 2.0])
    # jumps to 2/4 at 1 and to 1 at 2
    expect = max(abs(E(1.0) - 0.0), abs(E(1.0) - 0.5), abs(E(2.0) - 0.5), abs(E(2.0) - 1.0))
    assert ks_to_sample(E, s) == pytest.approx(expect, rel=1e-12)


def test_normalizations_of_exponential():
    E = size_biased_exponential(XS)
    assert underlying_mass(E) == pytest.approx(1.0, abs=1e-9)
    assert in_unit_ball(E)
    assert not in_unit_ball(GridFunction(XS, np.minimum(XS**2, 1.0)))


def test_drift_maxk_exponential():
    # 1/2 int z d(F^2) for F = 1 - (1+z)e^-z equals int z F f dz
    from scipy.integrate import quad
    f = lambda z: z * np.exp(-z)
    F = lambda z: 1 - (1 + z) * np.exp(-z)
    exact = quad(lambda z: z * F(z) * f(z), 0, 80)[0]
    assert drift_D(MaxK(2), size_biased_exponential(XS)) == pytest.approx(exact, rel=1e-8)


def monotone(draw_vals):
    v = np.cumsum(np.abs(draw_vals))
    v = v / (v[-1] * 1.25) if v[-1] > 0 else v
    return np.concatenate([[0.0], v])


SMALL = make_grid(20.0, 24)
profiles = st.lists(st.floats(0.0, 1.0), min_size=len(SMALL) - 1, max_size=len(SMALL) - 1).map(
    lambda v: GridFunction(SMALL, monotone(np.array(v)), tail_value=1.0))


@settings(max_examples=60, deadline=None)
@given(profiles, profiles, profiles)
def test_distance_axioms(F, G, H):
    for d in (d_candy, d_l1loc, ks_distance):
        assert d(F, F) == 0.0
        assert d(F, G) == pytest.approx(d(G, F), rel=1e-12, abs=1e-15)
        assert d(F, H) <= d(F, G) + d(G, H) + 1e-12


@settings(max_examples=60, deadline=None)
@given(profiles)
def test_candy_of_distribution_bounded_by_tail(F):
    # candy of F in [0, 1] with F <= x^2 q near 0 is finite and positive
    assert 0.0 <= candy_norm(F) < math.inf
