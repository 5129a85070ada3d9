import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from intervalchoice.intervals import make_rng
from intervalchoice.psi import (
    DensityRule,
    Kakutani,
    MaxK,
    MinK,
    RuleError,
    Tabulated,
    UniformChoice,
    open_uniform,
    parse_rule,
)

RULES = [MaxK(1), MaxK(2), MaxK(5), MinK(2), MinK(3), UniformChoice(), Kakutani(),
         Tabulated(knots=((0.3, 0.1), (0.7, 0.2), (1.0, 1.0))),
         DensityRule(us=(0.0, 0.5, 1.0), values=(0.0, 2.0, 1.0))]


def test_cdf_examples():
    assert MaxK(2).cdf(0.5) == pytest.approx(0.25)
    assert MinK(2).cdf(0.5) == pytest.approx(0.75)
    assert Kakutani().cdf(0.999) == 0.0
    assert Kakutani().cdf(1.0) == 1.0


def test_cdf_domain_error():
    for bad in (-0.1, 1.1, np.nan):
        with pytest.raises(RuleError):
            MaxK(2).cdf(bad)


def test_inverse_examples():
    assert MaxK(2).inverse_cdf(0.49) == pytest.approx(0.7, abs=1e-15)
    assert UniformChoice().inverse_cdf(0.3) == pytest.approx(0.3)
    w = np.array([1e-9, 0.2, 0.5, 0.999999])
    assert np.all(Kakutani().inverse_cdf(w) == 1.0)
    assert np.all(Kakutani().sample(make_rng(0), 100) == 1.0)


def test_density_examples():
    assert MaxK(2).density(0.5) == pytest.approx(1.0)
    assert MinK(3).density(0.0) == pytest.approx(3.0)
    assert Kakutani().density(0.5) is None
    assert RULES[7].density(0.5) is None
    with pytest.raises(RuleError):
        MaxK(2).density(2.0)


@pytest.mark.parametrize("rule", [r for r in RULES if r.has_density], ids=str)
def test_density_integrates_to_one(rule):
    total = quad(lambda u: float(rule.density(u)), 0.0, 1.0, points=[0.5], limit=200)[0]
    assert total == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("rule", RULES, ids=str)
def test_cdf_monotone_and_normalized(rule):
    u = np.linspace(0.0, 1.0, 2001)
    c = rule.cdf(u)
    assert np.all(np.diff(c) >= 0)
    assert np.all((c >= 0) & (c <= 1))
    assert rule.cdf(1.0) == 1.0


@pytest.mark.parametrize("rule", RULES, ids=str)
def test_generalized_inverse(rule):
    # inf{u : Psi(u) >= w}: Psi(inv(w)) >= w, and Psi is below w just to the left
    w = np.linspace(0.001, 0.999, 999)
    u = rule.inverse_cdf(w)
    assert np.all(rule.cdf(u) >= w - 1e-12)
    left = np.clip(u - 1e-7, 0.0, 1.0)
    assert np.all((rule.cdf(left) <= w + 1e-12) | (u == 0))


def test_maxk_quantile_coupling():
    w = np.linspace(0.0, 1.0, 1001)
    for k in (1, 2, 3, 7):
        assert np.max(np.abs(MaxK(k).inverse_cdf(w) - w ** (1.0 / k))) <= 1e-12


@pytest.mark.parametrize("k", [2, 3])
def test_maxk_sampling_dkw(k):
    # DKW at 1e-6 confidence for 1e5 samples: eps = sqrt(log(2/1e-6)/(2n)) ~ 0.0085
    rng = make_rng(12345)
    s = np.sort(MaxK(k).sample(rng, 100_000))
    n = len(s)
    cdf = s**k
    ks = max(np.max(np.arange(1, n + 1) / n - cdf), np.max(cdf - np.arange(n) / n))
    assert ks <= 0.01


def test_maxk_matches_max_of_uniforms():
    rng = make_rng(7)
    a = np.sort(MaxK(2).sample(rng, 50_000))
    b = np.sort(np.max(make_rng(8).random((50_000, 2)), axis=1))
    # two-sample KS, alpha 1e-6: c = sqrt(-log(1e-6/2)/2) * sqrt(2/n)
    grid = np.linspace(0, 1, 2001)
    d = np.max(np.abs(np.searchsorted(a, grid) - np.searchsorted(b, grid))) / 50_000
    assert d <= np.sqrt(-np.log(0.5e-6) / 2) * np.sqrt(2 / 50_000)


def test_open_uniform_strictly_inside():
    w = open_uniform(make_rng(3), 100_000)
    assert w.min() > 0 and w.max() < 1


@pytest.mark.parametrize("rule, expected", [
    (MaxK(3), (True, 1.0, 1.0)),
    (MaxK(1), (True, 1.0, 1.0)),
    (MinK(2), (True, 2.0, 1.0)),
    (UniformChoice(), (True, 1.0, 1.0)),
])
def test_check_assumptions_builtins(rule, expected):
    rep = rule.check_assumptions()
    assert (rep.continuous, rep.kappa, rep.c) == expected
    assert rep.ok


def test_check_assumptions_kakutani():
    rep = Kakutani().check_assumptions()
    assert not rep.continuous and rep.kappa is None and rep.c is None


def test_check_assumptions_fitted():
    # 1 - Psi = (1-u)^2 near 1 for this density rule: psi(u) = 2(1-u)
    rule = DensityRule(us=(0.0, 1.0), values=(2.0, 0.0))
    rep = rule.check_assumptions()
    assert rep.continuous and rep.kappa == pytest.approx(2.0, abs=1e-6)
    assert rep.c == pytest.approx(1.0, rel=1e-6)
    flat = Tabulated(knots=((0.5, 1.0), (1.0, 1.0)))
    assert not flat.check_assumptions().ok


def test_tabulated_validation():
    with pytest.raises(RuleError):
        Tabulated(knots=((0.5, 0.2), (0.4, 0.3), (1.0, 1.0)))
    with pytest.raises(RuleError):
        Tabulated(knots=((0.5, 0.6), (0.7, 0.3), (1.0, 1.0)))
    with pytest.raises(RuleError):
        Tabulated(knots=((0.5, 0.2), (1.0, 0.9)))


def test_parse_rule(tmp_path):
    assert parse_rule("max:2") == MaxK(2)
    assert parse_rule("min:5") == MinK(5)
    assert isinstance(parse_rule("uniform"), UniformChoice)
    assert isinstance(parse_rule("kakutani"), Kakutani)
    p = tmp_path / "t.csv"
    p.write_text("0.0,0.0\n0.5,0.25\n1.0,1.0\n")
    r = parse_rule(f"table:{p}")
    assert r.cdf(0.75) == pytest.approx(0.625)
    for bad in ("max:x", "foo", "uniform:3", "max:0"):
        with pytest.raises(RuleError):
            parse_rule(bad)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.0, 5.0), min_size=2, max_size=12), st.floats(0.0, 1.0))
def test_density_rule_inverse_roundtrip(vals, w):
    vals = [v + 0.01 for v in vals]
    us = tuple(np.linspace(0.0, 1.0, len(vals)))
    rule = DensityRule(us=us, values=tuple(vals))
    u = rule.inverse_cdf(w)
    assert rule.cdf(u) == pytest.approx(w, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 12), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_builtin_cdf_monotone(k, a, b):
    lo, hi = min(a, b), max(a, b)
    for rule in (MaxK(k), MinK(k)):
        assert rule.cdf(lo) <= rule.cdf(hi)
