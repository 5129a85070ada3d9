import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from intervalchoice.intervals import (
    ConfigError,
    IntervalTable,
    PositionsDisabled,
    empirical_cdf_values,
    entropy_w,
    log_schedule,
    make_rng,
    run,
    split_draws,
)
from intervalchoice.psi import Kakutani, MaxK, MinK, UniformChoice

EPS = np.finfo(float).eps


def table(*lengths, **kw):
    return IntervalTable.from_config(list(lengths), **kw)


def test_from_config_examples():
    t = table(1.0)
    assert t.count == 1 and t.total_length == 1.0 and t.step_index == 0
    assert table(0.5, 0.3, 0.2).count == 3
    for bad in ([0.5, -0.1, 0.6], [], [0.5, 0.4], [0.5, 0.0, 0.5]):
        with pytest.raises(ConfigError):
            IntervalTable.from_config(bad)


def test_size_biased_cdf_examples():
    t = table(0.5, 0.3, 0.2)
    assert t.size_biased_cdf(0.25) == pytest.approx(0.2)
    assert t.size_biased_cdf(0.3) == pytest.approx(0.5)
    assert t.size_biased_cdf(0.5) == 1.0
    assert t.size_biased_cdf(7.0) == 1.0
    assert t.size_biased_cdf(0.0) == 0.0


def test_size_biased_quantile_examples():
    t = table(0.5, 0.3, 0.2)
    assert t.size_biased_quantile(0.4)[0] == 0.3
    assert t.size_biased_quantile(0.2)[0] == 0.2
    assert t.size_biased_quantile(0.9)[0] == 0.5
    with pytest.raises(ValueError):
        t.size_biased_quantile(1.5)


def test_quantile_tie_break_smallest_id():
    t = table(0.25, 0.25, 0.25, 0.25)
    for u in (0.01, 0.3, 0.6, 0.99):
        ell, h = t.size_biased_quantile(u)
        assert ell == 0.25 and h.insertion_id == 0


def test_split_example_entropy():
    t = table(0.2, 0.3, 0.5)
    ev = t.apply_split(0.9, 0.4)
    assert ev.chosen_length == 0.5
    assert sorted(t.lengths()) == pytest.approx([0.2, 0.2, 0.3, 0.3])
    assert ev.entropy_increment == pytest.approx(-0.3365058335046282, abs=1e-12)
    assert ev.entropy_increment == pytest.approx(0.5 * entropy_w(0.4))
    assert ev.new_lengths[0] + ev.new_lengths[1] == 0.5
    assert t.largest() == pytest.approx(0.3)


def test_largest_examples():
    assert table(0.5, 0.3, 0.2).largest() == 0.5
    assert table(1.0).largest() == 1.0


def test_entropy_examples():
    raw, resc = table(0.5, 0.5).entropy()
    assert raw == pytest.approx(-math.log(2)) and resc == pytest.approx(0.0, abs=1e-15)
    assert table(1.0).entropy() == (0.0, 0.0)
    t = table(1.0)
    ev = t.apply_split(0.5, 0.3)
    assert t.entropy()[1] == pytest.approx(entropy_w(0.3) + math.log(2), abs=1e-15)
    assert t.entropy()[0] == pytest.approx(ev.entropy_increment, abs=1e-15)


def test_empirical_rescaled_cdf_examples():
    xs = np.array([0.0, 0.5, 0.9, 1.0, 2.0])
    assert table(0.5, 0.5).empirical_rescaled_cdf(xs).values[3] == 1.0
    F = table(0.5, 0.3, 0.2).empirical_rescaled_cdf(xs)
    assert F.values[2] == pytest.approx(0.5)
    assert F.values[0] == 0.0


def test_density_histogram_examples():
    h = table(0.5, 0.5).density_histogram(bins=4, xmax=4.0)
    # both rescaled lengths equal 1: all mass in [1, 2), which is one unit wide
    assert list(h.density) == [0.0, 1.0, 0.0, 0.0]
    assert h.overflow_mass == 0.0
    h = table(0.9, 0.1).density_histogram(bins=8, xmax=4.0)
    # rescaled lengths 1.8 and 0.2, bin width 0.5
    assert list(h.density) == [1.0, 0, 0, 1.0, 0, 0, 0, 0] and h.overflow == 0.0
    with pytest.raises(ValueError):
        table(1.0).density_histogram(bins=0)


def test_position_histogram():
    t = table(1.0, track_positions=True)
    t.apply_split(0.5, 0.25)
    assert list(t.split_points()) == [0.25]
    h = t.position_histogram(4)
    assert list(h.density) == [0.0, 4.0, 0.0, 0.0]
    with pytest.raises(PositionsDisabled):
        table(1.0).position_histogram()


def test_positions_tile_circle():
    t = IntervalTable.random_config(5, make_rng(2), track_positions=True)
    run(t, MaxK(2), 20_000, seed=4)
    a = t.audit()
    assert a["tiling_gap"] <= 1e-15 and a["tiling_end"] <= 1e-12


def test_kakutani_splits_largest():
    t = table(0.1, 0.4, 0.2, 0.3)
    rng = make_rng(0)
    for _ in range(50):
        before = t.largest()
        ev = t.split_step(Kakutani(), rng)
        assert ev.chosen_length == before


def test_split_step_event_fields():
    t = table(1.0)
    ev = t.split_step(UniformChoice(), make_rng(5))
    assert ev.step == 1 and t.count == 2
    assert ev.entropy_increment <= 0
    assert 0.0 < ev.fraction < 1.0
    assert sum(ev.new_lengths) == ev.chosen_length


def test_split_step_matches_stream():
    # split_step consumes the same (u, v) pairs as the batch driver
    a, b = table(1.0), table(1.0)
    rng = make_rng(9)
    for _ in range(100):
        a.split_step(MaxK(2), rng)
    run(b, MaxK(2), 100, seed=9)
    assert np.array_equal(a.lengths(), b.lengths())


def test_chunking_does_not_change_stream():
    a, b = table(1.0), table(1.0)
    rng = make_rng(3)
    us, vs = split_draws(rng, MinK(2), 5000)
    a._advance(us, vs)
    rng = make_rng(3)
    for n in (1000, 3000, 1000):
        us, vs = split_draws(rng, MinK(2), n)
        b._advance(us, vs)
    assert np.array_equal(a.lengths(), b.lengths())


def test_run_zero_steps():
    t = table(0.5, 0.5)
    rep = run(t, MaxK(2), 0, seed=1)
    assert rep.count == 2 and rep.steps == 0
    assert rep.entropy_trace == [[0, -math.log(2), pytest.approx(0.0, abs=1e-15)]]


def test_run_count_and_determinism():
    r1 = run(table(1.0), UniformChoice(), 50_000, seed=11).to_dict()
    r2 = run(table(1.0), UniformChoice(), 50_000, seed=11).to_dict()
    assert r1 == r2
    assert r1["count"] == 50_001
    assert r1["schedule"] == log_schedule(50_000)


def test_invariants_and_audit():
    t = IntervalTable.random_config(3, make_rng(1))
    rep = run(t, MaxK(2), 100_000, seed=2)
    res = rep.invariant_residuals
    assert res["mass_identity_rel"] <= 1e-9
    assert res["entropy_identity_rel"] <= 1e-12
    assert res["length_drift_eps_per_count"] <= 64
    assert res["largest_increases"] == 0
    a = t.audit()
    assert a["aggregate_mismatches"] == 0 and a["order_errors"] == 0 and a["count_ok"]
    assert a["length_drift"] <= 64 * t.count * EPS


def test_mass_identity_small():
    t = table(0.5, 0.3, 0.2)
    assert t.mass_identity() == pytest.approx(3.0, rel=1e-15)


def test_empirical_cdf_values_size_biased():
    v = empirical_cdf_values(np.array([1.0, 2.0, 3.0]), np.array([0.5, 1.0, 2.5, 3.0]))
    assert v == pytest.approx([0.0, 1 / 6, 0.5, 1.0])


def test_choice_law_frozen_state():
    # one-step choice frequencies on {0.2, 0.3, 0.5} under max-2
    t = table(0.2, 0.3, 0.5)
    us = MaxK(2).sample(make_rng(21), 200_000)
    lengths = np.array([t.size_biased_quantile(u)[0] for u in us])
    freq = np.array([np.mean(lengths == x) for x in (0.2, 0.3, 0.5)])
    p = np.array([0.04, 0.21, 0.75])
    sigma = np.sqrt(p * (1 - p) / len(us))
    assert np.all(np.abs(freq - p) <= 4 * sigma)


def test_clock_advances():
    t = table(1.0, clock=True, clock_seed=3)
    run(t, UniformChoice(), 100_000, seed=3)
    # e^t grows by a sum of unit exponentials: e^t - 1 ~ 1e5
    assert math.exp(t.clock) == pytest.approx(1e5, rel=0.02)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=30),
       st.lists(st.tuples(st.floats(0.0, 1.0), st.floats(1e-6, 1 - 1e-6)), max_size=40))
def test_structure_matches_brute_force(raw, splits):
    arr = np.array(raw) / math.fsum(raw)
    t = IntervalTable.from_config(arr / math.fsum(arr))
    ref = sorted(t.lengths().tolist())
    for u, v in splits:
        # brute-force quantile: smallest length whose cumulative mass reaches u
        srt = np.array(ref)
        cum = np.cumsum(srt) / math.fsum(srt)
        j = int(np.searchsorted(cum, u * cum[-1] * (1 - 1e-12), side="left"))
        j = min(j, len(srt) - 1)
        ev = t.apply_split(u, v)
        assert ev.chosen_length == pytest.approx(srt[j], rel=1e-9)
        ref.remove(ev.chosen_length)
        a = v * ev.chosen_length
        ref.extend([a, ev.chosen_length - a])
        ref.sort()
    assert np.array_equal(np.sort(t.lengths()), np.array(ref))
    assert t.audit()["aggregate_mismatches"] == 0
    xs = np.linspace(0, 1.1 * max(ref), 17)
    brute = np.array([sum(x for x in ref if x <= q) for q in xs]) / math.fsum(ref)
    assert np.array([t.size_biased_cdf(q) for q in xs]) == pytest.approx(brute, abs=1e-12)


def test_uniform_histogram_is_exponential():
    # 64 bins: at 1024 bins the binomial noise alone is ~0.016 per bin
    from _shared import cli_simulation
    out, _, _ = cli_simulation("uniform")
    h = _hist(np.load(out / "lengths.npy"), 64, 4.0)
    e = h.edges
    exact = (np.exp(-e[:-1]) - np.exp(-e[1:])) / np.diff(e)
    assert np.max(np.abs(h.density - exact)) <= 0.02
    assert h.overflow_mass == pytest.approx(np.exp(-4.0), abs=0.002)


def _hist(values, bins, xmax):
    from intervalchoice.intervals import _histogram
    return _histogram(values, bins, xmax)


def test_uniform_positions_flat():
    t = IntervalTable.from_config([1.0], track_positions=True)
    run(t, UniformChoice(), 10**6, seed=5)
    d = t.position_histogram(128).density
    assert d.min() >= 0.9 and d.max() <= 1.1
