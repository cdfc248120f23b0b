import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from cvtanneal.energy import Quadrature, electrostatic_total
from cvtanneal.errors import IndexOutOfSchedule, InvalidSchedule
from cvtanneal.geometry import Configuration, random_configuration, regular_polygon
from cvtanneal.optimize import (
    AnnealParams,
    Schedule,
    _Chain,
    anneal,
    lloyd_run,
    lloyd_step,
    make_rng,
    metropolis_accept,
    metropolis_sweep,
    polar_normal_pair,
    polish,
    temperature,
)


# -- Lloyd -----------------------------------------------------------------


@pytest.mark.parametrize(
    "start, expected",
    [
        ([[0.2, 0.9]], [[0.5, 0.5]]),
        ([[0.25, 0.5], [0.75, 0.5]], [[0.25, 0.5], [0.75, 0.5]]),
        ([[0.1, 0.5], [0.9, 0.5]], [[0.25, 0.5], [0.75, 0.5]]),
    ],
)
def test_lloyd_step_examples(square, start, expected):
    out = lloyd_step(square, Configuration(start))
    assert np.allclose(out.points, expected, atol=1e-14)


def test_lloyd_two_generators_symmetric(square, rng):
    for _ in range(3):
        res = lloyd_run(square, random_configuration(square, 2, rng), tol=1e-10, max_iter=5000)
        assert res.converged
        assert res.residuals[-1] < 1e-10
        p, q = res.config.points
        # the pair is mirrored through the centre of the square
        assert np.abs(p + q - 1.0).max() < 1e-6


def test_lloyd_single_generator_one_step(square):
    res = lloyd_run(square, Configuration([[0.1, 0.2]]))
    assert res.converged and res.iterations == 1
    assert np.allclose(res.config.points, [[0.5, 0.5]])


def test_lloyd_zero_iterations(square):
    cfg = Configuration([[0.1, 0.2], [0.3, 0.3]])
    res = lloyd_run(square, cfg, max_iter=0)
    assert not res.converged
    assert res.config is cfg


def test_lloyd_rejects_bad_tol(square):
    with pytest.raises(ValueError):
        lloyd_run(square, Configuration([[0.5, 0.5]]), tol=0)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 12))
def test_lloyd_energy_monotone(seed, n):
    d = regular_polygon(6)
    res = lloyd_run(d, random_configuration(d, n, np.random.default_rng(seed)), max_iter=40)
    e = np.array(res.energies)
    assert (np.diff(e) <= 1e-12).all()


# -- schedules -------------------------------------------------------------


def test_temperature_examples():
    g = Schedule("geometric", t0=1.0, steps=10, alpha=0.9)
    assert temperature(g, 2) == pytest.approx(0.81)
    assert temperature(Schedule("geometric", t0=3.7, steps=5, alpha=0.5), 0) == 3.7
    lg = Schedule("logarithmic", t0=1.0, steps=10, c=1.0)
    assert temperature(lg, 0) == pytest.approx(1 / math.log(2))
    assert temperature(lg, 0) == pytest.approx(1.4427, abs=1e-4)


def test_logarithmic_default_c_starts_at_t0():
    s = Schedule("logarithmic", t0=2.5, steps=10)
    assert temperature(s, 0) == pytest.approx(2.5)


def test_temperature_out_of_range():
    s = Schedule("geometric", t0=1.0, steps=3, alpha=0.5)
    for t in (-1, 3):
        with pytest.raises(IndexOutOfSchedule):
            temperature(s, t)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(kind="geometric", t0=1.0, steps=0, alpha=0.5),
        dict(kind="geometric", t0=1.0, steps=10, alpha=1.0),
        dict(kind="geometric", t0=0.0, steps=10, alpha=0.5),
        dict(kind="logarithmic", t0=1.0, steps=10, c=-1.0),
        dict(kind="linear", t0=1.0, steps=10),
        dict(kind="geometric", t0=1.0, steps=2.5, alpha=0.5),
    ],
)
def test_invalid_schedules(kwargs):
    with pytest.raises(InvalidSchedule):
        Schedule(**kwargs)


def test_underflowing_schedule_rejected():
    with pytest.raises(InvalidSchedule):
        Schedule("geometric", t0=1.0, steps=400, alpha=0.0625)


def test_geometric_with_ratio():
    s = Schedule.geometric_with_ratio(2.0, 101, 1e-4)
    assert temperature(s, 100) == pytest.approx(2e-4, rel=1e-10)


def test_schedule_dict_round_trip():
    for s in (Schedule("geometric", 1.0, 7, alpha=0.3), Schedule("logarithmic", 1.0, 7)):
        assert Schedule.from_dict(s.as_dict()) == s


@settings(max_examples=50)
@given(t0=st.floats(1e-6, 1e3), alpha=st.floats(0.01, 0.999), steps=st.integers(1, 500))
def test_geometric_temperatures_positive_and_decreasing(t0, alpha, steps):
    assume(math.log(t0) + (steps - 1) * math.log(alpha) > -700)
    s = Schedule("geometric", t0=t0, steps=steps, alpha=alpha)
    temps = [temperature(s, t) for t in range(steps)]
    assert all(T > 0 for T in temps)
    assert all(a > b for a, b in zip(temps, temps[1:]))


# -- random numbers and acceptance ----------------------------------------


def test_rng_streams_are_reproducible_and_distinct():
    a = make_rng(7, 0).random(5)
    assert np.array_equal(a, make_rng(7, 0).random(5))
    assert not np.array_equal(a, make_rng(7, 1).random(5))


def test_polar_normals_moments():
    rng = make_rng(3)
    z = np.array([polar_normal_pair(rng) for _ in range(20000)]).ravel()
    assert abs(z.mean()) < 0.03
    assert abs(z.var() - 1) < 0.04


def test_accept_downhill_and_flat():
    rng = make_rng(0)
    assert all(metropolis_accept(0.0, 1.0, rng) for _ in range(1000))
    assert all(metropolis_accept(-5.0, 1e-9, rng) for _ in range(100))
    assert not metropolis_accept(math.inf, 1.0, rng)


def test_accept_rate_at_unit_ratio():
    rng = make_rng(11)
    n = 100_000
    rate = sum(metropolis_accept(2.0, 2.0, rng) for _ in range(n)) / n
    assert abs(rate - math.exp(-1)) < 0.01


# -- chain -----------------------------------------------------------------


def test_exterior_proposal_rejected(square):
    chain = _Chain(square, [[0.5, 0.5], [0.2, 0.2]], Quadrature())
    rng = make_rng(0)
    for q in ([1.2, 0.5], [0.5, -1e-12], [1.0, 0.5]):
        assert chain.propose(0, np.array(q), 1e6, rng) is None
    assert np.allclose(chain.x[0], [0.5, 0.5])


def test_incremental_energy_matches_full(square, rng):
    cfg = random_configuration(square, 6, rng)
    chain = _Chain(square, cfg.points, Quadrature())
    r = make_rng(5)
    start = chain.energy
    for _ in range(50):
        chain.sweep(5.0, 0.05, r)
    full = electrostatic_total(chain.x, square)
    assert chain.energy == pytest.approx(full, rel=1e-9)
    assert chain.energy != start


def test_metropolis_sweep_counts(square, rng):
    cfg = random_configuration(square, 4, rng)
    new, accepted = metropolis_sweep(square, cfg, 1.0, AnnealParams(), make_rng(1))
    assert 0 <= accepted <= 4
    assert square.contains(new.points).all()
    with pytest.raises(ValueError):
        metropolis_sweep(square, cfg, 0.0, AnnealParams(), make_rng(1))


def test_proposal_std_must_be_below_diameter(square):
    with pytest.raises(ValueError):
        AnnealParams(proposal_std=2.0).resolved_std(square)
    assert AnnealParams().resolved_std(square) == pytest.approx(0.05 * math.sqrt(2))


# -- anneal and polish -----------------------------------------------------


def test_anneal_is_deterministic(square, rng):
    cfg = random_configuration(square, 4, rng)
    s = Schedule("geometric", 1.0, 120, alpha=0.97)
    a = anneal(square, cfg, s, AnnealParams(seed=9))
    b = anneal(square, cfg, s, AnnealParams(seed=9))
    c = anneal(square, cfg, s, AnnealParams(seed=10))
    assert np.array_equal(a.final_config.points, b.final_config.points)
    assert a.trajectory == b.trajectory
    assert not np.array_equal(a.final_config.points, c.final_config.points)


def test_anneal_record_fields(square, rng):
    cfg = random_configuration(square, 3, rng)
    s = Schedule("geometric", 1.0, 100, alpha=0.95)
    r = anneal(square, cfg, s, AnnealParams(seed=1, record_every=10))
    assert [t for t, _ in r.trajectory] == list(range(0, 100, 10)) + [99]
    assert all(math.isfinite(u) for _, u in r.trajectory)
    assert 0 <= r.accept_rate <= 1
    assert r.energy_drift < 1e-9 * abs(r.final_energy.total_electrostatic)
    assert r.trajectory[-1][1] == pytest.approx(r.final_energy.total_electrostatic, rel=1e-9)


def test_cold_anneal_never_goes_uphill(square, rng):
    cfg = random_configuration(square, 5, rng)
    r = anneal(square, cfg, Schedule("geometric", 1e-12, 200, alpha=0.99), AnnealParams(seed=2))
    assert r.uphill_proposed > 0
    assert r.uphill_accepted == 0
    u = [e for _, e in r.trajectory]
    assert all(b <= a for a, b in zip(u, u[1:]))


def test_adaptation_halves_step_when_frozen(square, rng):
    cfg = random_configuration(square, 5, rng)
    r = anneal(square, cfg, Schedule("geometric", 1e-12, 300, alpha=0.99), AnnealParams(seed=3))
    assert r.std_halvings
    assert r.proposal_std_final == pytest.approx(r.proposal_std * 0.5 ** len(r.std_halvings))
    fixed = anneal(square, cfg, Schedule("geometric", 1e-12, 300, alpha=0.99), AnnealParams(seed=3, adapt=False))
    assert fixed.std_halvings == [] and fixed.proposal_std_final == fixed.proposal_std


def test_polish_only_descends(square, rng):
    cfg = random_configuration(square, 5, rng)
    before = electrostatic_total(cfg.points, square)
    out = polish(square, cfg, make_rng(4))
    after = electrostatic_total(out.points, square)
    assert after < before
    assert square.contains(out.points).all()
    # polishing a polished configuration changes U by at most roundoff
    again = electrostatic_total(polish(square, out, make_rng(5)).points, square)
    assert again == pytest.approx(after, rel=1e-8)


def test_single_generator_polishes_to_centre(square):
    out = polish(square, Configuration([[0.8, 0.3]]), make_rng(0))
    assert np.allclose(out.points, [[0.5, 0.5]], atol=1e-3)


@pytest.mark.slow
def test_slow_anneal_reaches_lloyd_baseline(square):
    # baseline: U at the fixed points of 20 random-restart Lloyd runs
    baseline = min(
        electrostatic_total(lloyd_run(square, random_configuration(square, 5, make_rng(k, 1))).config.points, square)
        for k in range(20)
    )
    start = random_configuration(square, 5, make_rng(99))
    r = anneal(square, start, Schedule("geometric", 1.0, 20000, alpha=0.999), AnnealParams(seed=1))
    assert r.final_energy.total_electrostatic <= baseline * (1 + 1e-3)
