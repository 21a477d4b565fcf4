import math

import numpy as np
import pytest

from zrplab.errors import BadMode, NotCrossed, TooLarge
from zrplab.mixing import (
    StateIndex,
    TVCurve,
    empirical_tv,
    leftmost_tail_check,
    mixing_time_from_curve,
    poisson_max_experiment,
    sample_stationary,
    stationarity_residual,
    stationary_law,
    transient_law,
    tv_curve,
)
from zrplab.particles import LatticeGeometry, ProcessSpec, make_config, run_replicas
from zrplab.rates import RateFunction

CONST = RateFunction.constant()
SAT = RateFunction.piecewise([(0, 0), (1, 1), (2, 2)])


def seg(N, k, p, g=CONST):
    return ProcessSpec(LatticeGeometry.segment(N), k, p, g)


def brute_states(N, k):
    out = []

    def rec(pre, rem, left):
        if left == 1:
            out.append(pre + [rem])
            return
        for v in range(rem, -1, -1):
            rec(pre + [v], rem - v, left - 1)

    rec([], k, N)
    return np.array(out)


@pytest.mark.parametrize("N,k", [(1, 3), (2, 1), (3, 2), (4, 3), (5, 2), (3, 6), (6, 6)])
def test_state_index_order_and_ranks(N, k):
    ix = StateIndex(N, k)
    b = brute_states(N, k)
    assert ix.size == len(b) == math.comb(N + k - 1, k)
    assert np.array_equal(ix.states(), b)
    assert np.array_equal(ix.ranks(b), np.arange(len(b)))
    assert ix.unrank(0)[0] == k and ix.unrank(ix.size - 1)[-1] == k


def test_state_index_cap():
    with pytest.raises(TooLarge):
        StateIndex(10, 10)


def test_generator_matches_brute_force():
    N, k, p = 4, 3, 0.7
    g = RateFunction.piecewise([(0, 0), (1, 1), (3, 2)])
    ix = StateIndex(N, k)
    from zrplab.mixing import spec_generator

    _, Q = spec_generator(seg(N, k, p, g), ix)
    Q = Q.toarray()
    ref = np.zeros_like(Q)
    for a, s in enumerate(ix.states()):
        for i in range(N):
            for d, w in ((1, p), (-1, 1 - p)):
                j = i + d
                if s[i] and 0 <= j < N:
                    t = s.copy()
                    t[i] -= 1
                    t[j] += 1
                    ref[a, ix.rank(t)] += w * g(int(s[i]))
    ref -= np.diag(ref.sum(axis=1))
    assert np.max(np.abs(Q - ref)) <= 1e-15


def test_stationary_examples():
    assert np.allclose(stationary_law(2, 1, 0.75, CONST), [0.25, 0.75])
    pi = stationary_law(4, 3, 1.0, CONST)
    assert pi[-1] == 1.0 and pi.sum() == 1.0
    assert stationary_law(1, 3, 0.8, CONST).tolist() == [1.0]


@pytest.mark.parametrize("g", [CONST, SAT, RateFunction.linear()])
@pytest.mark.parametrize("p", [0.6, 0.9])
def test_stationarity_residual(g, p):
    for N, k in [(2, 3), (4, 4), (6, 3), (3, 9)]:
        assert stationarity_residual(N, k, p, g) <= 1e-12


def test_transient_examples():
    s = seg(2, 1, 1.0)
    law = transient_law(s, make_config("wedge", s), 1.0)
    assert np.allclose(law, [math.exp(-1), 1 - math.exp(-1)], atol=1e-12)
    s3 = seg(3, 2, 0.8)
    init = make_config("custom", s3, [1, 1, 0])
    law0 = transient_law(s3, init, 0.0)
    assert law0[StateIndex(3, 2).rank([1, 1, 0])] == 1.0


def test_transient_reaches_equilibrium():
    s = seg(4, 3, 0.7, SAT)
    law = transient_law(s, make_config("wedge", s), 200.0)
    assert 0.5 * np.abs(law - stationary_law(4, 3, 0.7, SAT)).sum() <= 1e-6


def test_exact_tv_two_state():
    s = seg(2, 1, 1.0)
    t = np.array([0.0, 0.3, 1.0, 2.5])
    c = tv_curve(s, t)
    assert np.allclose(c.values, np.exp(-t), atol=1e-10)
    assert c.info["state_space_size"] == 2 and c.info["wedge_identity_gap"] <= 1e-9


def test_exact_tv_at_zero_is_one_minus_min_pi():
    s = seg(3, 2, 0.8)
    c = tv_curve(s, [0.0])
    assert c.values[0] == pytest.approx(1 - stationary_law(3, 2, 0.8, CONST).min(), abs=1e-12)


def test_exact_tv_non_increasing():
    s = seg(4, 4, 0.8, SAT)
    c = tv_curve(s, np.linspace(0, 30, 31))
    assert np.all(np.diff(c.values) <= 1e-12)
    assert np.all((c.values >= 0) & (c.values <= 1))


def test_p1_identity_on_larger_instance():
    s = seg(5, 4, 1.0)
    c = tv_curve(s, [1.0, 4.0, 8.0])
    assert c.info["wedge_identity_gap"] <= 1e-9


def test_mc_bounds_bracket_exact():
    s = seg(5, 3, 0.8)
    t = np.array([1.0, 4.0, 8.0, 16.0])
    n = 100_000
    ex = tv_curve(s, t).values
    up = tv_curve(s, t, "mc_upper", replicas=n, seed=1)
    sd_up = 2 * np.sqrt(np.clip(up.values / 2 * (1 - up.values / 2), 1e-12, None) / n)
    assert np.all(up.values >= ex - 3 * sd_up)
    lo = tv_curve(s, t, "mc_lower", replicas=n, seed=2, eps=0.4)
    assert np.all(lo.values <= ex + 3 * np.sqrt(0.25 / n))


def test_mc_histogram_matches_exact_law():
    s = seg(4, 3, 0.6, SAT)
    ix = StateIndex(4, 3)
    b = run_replicas(s, make_config("wedge", s), 2.0, [0.5, 2.0], 100_000, seed=8)
    for j, t in enumerate((0.5, 2.0)):
        law = transient_law(s, make_config("wedge", s), t)
        assert empirical_tv(ix, b.snapshots[:, j], law) <= 0.01


def test_identity_mode_needs_total_asymmetry():
    with pytest.raises(BadMode):
        tv_curve(seg(3, 2, 0.8), [1.0], "mc_identity", replicas=10)
    with pytest.raises(BadMode):
        tv_curve(seg(3, 2, 0.8), [1.0], "fancy", replicas=10)


def test_identity_mode_two_state():
    s = seg(2, 1, 1.0)
    c = tv_curve(s, [0.5, 1.0], "mc_identity", replicas=100_000, seed=3)
    assert np.allclose(c.values, np.exp([-0.5, -1.0]), atol=0.006)


def test_mixing_time_examples():
    t = np.linspace(0, 5, 5001)
    c = TVCurve(t, np.exp(-t), "exact")
    assert mixing_time_from_curve(c, 0.25) == pytest.approx(math.log(4), abs=1e-6)
    assert mixing_time_from_curve(c, 1.0) == 0.0
    with pytest.raises(NotCrossed):
        mixing_time_from_curve(TVCurve(t[:10], np.exp(-t[:10]), "exact"), 0.25)


def test_leftmost_tail_examples():
    exact, bound = leftmost_tail_check(2, 1, 0.75, CONST, 1)
    assert exact == pytest.approx(0.25) and bound == pytest.approx(0.5)
    exact, bound = leftmost_tail_check(6, 4, 0.9, CONST, 0)
    assert bound >= 1 >= exact
    exact, bound = leftmost_tail_check(6, 4, 0.9, CONST, 3)
    assert exact <= bound


def test_metropolis_targets_equilibrium():
    N, k, p = 4, 3, 0.7
    occ = sample_stationary(N, k, p, SAT, 20_000, seed=2, thin=20)
    ix = StateIndex(N, k)
    assert empirical_tv(ix, occ, stationary_law(N, k, p, SAT)) <= 0.03


def test_poisson_max_examples():
    r = poisson_max_experiment(1.0, 1.0, 50, 10_000, seed=0)
    assert r.frequency <= 1e-2 and r.exact <= r.bound
    assert poisson_max_experiment(1.0, 1.0, 50, 0, seed=0).frequency is None
    ex = [poisson_max_experiment(1.0, 1.0, N, 0, 0).exact for N in (20, 40, 80)]
    assert ex[0] > ex[1] > ex[2]


def test_tail_profile_matches_single_delta_checks():
    from zrplab.mixing import leftmost_tail_profile

    g = RateFunction.piecewise([(0, 0), (1, 1), (2, 2)])
    delta, log_tail, log_bound = leftmost_tail_profile(5, 4, 0.7, g)
    assert delta.tolist() == [0, 1, 2, 3, 4]
    assert log_tail[0] == pytest.approx(0.0, abs=1e-12)
    for d in delta:
        tail, bound = leftmost_tail_check(5, 4, 0.7, g, int(d))
        assert np.exp(log_tail[d]) == pytest.approx(tail, rel=1e-12)
        assert np.exp(log_bound[d]) == pytest.approx(bound, rel=1e-12)
