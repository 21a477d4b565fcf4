import math
import warnings

import numpy as np
import pytest

from zrplab.errors import BoundaryMaxWarning, DivergenceError, LinearFlux, NotConcave
from zrplab.flux import (
    build_flux_model,
    check_condition_5,
    conjugate_at,
    eval_partition,
    grand_canonical,
    mean_density,
)
from zrplab.rates import RateFunction

CONST = RateFunction.constant()
LIN = RateFunction.linear()
SATURATING = RateFunction.piecewise([(0, 0), (1, 1), (2, 2)], 0.0)  # min(n, 2)
CONVEX = RateFunction.table([0, 1, 3], 2.0)


@pytest.fixture(scope="module")
def const_model():
    return build_flux_model(CONST)


def test_partition_examples():
    assert eval_partition(CONST, 0.5)[0] == pytest.approx(2.0, rel=1e-12)
    assert eval_partition(CONST, 0.0)[0] == 1.0
    assert eval_partition(LIN, 1.0)[0] == pytest.approx(math.e, rel=1e-12)


def test_mean_density_examples():
    assert mean_density(CONST, 0.5) == pytest.approx(1.0, rel=1e-10)
    assert mean_density(LIN, 0.0) == 0.0
    assert mean_density(LIN, 2.0) == pytest.approx(2.0, rel=1e-10)


def test_divergence_at_radius():
    with pytest.raises(DivergenceError):
        eval_partition(CONST, 1.0)


def test_grand_canonical_pmf_is_geometric():
    gc = grand_canonical(CONST, 0.5)
    n = np.arange(10)
    assert np.allclose(gc.pmf[:10], 0.5 * 0.5**n, atol=1e-14)
    assert gc.truncation_mass <= 1e-12
    assert abs(gc.pmf.sum() - (1 - gc.truncation_mass)) <= 1e-12


def test_constant_flux_closed_form(const_model):
    a = np.linspace(0, 4, 401)
    assert np.max(np.abs(const_model.flux_at(a) - a / (1 + a))) <= 1e-6
    assert const_model.flux_at(1.0) == pytest.approx(0.5, abs=1e-9)
    assert const_model.convexity == "strictly_concave"
    assert const_model.flux_at(0.0) == 0.0


def test_constant_psi_closed_form(const_model):
    x = np.linspace(-1, -0.01, 500)
    assert np.max(np.abs(const_model.psi(x) - (1 - np.sqrt(-x)) ** 2)) <= 1e-5


def test_linear_flux_is_flagged():
    m = build_flux_model(LIN, alpha_max=4)
    assert m.convexity == "linear"
    a = np.linspace(0, 4, 50)
    assert np.max(np.abs(m.flux_at(a) - a)) <= 1e-8
    with pytest.raises(LinearFlux):
        conjugate_at(m, 0.5)


def test_conjugate_examples(const_model):
    psi, a = conjugate_at(const_model, -0.25)
    assert psi == pytest.approx(0.25, abs=1e-9) and a == pytest.approx(1.0, abs=1e-6)
    assert conjugate_at(const_model, -1.0) == (0.0, 0.0)
    with pytest.warns(BoundaryMaxWarning):
        psi0, _ = conjugate_at(const_model, 0.0)
    assert psi0 == pytest.approx(1.0, abs=1e-12)


def test_condition_5_constant_rate(const_model):
    c = check_condition_5(const_model, CONST, 1.0, 1.0)
    assert c.holds and c.lhs == 1.0 and c.rhs == pytest.approx(0.5, abs=1e-3)


def test_condition_5_small_density_still_holds(const_model):
    # the right side tends to g(1) = 1 from below, so the strict inequality survives
    for alpha in (1e-2, 1e-4):
        c = check_condition_5(const_model, CONST, 1.0, alpha)
        assert c.holds
        assert c.rhs == pytest.approx(1 / (1 + math.sqrt(alpha)), abs=1e-6)


def test_condition_5_fails_for_saturating_rate_away_from_total_asymmetry():
    m = build_flux_model(SATURATING)
    assert m.convexity == "strictly_concave"
    c = check_condition_5(m, SATURATING, 0.9, 1.0)
    assert not c.holds and c.lhs == pytest.approx(0.875)
    assert c.rhs == pytest.approx(check_condition_5(m, SATURATING, 1.0, 1.0).rhs)
    c = check_condition_5(m, SATURATING, 0.55, 1.0)
    assert not c.holds and c.lhs < 0


def test_condition_5_needs_concave():
    m = build_flux_model(CONVEX, alpha_max=20)
    with pytest.raises(NotConcave):
        check_condition_5(m, CONVEX, 1.0, 1.0)


def test_round_trip_on_grid(const_model):
    a = const_model.density_grid[::97]
    back = np.array([mean_density(CONST, float(const_model.flux_at(x))) for x in a])
    assert np.max(np.abs(back - a) / np.maximum(1, a)) <= 1e-9


def test_fenchel_young_on_convex_model():
    m = build_flux_model(CONVEX, alpha_max=20)
    assert m.convexity == "strictly_convex"
    alphas = np.linspace(0.05, 10, 40)
    xs = m.flux_prime_at(alphas)
    phi = m.flux_at(alphas)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryMaxWarning)
        psi = m.psi(xs)
    gap = phi[:, None] + psi[None, :] - alphas[:, None] * xs[None, :]
    assert gap.min() >= -1e-8
    assert np.max(np.abs(np.diag(gap))) <= 1e-7
