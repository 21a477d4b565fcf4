import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from zrplab.coupling import CoupledPair, run_pair
from zrplab.exclusion import ExclusionConfig, sep_to_zrp, zrp_to_sep
from zrplab.flux import build_flux_model, mean_density
from zrplab.macro import dirac_profile
from zrplab.mixing import StateIndex
from zrplab.particles import Configuration, LatticeGeometry, ProcessSpec, run_replicas
from zrplab.rates import RateFunction


@st.composite
def concave_rates(draw):
    incs = sorted(draw(st.lists(st.floats(0.05, 2.0), min_size=1, max_size=4)), reverse=True)
    vals = np.concatenate(([0.0], np.cumsum(incs)))
    return RateFunction.table(vals, 0.0)


@st.composite
def occupancies(draw, max_n=7, max_k=7):
    n = draw(st.integers(1, max_n))
    occ = draw(st.lists(st.integers(0, max_k), min_size=n, max_size=n))
    if sum(occ) == 0:
        occ[0] = 1
    return np.array(occ, dtype=np.int64)


@given(concave_rates(), st.floats(0.01, 0.9), st.floats(0.01, 0.9))
def test_mean_density_increases_with_fugacity(g, a, b):
    lo, hi = sorted((a, b))
    lo, hi = lo * g.fugacity_radius, hi * g.fugacity_radius
    if hi - lo > 1e-6:
        assert mean_density(g, lo) < mean_density(g, hi)


@settings(max_examples=40)
@given(st.integers(1, 7), st.integers(1, 7), st.data())
def test_rank_unrank_bijection(N, k, data):
    index = StateIndex(N, k)
    i = data.draw(st.integers(0, len(index) - 1))
    occ = index.unrank(i)
    assert occ.sum() == k and occ.size == N
    assert index.rank(occ) == i


@given(occupancies())
def test_sep_round_trip(occ):
    eta = Configuration(occ)
    xi = zrp_to_sep(eta)
    assert xi.k == occ.sum()
    assert xi.occupancy.size == occ.size + occ.sum() - 1
    assert np.array_equal(sep_to_zrp(xi, occ.size).occupancy, occ)
    assert ExclusionConfig.from_json(xi.to_json()) == xi


@given(occupancies())
def test_first_exclusion_particle_is_leftmost_site(occ):
    xi = zrp_to_sep(Configuration(occ))
    assert np.flatnonzero(xi.occupancy)[0] + 1 == np.flatnonzero(occ)[0] + 1


@settings(max_examples=25)
@given(occupancies(6, 5), st.floats(0.55, 1.0), st.integers(0, 2**31 - 1))
def test_particle_number_conserved(occ, p, seed):
    spec = ProcessSpec(LatticeGeometry.segment(occ.size), int(occ.sum()), p, RateFunction.linear())
    b = run_replicas(spec, Configuration(occ), 3.0, [1.0, 2.0, 3.0], 4, seed)
    assert np.all(b.snapshots.sum(axis=-1) == occ.sum())


@settings(max_examples=25)
@given(occupancies(6, 4), st.floats(0.55, 1.0), st.integers(0, 2**31 - 1), st.data())
def test_coupled_order_is_kept(occ, p, seed, data):
    k, N = int(occ.sum()), occ.size
    # B: push every particle of A to the right by a random amount
    sites = np.repeat(np.arange(N), occ)
    shifts = np.array(data.draw(st.lists(st.integers(0, N), min_size=k, max_size=k)))
    moved = np.minimum(sites + shifts, N - 1)
    occ_b = np.bincount(moved, minlength=N)
    spec = ProcessSpec(LatticeGeometry.segment(N), k, p, RateFunction.constant())
    pair = CoupledPair(spec, spec, Configuration(occ), Configuration(occ_b))
    r = run_pair(pair, 4.0, [1.0, 2.0, 4.0], 8, seed=seed)
    assert np.all(np.cumsum(r.snaps_b, axis=2) <= np.cumsum(r.snaps_a, axis=2))


_MODEL = build_flux_model(RateFunction.constant(), alpha_max=50)


@given(st.floats(0.1, 5.0), st.floats(0.55, 1.0), st.floats(0.1, 4.0))
def test_profile_is_monotone_and_bounded(alpha, p, t):
    x = np.linspace(-1, 6, 300)
    u = dirac_profile(_MODEL, alpha, p, t, x)
    assert np.all(np.diff(u) >= -1e-12)
    assert np.all(u >= -1e-12) and np.all(u <= alpha + 1e-12)


@given(st.floats(-3.0, 0.0))
def test_psi_non_negative(x):
    assert _MODEL.psi(x) >= -1e-12
