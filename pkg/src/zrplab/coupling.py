"""Attractive couplings: ordered pairs, the wedge/vee coupling, the coloured process with a wall."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import BadMass, DominationViolated, OrderBroken, RegionViolated, WindowEdgeReached, WindowTooLarge
from .particles import Configuration, ProcessSpec, make_config, run_chunks
from .rates import RateFunction

TIMEOUT = math.inf


def _domination_ok(upper: ProcessSpec, lower: ProcessSpec) -> bool:
    """For every site and l >= m: lower_plus(l) >= upper_plus(m), lower_minus(m) <= upper_minus(l)."""
    pu, mu = upper.site_rates()
    pl, ml = lower.site_rates()
    # max over m <= l of upper_plus(m), min over l >= m of upper_minus(l)
    pref = np.maximum.accumulate(pu, axis=1)
    suff = np.minimum.accumulate(mu[:, ::-1], axis=1)[:, ::-1]
    tol = 1e-12
    return bool(np.all(pl >= pref - tol) and np.all(ml <= suff + tol))


@dataclass(frozen=True)
class CoupledPair:
    """Copy A (higher height function) and copy B (lower) under the attractive coupling."""

    spec_a: ProcessSpec
    spec_b: ProcessSpec
    cfg_a: Configuration
    cfg_b: Configuration

    def __post_init__(self):
        a, b = self.spec_a, self.spec_b
        if a.geometry.n_sites != b.geometry.n_sites or a.k != b.k or a.p != b.p:
            raise ValueError("coupled copies need the same lattice size, particle number and bias")
        for spec, cfg in ((a, self.cfg_a), (b, self.cfg_b)):
            if cfg.occupancy.shape != (spec.geometry.n_sites,) or cfg.k != spec.k:
                raise BadMass("configuration does not match its process")
        if not _domination_ok(a, b):
            raise DominationViolated("rates of the lower copy do not dominate those of the upper copy")
        if np.any(self.cfg_b.height() > self.cfg_a.height()):
            raise ValueError("initial heights must satisfy h_B <= h_A")


@dataclass
class PairBatch:
    probe_times: np.ndarray
    snaps_a: np.ndarray
    snaps_b: np.ndarray
    events: np.ndarray
    coalescence: np.ndarray  # NaN when not coalesced before the horizon
    violations: np.ndarray
    seed: int

    def rows(self, r: int = 0):
        """(t, copy, site, occupancy) rows for replica r."""
        for j, t in enumerate(self.probe_times):
            for copy, snaps in (("A", self.snaps_a), ("B", self.snaps_b)):
                for i, v in enumerate(snaps[r, j]):
                    yield (t, copy, i + 1, int(v))


def run_pair(pair: CoupledPair, horizon: float, probes, replicas: int, seed: int,
             stop_on_coalesce: bool = False, check_order: bool = True, threads: int = 1) -> PairBatch:
    probes = np.asarray(probes, dtype=float).reshape(-1)
    if stop_on_coalesce and probes.size:
        raise ValueError("probes are not recorded when stopping at coalescence")
    if probes.size and (np.any(np.diff(probes) <= 0) or probes[0] < 0 or probes[-1] > horizon):
        raise ValueError("probe times must be strictly increasing inside [0, horizon]")
    clsA, rpA, rmA = pair.spec_a.rate_tables()
    clsB, rpB, rmB = pair.spec_b.rate_tables()
    R, P, n = int(replicas), probes.size, pair.spec_a.geometry.n_sites
    sa = np.zeros((R, P, n), np.int64)
    sb = np.zeros((R, P, n), np.int64)
    ev = np.zeros(R, np.int64)
    co = np.zeros(R)
    vi = np.zeros(R, np.int64)

    def work(a, b, rng):
        _kernels.pair_batch(pair.cfg_a.occupancy, pair.cfg_b.occupancy, clsA, rpA, rmA, clsB, rpB, rmB,
                            probes, float(horizon), b - a, rng, check_order, stop_on_coalesce,
                            sa[a:b], sb[a:b], ev[a:b], co[a:b], vi[a:b])

    run_chunks(R, seed, work, threads)
    co[co < 0] = np.nan
    if check_order:
        if np.any(vi > 0) or np.any(np.cumsum(sb, axis=2) > np.cumsum(sa, axis=2)):
            raise OrderBroken("height order lost under the attractive coupling")
    return PairBatch(probes, sa, sb, ev, co, vi, int(seed))


def simulate_pair(pair: CoupledPair, horizon: float, probes, seed: int) -> PairBatch:
    """One joint trajectory; the height order h_B <= h_A is asserted at every event."""
    return run_pair(pair, horizon, probes, 1, seed)


def wedge_vee_pair(spec: ProcessSpec) -> CoupledPair:
    if spec.geometry.kind != "segment":
        raise ValueError("the wedge/vee coupling lives on a segment")
    return CoupledPair(spec, spec, make_config("wedge", spec), make_config("vee", spec))


def coalescence_time(spec: ProcessSpec, t_max: float, seed: int) -> float:
    """First time the wedge- and vee-started copies agree; TIMEOUT (inf) if not by t_max."""
    res = run_pair(wedge_vee_pair(spec), t_max, [], 1, seed, stop_on_coalesce=True)
    c = res.coalescence[0]
    return TIMEOUT if math.isnan(c) else float(c)


# -------------------------------------------------------------- coloured process
@dataclass(frozen=True)
class ColoredState:
    """Black particles left of (and at) the wall, white particles at and right of it.

    ``wall`` is the 1-based site N - ceil(N beta).
    """

    black: np.ndarray
    white: np.ndarray
    beta: float
    p: float
    g: RateFunction

    def __post_init__(self):
        b = np.asarray(self.black, dtype=np.int64)
        w = np.asarray(self.white, dtype=np.int64)
        object.__setattr__(self, "black", b)
        object.__setattr__(self, "white", w)
        if b.shape != w.shape or b.ndim != 1 or np.any(b < 0) or np.any(w < 0):
            raise ValueError("colour occupancies must be non-negative arrays of equal length")
        if not 0.5 < self.p <= 1:
            raise ValueError("p must lie in (1/2, 1]")
        if self.g.upper_bound is None:
            raise ValueError("the coloured process needs a bounded rate function")
        wi = self.wall - 1
        if not 0 <= wi < self.N:
            raise ValueError("wall outside the segment")
        if np.any(w[:wi] > 0) or np.any(b[wi + 1:] > 0):
            raise RegionViolated("initial colours violate the wall regions")

    @property
    def N(self) -> int:
        return self.black.size

    @property
    def wall(self) -> int:
        return self.N - math.ceil(self.N * self.beta - 1e-12)

    @property
    def gbar(self) -> float:
        return float(self.g.upper_bound)

    @property
    def modified_rate(self) -> float:
        """Constant value of the white rate on n >= 1."""
        return self.p * self.g.g1 + (1 - self.p) * self.gbar

    @property
    def modified_bias(self) -> float:
        return self.p * self.g.g1 / self.modified_rate


@dataclass
class ColoredBatch:
    probe_times: np.ndarray
    black: np.ndarray
    white: np.ndarray
    companion: np.ndarray | None
    tau: np.ndarray  # NaN when the wall never drops to one black particle
    events: np.ndarray
    seed: int

    def rows(self, r: int = 0):
        for j, t in enumerate(self.probe_times):
            for copy, snaps in (("black", self.black), ("white", self.white)):
                for i, v in enumerate(snaps[r, j]):
                    yield (t, copy, i + 1, int(v))


def simulate_colored(state: ColoredState, horizon: float, probes, seed: int, replicas: int = 1,
                     companion: Configuration | None = None, threads: int = 1) -> ColoredBatch:
    """Coloured dynamics, optionally coupled with a plain ZRP started below.

    With a companion, h_black + h_white >= h_companion is asserted at every
    event up to the stopping time tau.
    """
    probes = np.asarray(probes, dtype=float).reshape(-1)
    n = state.N
    k = int(state.black.sum() + state.white.sum())
    gt = state.g.table_upto(k + 1)
    has_z = companion is not None
    z0 = np.zeros(n, np.int64) if companion is None else np.asarray(companion.occupancy, np.int64)
    if has_z:
        if z0.shape != (n,) or z0.sum() != k:
            raise BadMass("companion must carry the same number of particles")
        if np.any(np.cumsum(z0) > np.cumsum(state.black + state.white)):
            raise ValueError("companion must start below the coloured configuration")
    R, P = int(replicas), probes.size
    sb = np.zeros((R, P, n), np.int64)
    sw = np.zeros((R, P, n), np.int64)
    sz = np.zeros((R, P, n), np.int64)
    ev = np.zeros(R, np.int64)
    taus = np.zeros(R)
    viol = np.zeros(R, np.int64)
    bad = np.zeros(R, np.int64)

    def work(a, b, rng):
        _kernels.colored_batch(state.black, state.white, z0, has_z, state.wall - 1, gt, float(state.p),
                               float(state.g.g1), state.gbar, probes, float(horizon), b - a, rng,
                               sb[a:b], sw[a:b], sz[a:b], ev[a:b], taus[a:b], viol[a:b], bad[a:b])

    run_chunks(R, seed, work, threads)
    if np.any(bad > 0):
        raise RegionViolated("a particle left its colour region")
    if np.any(viol > 0):
        raise OrderBroken("coloured height fell below the companion before the stopping time")
    if R and np.any((sb + sw).sum(axis=2) != k):
        raise AssertionError("particle number not conserved")
    taus[taus < 0] = np.nan
    return ColoredBatch(probes, sb, sw, sz if has_z else None, taus, ev, int(seed))


# -------------------------------------------------------------- comparison far from the borders
@dataclass
class DiscrepancySeries:
    s: np.ndarray
    micro: np.ndarray
    N: int
    mean: np.ndarray

    def rows(self):
        for s, m in zip(self.s, self.mean):
            yield (s, self.N, m)


def border_discrepancy(spec_line: ProcessSpec, sub_sites: tuple[int, int], init: Configuration,
                       window: tuple[int, int], s_grid, N: int, seed: int, replicas: int,
                       threads: int = 1) -> DiscrepancySeries:
    """Mean of (1/N) sum over the window of |eta_s - tilde eta_s|.

    ``tilde eta`` is the process restricted to the closed sub-segment
    ``sub_sites`` (no jumps across its ends), started from ``init`` restricted
    to it.  Both run under the basic coupling on the window of ``spec_line``;
    macroscopic time s is microscopic s N / (p - q).
    """
    geo = spec_line.geometry
    s_grid = np.asarray(s_grid, dtype=float)
    a, b = sub_sites
    lo, hi = window
    if not (geo.left <= a < lo <= hi < b <= geo.right):
        raise WindowTooLarge("the observation window must sit strictly inside the sub-segment")
    if (a, b) != (geo.left, geo.right):
        # the artificial ends of the line window must stay out of reach of the sub-segment
        from .particles import window_margin

        horizon = float(np.max(s_grid, initial=0.0)) * N / (2 * spec_line.p - 1)
        need = window_margin(spec_line.k, spec_line.g, spec_line.q, horizon) if horizon > 0 else 0
        if min(a - geo.left, geo.right - b) < need:
            raise WindowEdgeReached(f"line window needs {need} free sites beyond the sub-segment")
    occ = np.asarray(init.occupancy, np.int64)
    if occ.shape != (geo.n_sites,) or occ.sum() != spec_line.k:
        raise BadMass("initial configuration does not match the process")
    ia, ib = a - geo.left, b - geo.left
    sub = np.zeros_like(occ)
    sub[ia:ib + 1] = occ[ia:ib + 1]
    k = spec_line.k
    gt = spec_line.g.table_upto(k)
    n = geo.n_sites
    plusA = np.tile(spec_line.p * gt, (n, 1))
    minusA = np.tile(spec_line.q * gt, (n, 1))
    plusA[-1] = 0.0
    minusA[0] = 0.0
    plusB = np.zeros_like(plusA)
    minusB = np.zeros_like(minusA)
    plusB[ia:ib] = plusA[ia:ib]
    minusB[ia + 1:ib + 1] = minusA[ia + 1:ib + 1]
    cls = np.arange(n, dtype=np.int64)
    pq = 2 * spec_line.p - 1
    micro = s_grid * N / pq
    order = np.argsort(micro)
    R = int(replicas)
    sa = np.zeros((R, micro.size, n), np.int64)
    sb = np.zeros((R, micro.size, n), np.int64)
    ev = np.zeros(R, np.int64)
    co = np.zeros(R)
    vi = np.zeros(R, np.int64)

    def work(x, y, rng):
        _kernels.pair_batch(occ, sub, cls, plusA, minusA, cls, plusB, minusB, micro[order],
                            float(micro.max()), y - x, rng, False, False,
                            sa[x:y], sb[x:y], ev[x:y], co[x:y], vi[x:y])

    run_chunks(R, seed, work, threads)
    wl, wh = lo - geo.left, hi - geo.left
    d = np.abs(sa[:, :, wl:wh + 1] - sb[:, :, wl:wh + 1]).sum(axis=2) / N
    mean = np.empty(micro.size)
    mean[order] = d.mean(axis=0)
    return DiscrepancySeries(s_grid, micro, int(N), mean)
