"""Configurations, process specifications and exact-law simulation of the ZRP."""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import _kernels
from .errors import BadMass, WindowEdgeReached
from .rates import RateFunction

log = logging.getLogger(__name__)

CHUNK = 256


@dataclass(frozen=True)
class LatticeGeometry:
    """Sites ``left..right`` (inclusive).

    ``segment`` is the physical segment 1..N.  ``left_ray`` and ``line_window``
    are finite windows standing in for (-inf, N] and for Z; their artificial
    edges must never be reached by a particle.
    """

    kind: str
    left: int
    right: int

    def __post_init__(self):
        if self.kind not in ("segment", "left_ray", "line_window"):
            raise ValueError(f"unknown geometry {self.kind!r}")
        if self.right < self.left:
            raise ValueError("window bounds must be ordered")
        if self.kind == "segment" and self.left != 1:
            raise ValueError("a segment starts at site 1")

    @classmethod
    def segment(cls, N: int) -> LatticeGeometry:
        if N < 1:
            raise ValueError("segment needs N >= 1")
        return cls("segment", 1, int(N))

    @classmethod
    def left_ray(cls, N: int, window: int) -> LatticeGeometry:
        return cls("left_ray", int(N) - int(window) + 1, int(N))

    @classmethod
    def line_window(cls, a: int, b: int) -> LatticeGeometry:
        return cls("line_window", int(a), int(b))

    @property
    def n_sites(self) -> int:
        return self.right - self.left + 1

    @property
    def sites(self) -> np.ndarray:
        return np.arange(self.left, self.right + 1)

    @property
    def artificial_left(self) -> bool:
        return self.kind in ("left_ray", "line_window")

    @property
    def artificial_right(self) -> bool:
        return self.kind == "line_window"


@dataclass(frozen=True)
class ProcessSpec:
    geometry: LatticeGeometry
    k: int
    p: float
    g: RateFunction
    site_overrides: tuple | None = None  # (plus, minus), arrays (n_sites, k + 1) of full rates

    def __post_init__(self):
        if not 0.5 < self.p <= 1.0:
            raise ValueError("p must lie in (1/2, 1]")
        if self.k < 1:
            raise ValueError("need at least one particle")
        if self.site_overrides is not None:
            plus, minus = (np.asarray(a, dtype=float) for a in self.site_overrides)
            shape = (self.geometry.n_sites, self.k + 1)
            if plus.shape != shape or minus.shape != shape:
                raise ValueError(f"site overrides must have shape {shape}")
            if np.any(plus < 0) or np.any(minus < 0):
                raise ValueError("override rates must be non-negative")
            if np.any(plus[:, 0] != 0) or np.any(minus[:, 0] != 0):
                raise ValueError("override rates must vanish on empty sites")

    @property
    def q(self) -> float:
        return 1.0 - self.p

    @property
    def N(self) -> int:
        return self.geometry.n_sites

    def site_rates(self) -> tuple[np.ndarray, np.ndarray]:
        """Full per-site rate tables (n_sites, k + 1) for right and left jumps."""
        n = self.geometry.n_sites
        if self.site_overrides is not None:
            plus = np.array(self.site_overrides[0], dtype=float)
            minus = np.array(self.site_overrides[1], dtype=float)
        else:
            gt = self.g.table_upto(self.k)
            plus = np.tile(self.p * gt, (n, 1))
            minus = np.tile(self.q * gt, (n, 1))
        plus[-1, :] = 0.0
        minus[0, :] = 0.0
        return plus, minus

    def rate_tables(self):
        """(cls, rp, rm): a class per site plus one rate row per class."""
        n = self.geometry.n_sites
        if self.site_overrides is not None:
            rp, rm = self.site_rates()
            return np.arange(n, dtype=np.int64), rp, rm
        gt = self.g.table_upto(self.k)
        rp = np.vstack([self.p * gt, self.p * gt, 0 * gt, 0 * gt])
        rm = np.vstack([self.q * gt, 0 * gt, self.q * gt, 0 * gt])
        cls = np.zeros(n, dtype=np.int64)
        if n == 1:
            cls[0] = 3
        else:
            cls[0] = 1
            cls[-1] = 2
        return cls, rp, rm


@dataclass(frozen=True)
class Configuration:
    occupancy: np.ndarray
    first_site: int = 1

    def __post_init__(self):
        occ = np.asarray(self.occupancy, dtype=np.int64)
        if occ.ndim != 1 or np.any(occ < 0):
            raise ValueError("occupancy must be a 1-d array of non-negative integers")
        object.__setattr__(self, "occupancy", occ)

    @property
    def k(self) -> int:
        return int(self.occupancy.sum())

    def height(self) -> np.ndarray:
        return np.cumsum(self.occupancy)

    def to_json(self) -> str:
        return json.dumps(self.occupancy.tolist())

    def __eq__(self, other):
        return (
            isinstance(other, Configuration)
            and self.first_site == other.first_site
            and np.array_equal(self.occupancy, other.occupancy)
        )

    def __hash__(self):
        return hash((self.first_site, self.occupancy.tobytes()))


def make_config(kind: str, spec: ProcessSpec, custom=None) -> Configuration:
    """The maximal (wedge), minimal (vee) or a custom configuration."""
    n, first = spec.geometry.n_sites, spec.geometry.left
    occ = np.zeros(n, dtype=np.int64)
    if kind == "wedge":
        occ[0] = spec.k
    elif kind == "vee":
        occ[-1] = spec.k
    elif kind == "custom":
        occ = np.asarray(custom, dtype=np.int64)
        if occ.shape != (n,):
            raise BadMass(f"custom occupancy must have {n} entries")
        if np.any(occ < 0) or occ.sum() != spec.k:
            raise BadMass(f"custom occupancy must be non-negative and sum to {spec.k}")
    else:
        raise ValueError(f"unknown configuration kind {kind!r}")
    return Configuration(occ, first)


def total_jump_rate(spec: ProcessSpec, cfg: Configuration) -> float:
    plus, minus = spec.site_rates()
    idx = np.arange(spec.geometry.n_sites)
    occ = cfg.occupancy
    return float(plus[idx, occ].sum() + minus[idx, occ].sum())


def empirical_cdf(cfg: Configuration, N: int):
    """Step function x -> h(floor(xN)) / N on [0, 1] (right-continuous)."""
    h = np.concatenate(([0], np.cumsum(cfg.occupancy)))

    def cdf(x):
        j = np.clip(np.floor(np.asarray(x, dtype=float) * N + 1e-12).astype(int), 0, len(h) - 1)
        out = h[j] / N
        return out if out.ndim else float(out)

    return cdf


@dataclass
class TrajectorySample:
    probe_times: np.ndarray
    snapshots: np.ndarray  # (n_probes, n_sites)
    seed: int
    event_count: int
    absorbed_at: float | None = None
    sites: np.ndarray | None = None
    first_jump: tuple | None = None

    def configuration(self, j: int) -> Configuration:
        first = int(self.sites[0]) if self.sites is not None else 1
        return Configuration(self.snapshots[j], first)


@dataclass
class ReplicaBatch:
    """Probe snapshots of independent replicas, shape (replicas, probes, sites)."""

    probe_times: np.ndarray
    snapshots: np.ndarray
    seed: int
    events: np.ndarray
    absorbed_at: np.ndarray  # NaN where the run did not reach an absorbing state
    first_site: np.ndarray
    first_dir: np.ndarray
    lo_site: np.ndarray
    hi_site: np.ndarray
    sites: np.ndarray = field(default=None)
    observed: np.ndarray | None = None  # per-chunk reductions of the snapshots, when requested

    @property
    def replicas(self) -> int:
        return len(self.events)

    def replica(self, r: int) -> TrajectorySample:
        fj = None
        if self.first_site[r] >= 0:
            fj = (int(self.sites[self.first_site[r]]), int(self.first_dir[r]))
        ab = float(self.absorbed_at[r])
        return TrajectorySample(
            self.probe_times, self.snapshots[r], self.seed, int(self.events[r]),
            None if math.isnan(ab) else ab, self.sites, fj,
        )


def chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    """Generator for replica chunk ``chunk``; independent of thread count."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(chunk),))
    return np.random.Generator(np.random.PCG64(ss))


def run_chunks(nrep: int, seed: int, work, threads: int = 1):
    """Call ``work(lo, hi, rng)`` for consecutive replica chunks."""
    jobs = [(c, c * CHUNK, min(nrep, (c + 1) * CHUNK)) for c in range((nrep + CHUNK - 1) // CHUNK)]
    if threads <= 1 or len(jobs) <= 1:
        for c, lo, hi in jobs:
            work(lo, hi, chunk_rng(seed, c))
        return
    with ThreadPoolExecutor(max_workers=threads) as ex:
        list(ex.map(lambda j: work(j[1], j[2], chunk_rng(seed, j[0])), jobs))


def _check_probes(probes, horizon):
    probes = np.asarray(probes, dtype=float).reshape(-1)
    if probes.size and (np.any(np.diff(probes) <= 0) or probes[0] < 0 or probes[-1] > horizon):
        raise ValueError("probe times must be strictly increasing inside [0, horizon]")
    return probes


def run_replicas(spec: ProcessSpec, init: Configuration, horizon: float, probes, replicas: int,
                 seed: int, threads: int = 1, check_edges: bool = True, reduce=None) -> ReplicaBatch:
    """Independent exact trajectories sampled at the probe times.

    With ``reduce`` the snapshots of each chunk are passed through
    ``reduce(snaps[chunk])`` and only the results are kept (``observed``);
    ``snapshots`` is then empty.
    """
    probes = _check_probes(probes, horizon)
    occ0 = np.asarray(init.occupancy, dtype=np.int64)
    if occ0.shape != (spec.geometry.n_sites,) or occ0.sum() != spec.k:
        raise BadMass("initial configuration does not match the process")
    cls, rp, rm = spec.rate_tables()
    R, P, n = int(replicas), probes.size, occ0.size
    snaps = np.zeros((0 if reduce else R, P, n), dtype=np.int64)
    events = np.zeros(R, dtype=np.int64)
    absorbed = np.full(R, -1.0)
    fs = np.zeros(R, dtype=np.int64)
    fd = np.zeros(R, dtype=np.int64)
    lo = np.zeros(R, dtype=np.int64)
    hi = np.zeros(R, dtype=np.int64)
    parts = {}
    bad = []

    def work(a, b, rng):
        buf = np.zeros((b - a, P, n), dtype=np.int64) if reduce else snaps[a:b]
        _kernels.zrp_batch(occ0, cls, rp, rm, probes, float(horizon), b - a, rng,
                           buf, events[a:b], absorbed[a:b], fs[a:b], fd[a:b], lo[a:b], hi[a:b])
        if np.any(buf.sum(axis=2) != spec.k):
            bad.append(a)
        if reduce:
            parts[a] = np.asarray(reduce(buf))

    run_chunks(R, seed, work, threads)
    absorbed[absorbed < 0] = np.nan
    geo = spec.geometry
    if check_edges and R:
        if geo.artificial_left and lo.min() <= 0:
            raise WindowEdgeReached("a particle reached the left edge of the window")
        if geo.artificial_right and hi.max() >= n - 1:
            raise WindowEdgeReached("a particle reached the right edge of the window")
    if bad:
        raise AssertionError("particle number not conserved")
    observed = np.concatenate([parts[a] for a in sorted(parts)]) if reduce and parts else None
    return ReplicaBatch(probes, snaps, int(seed), events, absorbed, fs, fd, lo, hi, geo.sites, observed)


def simulate(spec: ProcessSpec, init: Configuration, horizon: float, probes, seed: int) -> TrajectorySample:
    """One exact trajectory sampled at the probe times."""
    return run_replicas(spec, init, horizon, probes, 1, seed).replica(0)


def window_margin(spec_k: int, g: RateFunction, q: float, horizon: float, tail: float = 1e-12) -> int:
    """Sites to keep free beyond the occupied region for a run of length ``horizon``.

    Each step of the occupied region's edge is a jump from the edge site, whose
    rate is at most g(k); the displacement is dominated by a Poisson variable.
    """
    lam = max(q, 1.0 - q) * float(g(spec_k)) * horizon
    return int(stats.poisson.isf(tail, lam)) + 2 if lam > 0 else 2
