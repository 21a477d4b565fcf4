"""The map between constant-rate zero-range configurations and exclusion configurations.

Empty sites z_1 < ... < z_{N-1} of the exclusion configuration (sites
1..N+k-1) delimit the zero-range occupancies eta(i) = z_i - z_{i-1} - 1, with
z_0 = 0 and z_N = N + k.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import _kernels, _statespace
from .errors import BadShape, TooLarge
from .mixing import DEFAULT_CAP, StateIndex
from .particles import Configuration, TrajectorySample, _check_probes, run_chunks
from .rates import RateFunction


@dataclass(frozen=True)
class ExclusionConfig:
    occupancy: np.ndarray

    def __post_init__(self):
        occ = np.asarray(self.occupancy, dtype=np.int64)
        if occ.ndim != 1 or np.any((occ != 0) & (occ != 1)):
            raise ValueError("exclusion occupancies must be 0/1")
        object.__setattr__(self, "occupancy", occ)

    @property
    def k(self) -> int:
        return int(self.occupancy.sum())

    def to_json(self) -> str:
        return json.dumps(self.occupancy.tolist())

    @classmethod
    def from_json(cls, text: str) -> ExclusionConfig:
        return cls(np.array(json.loads(text), dtype=np.int64))

    def __eq__(self, other):
        return isinstance(other, ExclusionConfig) and np.array_equal(self.occupancy, other.occupancy)

    def __hash__(self):
        return hash(self.occupancy.tobytes())


def sep_to_zrp(xi: ExclusionConfig, N: int) -> Configuration:
    occ = xi.occupancy
    holes = np.flatnonzero(occ == 0) + 1
    if holes.size != N - 1:
        raise BadShape(f"expected {N - 1} empty sites, found {holes.size}")
    z = np.concatenate(([0], holes, [occ.size + 1]))
    return Configuration(np.diff(z) - 1)


def zrp_to_sep(eta: Configuration) -> ExclusionConfig:
    out = []
    for i, n in enumerate(eta.occupancy):
        out.extend([1] * int(n))
        if i < eta.occupancy.size - 1:
            out.append(0)
    return ExclusionConfig(np.array(out, dtype=np.int64))


def simulate_asep(n_sites: int, init: ExclusionConfig, p: float, horizon: float, probes, seed: int,
                  replicas: int = 1):
    """Exact event-driven exclusion dynamics; returns one TrajectorySample per replica."""
    if init.occupancy.size != n_sites:
        raise BadShape("initial configuration has the wrong number of sites")
    if not 0.5 <= p <= 1:
        raise ValueError("p must lie in [1/2, 1]")
    probes = _check_probes(probes, horizon)
    R, P = int(replicas), probes.size
    snaps = np.zeros((R, P, n_sites), np.int64)
    events = np.zeros(R, np.int64)
    first = np.zeros(R)

    def work(a, b, rng):
        _kernels.asep_batch(init.occupancy, float(p), probes, float(horizon), b - a, rng,
                            snaps[a:b], events[a:b], first[a:b])

    run_chunks(R, seed, work, 1)
    if R and np.any(snaps.sum(axis=2) != init.k):
        raise AssertionError("particle number not conserved")
    out = []
    for r in range(R):
        s = TrajectorySample(probes, snaps[r], int(seed), int(events[r]))
        s.first_jump = None if first[r] < 0 else float(first[r])
        out.append(s)
    return out


def exclusion_generator(N: int, k: int, p: float, cap: int = DEFAULT_CAP):
    """(Q_ex, E) with Q_ex the exclusion rate matrix (lexicographic subsets) and E[a] the zero-range rank."""
    S = math.comb(N + k - 1, k)
    if S > cap:
        raise TooLarge(f"{S} configurations exceed the cap {cap}")
    use_particles = k <= N - 1
    K = k if use_particles else N - 1
    width = K + 2
    B = _statespace.binom_table(N + k, width)
    cap_nnz = 2 * S * max(1, K)
    rows = np.empty(cap_nnz, np.int64)
    cols = np.empty(cap_nnz, np.int64)
    vals = np.empty(cap_nnz)
    diag = np.empty(S)
    emap = np.empty(S, np.int64)
    nnz = _statespace.asep_generator(N, k, S, B, float(p), use_particles, rows, cols, vals, diag, emap)
    Q = sp.csr_matrix((vals[:nnz], (rows[:nnz], cols[:nnz])), shape=(S, S)) + sp.diags(diag)
    return Q.tocsr(), emap


def conjugation_residual(N: int, k: int, p: float, cap: int = DEFAULT_CAP) -> float:
    """max |Q_zrp[E a, E b] - Q_ex[a, b]| over all entries, constant rate."""
    Qx, emap = exclusion_generator(N, k, p, cap)
    if np.unique(emap).size != emap.size:
        raise AssertionError("the empty-site map is not injective")
    index = StateIndex(N, k, cap)
    g = RateFunction.constant(1.0)
    gt = g.table_upto(k)
    plus = np.tile(p * gt, (N, 1))
    minus = np.tile((1 - p) * gt, (N, 1))
    plus[-1] = 0.0
    minus[0] = 0.0
    Qz, _, _ = index.assemble(plus, minus)
    perm = sp.csr_matrix((np.ones(emap.size), (np.arange(emap.size), emap)), shape=Qz.shape)
    conj = (perm @ Qz @ perm.T).tocsr()
    diff = (conj - Qx).tocoo()
    return float(np.max(np.abs(diff.data))) if diff.nnz else 0.0
