"""Exact small-instance laws and Monte Carlo mixing experiments."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy import stats
from scipy.sparse.linalg import spsolve
from scipy.special import logsumexp

from . import _kernels, _statespace
from .errors import BadMode, NotCrossed, TooLarge
from .particles import (
    Configuration,
    LatticeGeometry,
    ProcessSpec,
    chunk_rng,
    make_config,
    run_chunks,
    run_replicas,
)
from .rates import RateFunction

log = logging.getLogger(__name__)

DEFAULT_CAP = 20_000
UNIFORMIZATION_EPS = 1e-11


class StateIndex:
    """Ordered enumeration of the configurations of k particles on N sites.

    Index 0 is the wedge (all particles on the first site) and the last index
    the vee (all on the last site).
    """

    def __init__(self, N: int, k: int, cap: int = DEFAULT_CAP):
        if N < 1 or k < 1:
            raise ValueError("need N >= 1 and k >= 1")
        self.N, self.k = int(N), int(k)
        self.size = math.comb(self.N + self.k - 1, self.k)
        if self.size > cap:
            raise TooLarge(f"{self.size} configurations exceed the cap {cap}")
        self.use_pos = self.k <= self.N - 1
        width = self.k if self.use_pos else self.N - 1
        self._B = _statespace.binom_table(self.N + self.k, max(width, 1) + 1)
        self._summary = None

    def __len__(self):
        return self.size

    def rank(self, occ) -> int:
        return int(self.ranks(np.asarray(occ, dtype=np.int64)[None, :])[0])

    def ranks(self, occs) -> np.ndarray:
        occs = np.ascontiguousarray(occs, dtype=np.int64)
        if occs.ndim != 2 or occs.shape[1] != self.N:
            raise ValueError(f"expected rows of {self.N} occupancies")
        if np.any(occs.sum(axis=1) != self.k) or np.any(occs < 0):
            raise ValueError("rows must be configurations with the right particle count")
        return _statespace.rank_occ_rows(occs, self.N, self.k, self._B, self.use_pos)

    def unrank(self, i: int) -> np.ndarray:
        if not 0 <= i < self.size:
            raise IndexError(i)
        return _statespace.unrank(np.int64(i), self.N, self.k, self._B, self.use_pos)

    def states(self) -> np.ndarray:
        return np.array([self.unrank(i) for i in range(self.size)], dtype=np.int64)

    def assemble(self, plus: np.ndarray, minus: np.ndarray, lgf: np.ndarray | None = None):
        """Rate matrix Q (CSR) for per-site right/left rate tables (N, k + 1)."""
        S, N, k = self.size, self.N, self.k
        width = max(1, min(N, k))
        cap = 2 * S * width
        rows = np.empty(cap, np.int64)
        cols = np.empty(cap, np.int64)
        vals = np.empty(cap)
        diag = np.empty(S)
        ell = np.empty(S, np.int64)
        top = np.empty(S, np.int64)
        wsum = np.empty(S, np.int64)
        lgsum = np.empty(S)
        if lgf is None:
            lgf = np.zeros(k + 1)
        nnz = _statespace.zrp_generator(
            N, k, S, self._B, np.ascontiguousarray(plus, float), np.ascontiguousarray(minus, float),
            self.use_pos, rows, cols, vals, diag, ell, top, wsum, lgsum, np.ascontiguousarray(lgf, float),
        )
        Q = sp.csr_matrix((vals[:nnz], (rows[:nnz], cols[:nnz])), shape=(S, S))
        Q = Q + sp.diags(diag)
        self._summary = (ell, top, wsum)
        return Q.tocsr(), diag, lgsum

    def summaries(self):
        """(left-most occupied site, occupancy of site N, sum of site * occupancy)."""
        if self._summary is None:
            z = np.zeros((self.N, self.k + 1))
            self.assemble(z, z)
        return self._summary


def _log_gfact(g: RateFunction, k: int) -> np.ndarray:
    return g.log_factorial(k).copy()


def spec_generator(spec: ProcessSpec, index: StateIndex | None = None):
    index = index or StateIndex(spec.geometry.n_sites, spec.k)
    plus, minus = spec.site_rates()
    Q, _, _ = index.assemble(plus, minus)
    return index, Q


def _log_weights(index: StateIndex, p: float, g: RateFunction) -> np.ndarray:
    z = np.zeros((index.N, index.k + 1))
    _, _, lgsum = index.assemble(z, z, _log_gfact(g, index.k))
    wsum = index.summaries()[2]
    return wsum * math.log(p / (1.0 - p)) - lgsum


def _stationary_from_formula(index: StateIndex, p: float, g: RateFunction) -> np.ndarray:
    S = index.size
    if p >= 1.0:
        pi = np.zeros(S)
        pi[-1] = 1.0
        return pi
    logw = _log_weights(index, p, g)
    w = np.exp(logw - logw.max())
    return w / w.sum()


def stationary_law(N: int, k: int, p: float, g: RateFunction, cap: int = DEFAULT_CAP) -> np.ndarray:
    """Product-form equilibrium over the StateIndex ordering (Dirac at vee when p = 1)."""
    return _stationary_from_formula(StateIndex(N, k, cap), p, g)


def stationarity_residual(N: int, k: int, p: float, g: RateFunction, cap: int = DEFAULT_CAP) -> float:
    index = StateIndex(N, k, cap)
    spec = ProcessSpec(LatticeGeometry.segment(N), k, p, g)
    pi = _stationary_from_formula(index, p, g)
    _, Q = spec_generator(spec, index)
    return float(np.max(np.abs(Q.T @ pi)))


def _spec_stationary(spec: ProcessSpec, index: StateIndex, Q) -> np.ndarray:
    if spec.site_overrides is None and spec.geometry.kind == "segment":
        return _stationary_from_formula(index, spec.p, spec.g)
    S = index.size
    A = Q.T.tolil()
    A[S - 1, :] = np.ones(S)
    b = np.zeros(S)
    b[-1] = 1.0
    pi = spsolve(A.tocsc(), b)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


class Uniformizer:
    """Transient laws of dX/dt = X Q through a Poisson-randomised jump chain."""

    def __init__(self, Q, eps: float = UNIFORMIZATION_EPS):
        self.QT = Q.T.tocsr()
        self.rate = float(max(-Q.diagonal().min(), 0.0))
        self.eps = eps
        self.max_depth = 0

    def advance(self, V: np.ndarray, dt: float) -> np.ndarray:
        """Propagate distributions stored as columns of V by time dt."""
        if dt <= 0 or self.rate == 0.0:
            return V.copy()
        m = self.rate * dt
        depth = int(stats.poisson.isf(self.eps, m)) + 1
        self.max_depth = max(self.max_depth, depth)
        weights = stats.poisson.pmf(np.arange(depth + 1), m)
        acc = weights[0] * V
        cur = V
        for n in range(1, depth + 1):
            cur = cur + (self.QT @ cur) / self.rate
            if weights[n] > 0:
                acc = acc + weights[n] * cur
        return acc


def transient_law(spec: ProcessSpec, init: Configuration, t: float, cap: int = DEFAULT_CAP) -> np.ndarray:
    """Law of the configuration at time t, absolute error below 1e-10."""
    if t < 0:
        raise ValueError("time must be non-negative")
    index, Q = spec_generator(spec, StateIndex(spec.geometry.n_sites, spec.k, cap))
    v = np.zeros(index.size)
    v[index.rank(init.occupancy)] = 1.0
    return Uniformizer(Q).advance(v, t)


@dataclass
class TVCurve:
    times: np.ndarray
    values: np.ndarray
    mode: str
    time_unit: str = "microscopic"
    replicas: int | None = None
    seed: int | None = None
    ci_low: np.ndarray | None = None
    ci_high: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    def rows(self):
        lo = self.ci_low if self.ci_low is not None else self.values
        hi = self.ci_high if self.ci_high is not None else self.values
        for row in zip(self.times, self.values, lo, hi):
            yield (*row, self.mode)


def _exact_tv(spec: ProcessSpec, times: np.ndarray, cap: int, block: int = 1024) -> TVCurve:
    index, Q = spec_generator(spec, StateIndex(spec.geometry.n_sites, spec.k, cap))
    pi = _spec_stationary(spec, index, Q)
    S = index.size
    order = np.argsort(times)
    ts = times[order]
    worst = np.zeros(len(ts))
    wedge_identity = np.zeros(len(ts))
    uni = Uniformizer(Q)
    for start in range(0, S, block):
        cols = np.arange(start, min(S, start + block))
        V = np.zeros((S, cols.size))
        V[cols, np.arange(cols.size)] = 1.0
        now = 0.0
        for j, t in enumerate(ts):
            V = uni.advance(V, t - now)
            now = t
            tv = 0.5 * np.abs(V - pi[:, None]).sum(axis=0)
            worst[j] = max(worst[j], tv.max())
            if start == 0:
                wedge_identity[j] = 1.0 - V[S - 1, 0]
    values = np.empty_like(worst)
    values[order] = worst
    if np.any(np.diff(worst) > 1e-9):
        raise AssertionError("exact distance to equilibrium increased in time")
    info = {"state_space_size": S, "truncation_depth": uni.max_depth}
    if spec.p == 1.0 and spec.site_overrides is None:
        ident = np.empty_like(wedge_identity)
        ident[order] = wedge_identity
        gap = float(np.max(np.abs(ident - values))) if len(ts) else 0.0
        if gap > 1e-8:
            raise AssertionError(f"worst-case distance differs from the wedge identity by {gap}")
        info["wedge_identity_gap"] = gap
    return TVCurve(times, np.clip(values, 0.0, 1.0), "exact", info=info)


def _wilson(k, n, z=1.96):
    if n == 0:
        return np.nan, np.nan
    ph = k / n
    den = 1 + z * z / n
    c = (ph + z * z / (2 * n)) / den
    h = z * math.sqrt(ph * (1 - ph) / n + z * z / (4 * n * n)) / den
    return max(0.0, c - h), min(1.0, c + h)


def coalescence_times(spec: ProcessSpec, t_max: float, replicas: int, seed: int, threads: int = 1) -> np.ndarray:
    """Coalescence times of wedge- and vee-started copies under the attractive coupling (inf = timeout)."""
    from .coupling import CoupledPair, run_pair

    pair = CoupledPair(spec, spec, make_config("wedge", spec), make_config("vee", spec))
    res = run_pair(pair, t_max, [], replicas, seed, stop_on_coalesce=True, threads=threads)
    return np.where(np.isnan(res.coalescence), np.inf, res.coalescence)


def _leftmost(snaps: np.ndarray) -> np.ndarray:
    """1-based index of the first occupied site along the last axis."""
    return np.argmax(snaps > 0, axis=-1) + 1


def tv_curve(spec: ProcessSpec, times, mode: str = "exact", replicas: int = 0, seed: int = 0,
             eps: float = 0.1, cap: int = DEFAULT_CAP, threads: int = 1,
             stationary_samples: int = 4000) -> TVCurve:
    """Distance to equilibrium at microscopic times.

    ``exact``: worst case over all initial configurations.  ``mc_upper``:
    2 P(wedge and vee copies not coalesced), clipped to 1.  ``mc_lower``:
    P_wedge(l <= N - eps N) - pi(l <= N - eps N) with l the left-most occupied site.
    ``mc_identity`` (p = 1 only): P_wedge(eta_t != vee), which equals the
    worst-case distance when the equilibrium is the Dirac mass at vee.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0 or np.any(times < 0):
        raise ValueError("times must be a non-empty list of non-negative numbers")
    if mode == "exact":
        return _exact_tv(spec, times, cap)
    if mode not in ("mc_upper", "mc_lower", "mc_identity"):
        raise BadMode(f"unknown mode {mode!r}")
    if spec.geometry.kind != "segment":
        raise BadMode("Monte Carlo modes need a segment")
    if replicas < 1:
        raise ValueError("Monte Carlo modes need replicas >= 1")
    n = replicas
    if mode == "mc_identity":
        if spec.p != 1.0 or spec.site_overrides is not None:
            raise BadMode("the identity statistic needs p = 1")
        batch = run_replicas(spec, make_config("wedge", spec), float(times.max()), [], n, seed,
                             threads=threads, reduce=lambda s: np.zeros((s.shape[0], 0)))
        ab = np.where(np.isnan(batch.absorbed_at), np.inf, batch.absorbed_at)
        alive = np.array([(ab > t).sum() for t in times])
        ci = np.array([_wilson(a, n) for a in alive])
        return TVCurve(times, alive / n, mode, replicas=n, seed=seed, ci_low=ci[:, 0], ci_high=ci[:, 1])
    if mode == "mc_upper":
        ct = coalescence_times(spec, float(times.max()), n, seed, threads)
        alive = np.array([(ct > t).sum() for t in times])
        ci = np.array([_wilson(a, n) for a in alive])
        vals = np.minimum(1.0, 2 * alive / n)
        return TVCurve(times, vals, mode, replicas=n, seed=seed,
                       ci_low=np.minimum(1, 2 * ci[:, 0]), ci_high=np.minimum(1, 2 * ci[:, 1]))
    N = spec.geometry.n_sites
    thr = math.floor(N - eps * N + 1e-9)
    order = np.argsort(times)
    batch = run_replicas(spec, make_config("wedge", spec), float(times.max()), times[order], n, seed,
                         threads=threads, reduce=lambda s: _leftmost(s) <= thr)
    hit = np.empty(times.size)
    hit[order] = batch.observed.mean(axis=0)
    pi_tail, info = _stationary_leftmost_tail(spec, thr, cap, seed, stationary_samples)
    vals = hit - pi_tail
    cnt = hit * n
    ci = np.array([_wilson(c, n) for c in cnt]) - pi_tail
    info["threshold_site"] = thr
    return TVCurve(times, vals, mode, replicas=n, seed=seed, ci_low=ci[:, 0], ci_high=ci[:, 1], info=info)


def _stationary_leftmost_tail(spec, thr, cap, seed, samples):
    N, k = spec.geometry.n_sites, spec.k
    if spec.p == 1.0:
        return (1.0 if N <= thr else 0.0), {"stationary": "vee"}
    try:
        index = StateIndex(N, k, cap)
    except TooLarge:
        occ = sample_stationary(N, k, spec.p, spec.g, samples, seed)
        return float(np.mean(_leftmost(occ) <= thr)), {"stationary": "metropolis", "samples": samples}
    pi = _stationary_from_formula(index, spec.p, spec.g)
    ell = index.summaries()[0]
    return float(pi[ell <= thr].sum()), {"stationary": "exact"}


def sample_stationary(N: int, k: int, p: float, g: RateFunction, n_samples: int, seed: int,
                      burn: int | None = None, thin: int | None = None) -> np.ndarray:
    """Metropolis samples of the equilibrium law (single-particle moves)."""
    if p >= 1.0:
        out = np.zeros((n_samples, N), dtype=np.int64)
        out[:, -1] = k
        return out
    burn = 100 * N * k if burn is None else int(burn)
    thin = max(1, N * max(1, k) // 4) if thin is None else int(thin)
    log_g = np.concatenate(([0.0], np.log(g.table_upto(k)[1:])))
    occ0 = np.zeros(N, dtype=np.int64)
    occ0[-1] = k
    out = np.zeros((n_samples, N), dtype=np.int64)
    _kernels.metropolis_chain(occ0, log_g, math.log(p / (1 - p)), n_samples, burn, thin, chunk_rng(seed, 0), out)
    return out


def mixing_time_from_curve(curve: TVCurve, theta: float) -> float:
    """First time the curve drops to theta, linearly interpolated between probes."""
    t, d = np.asarray(curve.times, float), np.asarray(curve.values, float)
    order = np.argsort(t)
    t, d = t[order], d[order]
    below = np.flatnonzero(d <= theta)
    if below.size == 0:
        raise NotCrossed(f"curve never reaches {theta}")
    i = int(below[0])
    if i == 0:
        return float(t[0])
    t0, t1, d0, d1 = t[i - 1], t[i], d[i - 1], d[i]
    return float(t0 + (d0 - theta) * (t1 - t0) / (d0 - d1))


def leftmost_tail_check(N: int, k: int, p: float, g: RateFunction, delta: int, cap: int = DEFAULT_CAP):
    """Equilibrium probability that the left-most particle sits at or left of N - delta, and its bound.

    Both sides are compared in log space so that tiny tails cannot underflow.
    """
    if not p < 1:
        raise ValueError("needs p < 1")
    q = 1 - p
    index = StateIndex(N, k, cap)
    logw = _log_weights(index, p, g)
    ell = index.summaries()[0]
    mask = ell <= N - delta
    log_tail = (logsumexp(logw[mask]) - logsumexp(logw)) if mask.any() else -math.inf
    log_bound = (math.log(float(g(k)) / g.g1) - delta * math.log(p / q) - math.log1p(-q / p))
    if log_tail > log_bound + 1e-12:
        raise AssertionError(f"tail exp({log_tail}) exceeds bound exp({log_bound}) at delta={delta}")
    return math.exp(log_tail), math.exp(log_bound)


def leftmost_tail_profile(N: int, k: int, p: float, g: RateFunction, cap: int = DEFAULT_CAP):
    """(delta, log exact tail, log bound) for every delta = 0..N-1 from one enumeration."""
    if not p < 1:
        raise ValueError("needs p < 1")
    q = 1 - p
    index = StateIndex(N, k, cap)
    logw = _log_weights(index, p, g)
    ell = index.summaries()[0].astype(np.int64)
    per_site = np.full(N + 1, -np.inf)
    np.logaddexp.at(per_site, ell, logw)
    log_cdf = np.logaddexp.accumulate(per_site) - logsumexp(logw)
    delta = np.arange(N)
    log_tail = log_cdf[N - delta]
    log_bound = math.log(float(g(k)) / g.g1) - delta * math.log(p / q) - math.log1p(-q / p)
    return delta, log_tail, log_bound


@dataclass
class FrontSeries:
    times: np.ndarray
    left_mean: np.ndarray
    left_ci: np.ndarray
    stack_mean: np.ndarray
    stack_ci: np.ndarray
    left_pred: np.ndarray
    stack_pred: np.ndarray
    replicas: int
    seed: int
    N: int

    def rows(self):
        for j, t in enumerate(self.times):
            yield (t, self.N * t, self.left_mean[j], self.left_ci[j, 0], self.left_ci[j, 1], self.left_pred[j],
                   self.stack_mean[j], self.stack_ci[j, 0], self.stack_ci[j, 1], self.stack_pred[j])


def _mean_ci(x: np.ndarray, axis=0):
    n = x.shape[axis]
    m = x.mean(axis=axis)
    if n < 2:
        return m, np.stack([m, m], axis=-1)
    s = x.std(axis=axis, ddof=1)
    h = stats.t.ppf(0.975, n - 1) * s / math.sqrt(n)
    return m, np.stack([m - h, m + h], axis=-1)


def predicted_fronts(model, alpha, p, t):
    from .macro import dirac_profile, front_functions

    if model.convexity == "strictly_concave":
        f = front_functions(model, alpha, p, t)
        return f.left, f.stack
    tau = (2 * p - 1) * t
    left = min(1.0, model.g1 * tau)
    return left, alpha - float(dirac_profile(model, alpha, 1.0, tau, 1.0))


def front_trajectory_experiment(spec: ProcessSpec, times, replicas: int, seed: int, model=None,
                                threads: int = 1) -> FrontSeries:
    """Left-most particle and terminal stack from the wedge at microscopic times N t."""
    from .flux import build_flux_model

    N = spec.geometry.n_sites
    times = np.asarray(times, dtype=float)
    micro = N * times
    batch = run_replicas(spec, make_config("wedge", spec), float(micro.max()), micro, replicas, seed,
                         threads=threads, reduce=lambda s: np.stack([_leftmost(s), s[..., -1]], axis=-1))
    obs = batch.observed / N
    lm, lci = _mean_ci(obs[..., 0])
    sm, sci = _mean_ci(obs[..., 1])
    model = model or build_flux_model(spec.g)
    alpha = spec.k / N
    pred = np.array([predicted_fronts(model, alpha, spec.p, t) for t in times])
    return FrontSeries(times, lm, lci, sm, sci, pred[:, 0], pred[:, 1], replicas, seed, N)


@dataclass
class HydroSeries:
    times: np.ndarray
    xs: np.ndarray
    empirical: np.ndarray  # (times, xs)
    ci: np.ndarray
    predicted: np.ndarray
    replicas: int
    seed: int
    N: int
    p: float

    def rows(self):
        for j, t in enumerate(self.times):
            for i, x in enumerate(self.xs):
                yield (t, self.N * t, (2 * self.p - 1) * t, x, self.empirical[j, i], self.ci[j, i, 0],
                       self.ci[j, i, 1], self.predicted[j, i])

    @property
    def max_error(self) -> np.ndarray:
        return np.abs(self.empirical - self.predicted).max(axis=1)


def hydro_profile_experiment(spec: ProcessSpec, times, xs, replicas: int, seed: int, model=None,
                             threads: int = 1) -> HydroSeries:
    """Mean height profile h(floor(xN))/N from the wedge, against the limit profile."""
    from .flux import build_flux_model
    from .macro import segment_profile

    N = spec.geometry.n_sites
    times = np.asarray(times, dtype=float)
    xs = np.asarray(xs, dtype=float)
    cols = np.floor(xs * N + 1e-9).astype(int)

    def reduce(s):
        h = np.concatenate([np.zeros(s.shape[:-1] + (1,), dtype=s.dtype), np.cumsum(s, axis=-1)], axis=-1)
        return h[..., cols] / N

    micro = N * times
    batch = run_replicas(spec, make_config("wedge", spec), float(micro.max()), micro, replicas, seed,
                         threads=threads, reduce=reduce)
    emp, ci = _mean_ci(batch.observed)
    model = model or build_flux_model(spec.g)
    alpha = spec.k / N
    pred = np.array([segment_profile(model, alpha, spec.p, t, xs) for t in times])
    return HydroSeries(times, xs, emp, ci, pred, replicas, seed, N, spec.p)


@dataclass
class PoissonMaxResult:
    alpha: float
    C: float
    N: int
    replicas: int
    frequency: float | None
    exact: float
    bound: float

    def row(self):
        return (self.alpha, self.C, self.N, self.replicas, self.frequency, self.exact, self.bound)


def poisson_max_experiment(alpha: float, C: float, N: int, replicas: int, seed: int) -> PoissonMaxResult:
    """Frequency of max of ceil(C N) iid Poisson(alpha N) reaching 3 alpha N."""
    lam = alpha * N
    if lam < 1:
        raise ValueError("needs alpha N >= 1")
    m = math.ceil(C * N)
    level = 3 * lam
    single = float(stats.poisson.sf(math.ceil(level) - 1, lam))
    exact = float(-math.expm1(m * math.log1p(-single))) if single < 1 else 1.0
    bound = C * N**2 * math.exp(-3 * lam * math.log(math.log(N) / lam + 1)) if N > 1 else math.inf
    if replicas <= 0:
        return PoissonMaxResult(alpha, C, N, 0, None, exact, bound)
    rng = chunk_rng(seed, 0)
    hits = 0
    step = max(1, 2_000_000 // m)
    done = 0
    while done < replicas:
        r = min(step, replicas - done)
        hits += int((rng.poisson(lam, size=(r, m)).max(axis=1) >= level).sum())
        done += r
    return PoissonMaxResult(alpha, C, N, replicas, hits / replicas, exact, bound)


def empirical_tv(index: StateIndex, occs: np.ndarray, law: np.ndarray) -> float:
    """Total variation between the empirical law of sampled configurations and ``law``."""
    counts = np.bincount(index.ranks(occs), minlength=index.size) / len(occs)
    return 0.5 * float(np.abs(counts - law).sum())
