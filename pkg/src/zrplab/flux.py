"""Grand-canonical single-site laws, the flux Phi and its Legendre conjugate Psi.

The single-site weight at fugacity phi is phi**n / g(n)!, with g(n)! = g(1)...g(n).
The flux Phi(alpha) is the fugacity whose mean occupancy is alpha.  Everything
is computed in the log domain; the derivative uses the exact identity
d(mean)/d(log phi) = variance, so Phi'(alpha) = phi / Var.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq

from .errors import (
    BoundaryMaxWarning,
    DivergenceError,
    LinearFlux,
    NonMonotone,
    NotConcave,
    UnreachableDensity,
)
from .rates import RateFunction

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-12
DEFAULT_ALPHA_MAX = 1000.0
DEFAULT_GRID = 2048
MAX_TERMS = 10_000_000
_DECREASING_RUN = 5


@dataclass(frozen=True)
class GrandCanonical:
    fugacity: float
    pmf: np.ndarray
    truncation_mass: float
    partition_Z: float
    log_partition: float

    @property
    def n_cut(self) -> int:
        return len(self.pmf) - 1

    @property
    def mean(self) -> float:
        return float(np.dot(np.arange(len(self.pmf)), self.pmf))


def _series(g: RateFunction, phi: float, tol: float, moments: bool, max_terms: int = MAX_TERMS):
    """Truncated log-terms of the partition series.

    Returns (log_terms, logZ, tail_bound_relative).  The cut is placed after the
    terms have decreased for a few consecutive indices and a geometric bound on
    the remaining tail (term ratios phi/g(n+1) are non-increasing) is below tol.
    With ``moments`` the bound covers the second moment as well.
    """
    if phi < 0 or not math.isfinite(phi):
        raise ValueError("fugacity must be finite and non-negative")
    if phi == 0:
        return np.zeros(1), 0.0, 0.0
    if phi >= g.fugacity_radius:
        raise DivergenceError(f"fugacity {phi} is not below the radius {g.fugacity_radius}")
    lphi = math.log(phi)
    n_hi = 64
    while True:
        L = g.log_factorial(n_hi + 1)
        n = np.arange(n_hi + 1)
        lt = n * lphi - L[: n_hi + 1]
        gnext = np.exp(L[1 : n_hi + 2] - L[: n_hi + 1])  # g(n+1)
        r = phi / gnext
        logz = np.logaddexp.accumulate(lt)
        with np.errstate(divide="ignore", invalid="ignore"):
            if moments:
                lb = lt + 2 * np.log1p(n) + np.log(r * (1 + r)) - 3 * np.log1p(-r)
            else:
                lb = lt + np.log(r) - np.log1p(-r)
        dec = np.zeros(n_hi + 1, dtype=bool)
        d = np.diff(lt) < 0
        run = np.convolve(d.astype(int), np.ones(_DECREASING_RUN, dtype=int), mode="full")[: d.size]
        dec[1:] = run >= _DECREASING_RUN
        ok = (r < 1) & dec & (lb <= math.log(tol) + logz)
        idx = np.flatnonzero(ok)
        if idx.size:
            c = int(idx[0])
            return lt[: c + 1], float(logz[c]), float(math.exp(min(lb[c] - logz[c], 0.0)))
        if n_hi >= max_terms:
            raise DivergenceError(
                f"partition series at fugacity {phi} did not settle within {max_terms} terms"
            )
        n_hi = min(2 * n_hi, max_terms)


def grand_canonical(g: RateFunction, phi: float, tol: float = DEFAULT_TOL) -> GrandCanonical:
    lt, logz, tail = _series(g, phi, tol, moments=False)
    pmf = np.exp(lt - logz)
    z = math.exp(logz) if logz < 700 else math.inf
    return GrandCanonical(float(phi), pmf, tail, z, logz)


def eval_partition(g: RateFunction, phi: float, tol: float = DEFAULT_TOL) -> tuple[float, int]:
    """Z(phi) = sum phi**n / g(n)! and the truncation index used."""
    lt, logz, _ = _series(g, phi, tol, moments=False)
    return (math.exp(logz) if logz < 700 else math.inf), len(lt) - 1


def _moments(g: RateFunction, phi: float, tol: float) -> tuple[float, float]:
    if phi > 0 and g.tail_slope == 0 and phi < g.fugacity_radius:
        return _moments_geometric_tail(g, phi)
    lt, logz, _ = _series(g, phi, tol, moments=True)
    if len(lt) == 1:
        return 0.0, 0.0
    w = np.exp(lt - logz)
    n = np.arange(len(lt))
    m = float(np.dot(n, w))
    var = float(np.dot((n - m) ** 2, w))
    return m, var


def _moments_geometric_tail(g: RateFunction, phi: float) -> tuple[float, float]:
    """Mean and variance for bounded g, summing the geometric tail in closed form.

    Beyond the last stored index the term ratio is the constant phi / sup g.
    """
    m = g.last
    L = g.log_factorial(m)
    n = np.arange(m + 1)
    lt = n * math.log(phi) - L
    rho = phi / g.values[-1]
    s = 1.0 / (1.0 - rho)
    ref = float(lt.max())
    w = np.exp(lt - ref)
    head, wm = w[:m], w[m]
    z = head.sum() + wm * s
    mean = (np.dot(n[:m], head) + wm * (m * s + rho * s * s)) / z
    d = m - mean
    var = (np.dot((n[:m] - mean) ** 2, head) + wm * (d * d * s + 2 * d * rho * s * s + rho * (1 + rho) * s**3)) / z
    return float(mean), float(var)


def mean_density(g: RateFunction, phi: float, tol: float = DEFAULT_TOL) -> float:
    return _moments(g, phi, tol)[0]


def _solve_fugacity(g, alpha, tol, lo, phi_max):
    """Safeguarded Newton in log(phi) with a bisection fallback.

    ``lo`` has mean below alpha; the upper end is found by doubling (or is the
    radius for bounded g, where the mean blows up).
    """
    hi = None
    if math.isfinite(phi_max):
        hi = phi_max
    else:
        cand = max(2.0 * lo, alpha, 1.0)
        while True:
            m, _ = _moments(g, cand, tol)
            if m >= alpha:
                hi = cand
                break
            lo = cand
            cand *= 2.0
            if cand > 1e300:
                raise UnreachableDensity(f"density {alpha} not reached")
    phi = lo if lo > 0 else 0.5 * hi
    if lo == 0:
        phi = min(alpha * g.g1, 0.5 * hi) if alpha > 0 else 0.0
    for _ in range(200):
        m, v = _moments(g, phi, tol)
        if abs(m - alpha) <= tol * max(1.0, alpha):
            return phi, v
        if m < alpha:
            lo = phi
        else:
            hi = phi
        step = phi * math.exp((alpha - m) / v) if v > 0 else math.nan
        if not (lo < step < hi) or not math.isfinite(step):
            step = 0.5 * (lo + hi)
        if hi - lo <= 4e-16 * hi:
            return phi, v
        phi = step
    raise UnreachableDensity(f"fugacity solve for density {alpha} did not converge")


@dataclass(frozen=True, eq=False)
class FluxModel:
    """Tabulated flux with exact nodal values and derivatives.

    Between nodes Phi is a cubic Hermite interpolant.  Psi is tabulated on the
    dual nodes x_i = +-Phi'(alpha_i) where Psi and Psi' = alpha_i are exact.
    """

    g: RateFunction
    density_grid: np.ndarray
    flux_values: np.ndarray
    flux_derivative: np.ndarray
    fugacity_radius: float
    convexity: str
    tolerance: float

    def __post_init__(self):
        a, f, d = self.density_grid, self.flux_values, self.flux_derivative
        object.__setattr__(self, "_phi", CubicHermiteSpline(a, f, d))
        if self.convexity == "linear":
            return
        sign = 1.0 if self.convexity == "strictly_convex" else -1.0
        xs = sign * d
        psi = a * xs - sign * f
        psi[0] = 0.0
        # once Phi' saturates its differences drown in rounding; keep a strictly increasing run
        keep = np.flatnonzero(xs > np.maximum.accumulate(np.concatenate(([-np.inf], xs[:-1]))))
        stop = np.flatnonzero(np.diff(keep) != 1)
        keep = keep[: stop[0] + 1] if stop.size else keep
        keep = keep[xs[keep] - xs[keep[0]] >= 0]
        object.__setattr__(self, "_psi_x", xs[keep])
        object.__setattr__(self, "_psi_alpha_end", float(a[keep[-1]]))
        object.__setattr__(self, "_psi", CubicHermiteSpline(xs[keep], psi[keep], a[keep]))

    @property
    def alpha_max(self) -> float:
        return float(self.density_grid[-1])

    @property
    def g1(self) -> float:
        return self.g.g1

    def flux_at(self, alpha):
        alpha = np.asarray(alpha, dtype=float)
        if np.any(alpha < 0) or np.any(alpha > self.alpha_max * (1 + 1e-12)):
            raise ValueError(f"density outside [0, {self.alpha_max}]")
        out = self._phi(alpha)
        return out if out.ndim else float(out)

    def flux_prime_at(self, alpha):
        alpha = np.asarray(alpha, dtype=float)
        out = self._phi(alpha, 1)
        return out if out.ndim else float(out)

    def require_strict(self):
        if self.convexity == "linear":
            raise LinearFlux("operation needs a strictly convex or strictly concave flux")

    def require_concave(self):
        if self.convexity != "strictly_concave":
            raise NotConcave(f"flux is {self.convexity}")

    # -- conjugate ----------------------------------------------------
    def psi(self, x):
        """Vectorised Psi; returns +inf outside the domain."""
        self.require_strict()
        x = np.asarray(x, dtype=float)
        xs = self._psi_x
        out = np.where(x > xs[0], self._psi(np.clip(x, xs[0], xs[-1])), 0.0)
        beyond = x > xs[-1]
        if np.any(beyond):
            out = np.where(beyond, self._psi_beyond(x), out)
        out = np.maximum(out, 0.0)
        return out if out.ndim else float(out)

    def _psi_beyond(self, x):
        xs, a_max = self._psi_x, self._psi_alpha_end
        tangent = float(self._psi(xs[-1])) + a_max * (x - xs[-1])
        if self.convexity == "strictly_concave":
            val = np.where(x > 0, np.inf, tangent)
            if math.isfinite(self.fugacity_radius):
                val = np.where(x == 0, self.fugacity_radius, val)
            return val
        return tangent

    def psi_prime(self, x):
        self.require_strict()
        x = np.asarray(x, dtype=float)
        xs = self._psi_x
        out = np.where(x <= xs[0], 0.0, self._psi(np.clip(x, xs[0], xs[-1]), 1))
        out = np.where(x > xs[-1], self._psi_alpha_end, out)
        out = np.maximum(out, 0.0)
        return out if out.ndim else float(out)

    @property
    def psi_support_edge(self) -> float:
        """Largest x with Psi(x) = 0, i.e. +-Phi'(0) = +-g(1)."""
        return float(self._psi_x[0])

    @property
    def psi_domain_end(self) -> float:
        """End of the tabulated part of Psi's domain."""
        return float(self._psi_x[-1])

    def psi_inverse(self, y: float) -> float:
        """The x > support edge with Psi(x) = y (y > 0)."""
        self.require_strict()
        xs = self._psi_x
        if y <= 0:
            return float(xs[0])
        top = float(self._psi(xs[-1]))
        if y > top:
            if self.convexity == "strictly_concave" and math.isfinite(self.fugacity_radius):
                if y >= self.fugacity_radius:
                    raise ValueError(f"{y} is not below sup Psi = {self.fugacity_radius}")
            warnings.warn(
                f"Psi inverse of {y} lies beyond the tabulated densities", BoundaryMaxWarning, stacklevel=2
            )
            return float(xs[-1] + (y - top) / self._psi_alpha_end)
        return float(brentq(lambda s: float(self._psi(s)) - y, xs[0], xs[-1], xtol=1e-15, rtol=1e-15))

    def to_csv_rows(self):
        return zip(self.density_grid, self.flux_values, self.flux_derivative)


def _classify(alpha, dphi, tol):
    dd = np.diff(dphi)
    scale = np.maximum(np.abs(dphi[1:]), np.abs(dphi[:-1]))
    rel = dd / scale
    thr = max(1e3 * tol, 1e-10)
    if np.all(np.abs(rel) <= thr * 10):
        return "linear"
    if np.all(rel > 0):
        return "strictly_convex"
    if np.all(rel < 0):
        return "strictly_concave"
    pos, neg = np.sum(rel > thr), np.sum(rel < -thr)
    if neg == 0 and np.all(rel > -thr):
        return "strictly_convex"
    if pos == 0 and np.all(rel < thr):
        return "strictly_concave"
    raise NonMonotone(f"flux derivative changes monotonicity ({pos} increases, {neg} decreases)")


@lru_cache(maxsize=64)
def build_flux_model(
    g: RateFunction,
    alpha_max: float = DEFAULT_ALPHA_MAX,
    tol: float = DEFAULT_TOL,
    n_grid: int = DEFAULT_GRID,
    spacing: str = "log1p",
) -> FluxModel:
    """Tabulate Phi on [0, alpha_max].

    ``spacing='log1p'`` puts nodes uniformly in log(1 + alpha), which keeps the
    relative node spacing bounded over several decades of density.
    """
    if alpha_max <= 0:
        raise ValueError("alpha_max must be positive")
    if spacing == "log1p":
        alpha = np.expm1(np.linspace(0.0, math.log1p(alpha_max), n_grid))
        alpha[-1] = alpha_max
    elif spacing == "uniform":
        alpha = np.linspace(0.0, alpha_max, n_grid)
    else:
        raise ValueError(f"unknown spacing {spacing!r}")
    phi = np.zeros(n_grid)
    dphi = np.zeros(n_grid)
    dphi[0] = g.g1
    radius = g.fugacity_radius
    lo = 0.0
    for i in range(1, n_grid):
        phi[i], var = _solve_fugacity(g, float(alpha[i]), tol, lo, radius)
        if not phi[i] > lo:
            raise NonMonotone(f"fugacity not increasing at density {alpha[i]}")
        if phi[i] >= radius:
            raise UnreachableDensity(f"density {alpha[i]} needs fugacity at the radius")
        dphi[i] = phi[i] / var
        lo = phi[i]
    convexity = _classify(alpha, dphi, tol)
    log.debug("flux model: %d nodes up to %g, %s", n_grid, alpha_max, convexity)
    return FluxModel(g, alpha, phi, dphi, radius, convexity, tol)


def conjugate_at(model: FluxModel, x: float) -> tuple[float, float]:
    """Psi(x) and the maximising density alpha* = Psi'(x)."""
    model.require_strict()
    x = float(x)
    if x > model.psi_domain_end:
        warnings.warn(
            f"maximiser for x={x} sits at the density cap {model.alpha_max}; value is a lower bound",
            BoundaryMaxWarning,
            stacklevel=2,
        )
    return float(model.psi(x)), float(model.psi_prime(x))


@dataclass(frozen=True)
class Condition5:
    holds: bool
    lhs: float
    rhs: float
    front_branch: float
    stack_branch: float


def check_condition_5(model: FluxModel, g: RateFunction, p: float, alpha: float) -> Condition5:
    """Sufficient condition for cutoff at the macroscopic equilibrium time (concave flux)."""
    from .macro import equilibrium_time

    model.require_concave()
    gbar = g.upper_bound
    if gbar is None:
        raise ValueError("condition needs a bounded rate function")
    if not 0.5 < p <= 1:
        raise ValueError("p must lie in (1/2, 1]")
    q = 1.0 - p
    lhs = (p * g.g1 - q * gbar) / (p - q)
    t1 = equilibrium_time(model, alpha, 1.0)
    # left-most particle branch: a = Psi'(Psi^-1(alpha/T)), value Phi(a)/a
    x = model.psi_inverse(alpha / t1)
    a = float(model.psi_prime(x))
    front = float(model.flux_at(a)) / a if a > 0 else model.g1
    # stack branch: Phi'(a) = 1/T, value Phi(a)
    stack = float(model.flux_at(_density_with_slope(model, 1.0 / t1)))
    rhs = max(front, stack)
    return Condition5(bool(lhs > rhs), float(lhs), float(rhs), front, stack)


def _density_with_slope(model: FluxModel, slope: float) -> float:
    """Density a with Phi'(a) = slope on a concave model; 0 when slope >= g(1)."""
    if slope >= model.g1:
        return 0.0
    d = model.flux_derivative
    if slope <= d[-1]:
        warnings.warn("slope below the tabulated range", BoundaryMaxWarning, stacklevel=2)
        return model.alpha_max
    return float(
        brentq(lambda a: model.flux_prime_at(a) - slope, 0.0, model.alpha_max, xtol=1e-14, rtol=1e-15)
    )
