"""Hopf-Lax solutions of U_t + Phi(U_x) = 0 for cumulative (CDF) initial data.

Initial data are piecewise linear in y.  A repeated abscissa encodes a jump, so
a Dirac mass at 0 is the point list [(0, 0), (0, alpha)].  On each linear piece
of slope s the variational problem has the closed-form optimiser
y* = x - t Phi'(s), clipped to the piece, in both the convex and concave case.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NoConvergence, NonfiniteSearch
from .flux import FluxModel


@dataclass(frozen=True)
class InitialData:
    """Non-decreasing cumulative profile given by breakpoints (ys, vs)."""

    ys: np.ndarray
    vs: np.ndarray
    kind: str = "cdf_table"

    def __post_init__(self):
        ys = np.asarray(self.ys, dtype=float)
        vs = np.asarray(self.vs, dtype=float)
        if ys.ndim != 1 or ys.shape != vs.shape or ys.size == 0:
            raise ValueError("breakpoints and values must be 1-d arrays of equal length")
        if np.any(np.diff(ys) < 0) or np.any(np.diff(vs) < 0):
            raise ValueError("cumulative profile must be non-decreasing")
        if not np.all(np.isfinite(ys)) or not np.all(np.isfinite(vs)):
            raise ValueError("breakpoints must be finite")
        object.__setattr__(self, "ys", ys)
        object.__setattr__(self, "vs", vs)

    @classmethod
    def dirac(cls, alpha: float, at: float = 0.0) -> InitialData:
        return cls(np.array([at, at]), np.array([0.0, alpha]), "dirac")

    @classmethod
    def cdf_table(cls, breakpoints, values) -> InitialData:
        return cls(np.asarray(breakpoints, float), np.asarray(values, float), "cdf_table")

    @classmethod
    def measure_atoms(cls, atoms) -> InitialData:
        atoms = sorted((float(y), float(m)) for y, m in atoms)
        if any(m < 0 for _, m in atoms):
            raise ValueError("atom masses must be non-negative")
        ys, vs, acc = [], [], 0.0
        for y, m in atoms:
            ys += [y, y]
            vs += [acc, acc + m]
            acc += m
        return cls(np.array(ys), np.array(vs), "measure_atoms")

    @property
    def total_mass(self) -> float:
        return float(self.vs[-1] - self.vs[0])

    def value(self, y, upper: bool):
        """Profile at y; at a jump the upper (u.s.c.) or lower (l.s.c.) value."""
        y = np.asarray(y, dtype=float)
        side = "right" if upper else "left"
        idx = np.searchsorted(self.ys, y, side=side)
        lo = np.clip(idx - 1, 0, len(self.ys) - 1)
        hi = np.clip(idx, 0, len(self.ys) - 1)
        y0, y1 = self.ys[lo], self.ys[hi]
        v0, v1 = self.vs[lo], self.vs[hi]
        with np.errstate(invalid="ignore", divide="ignore"):
            frac = np.where(y1 > y0, (y - y0) / (y1 - y0), 0.0)
        out = np.where(idx == 0, self.vs[0], np.where(idx >= len(self.ys), self.vs[-1], v0 + frac * (v1 - v0)))
        if upper:
            exact = np.isin(y, self.ys)
            if np.any(exact):
                last = np.searchsorted(self.ys, y, side="right") - 1
                out = np.where(exact, self.vs[np.clip(last, 0, None)], out)
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class MacroProfile:
    model: FluxModel
    data: InitialData

    @property
    def convention(self) -> str:
        return "convex_lsc" if self.model.convexity == "strictly_convex" else "concave_usc"


def _hopf_lax(model: FluxModel, data: InitialData, t: float, x: np.ndarray) -> np.ndarray:
    model.require_strict()
    x = np.atleast_1d(np.asarray(x, dtype=float))
    convex = model.convexity == "strictly_convex"
    ys, vs = data.ys, data.vs
    if t == 0:
        return np.asarray(data.value(x, upper=not convex), dtype=float).reshape(x.shape)
    if t < 0 or not math.isfinite(t):
        raise ValueError("time must be finite and non-negative")
    X = x[:, None]
    # breakpoint candidates (both values at a jump; inf/sup picks the right one)
    if convex:
        cand_pts = vs[None, :] + t * model.psi((X - ys[None, :]) / t)
    else:
        cand_pts = vs[None, :] - t * model.psi((ys[None, :] - X) / t)
    best = cand_pts.min(axis=1) if convex else cand_pts.max(axis=1)
    dy = np.diff(ys)
    seg = np.flatnonzero(dy > 0)
    if seg.size:
        y0, y1 = ys[seg], ys[seg + 1]
        slope = (vs[seg + 1] - vs[seg]) / (y1 - y0)
        if np.any(slope > model.alpha_max):
            raise NonfiniteSearch("data slope exceeds the tabulated density range")
        dphi = model.flux_prime_at(slope)
        ystar = np.clip(X - t * dphi[None, :], y0[None, :], y1[None, :])
        v = vs[seg][None, :] + slope[None, :] * (ystar - y0[None, :])
        if convex:
            vals = v + t * model.psi((X - ystar) / t)
            best = np.minimum(best, vals.min(axis=1))
        else:
            vals = v - t * model.psi((ystar - X) / t)
            best = np.maximum(best, vals.max(axis=1))
    if convex:
        best = np.minimum(best, vs[-1])
    else:
        best = np.maximum(best, vs[0])
    return np.clip(best, vs[0], vs[-1])


def hopf_lax_eval(profile: MacroProfile, t: float, x):
    """U(t, x) by the Hopf-Lax formula (inf for convex flux, sup for concave)."""
    out = _hopf_lax(profile.model, profile.data, float(t), x)
    return out if np.ndim(x) else float(out[0])


def dirac_profile(model: FluxModel, alpha: float, p: float, t: float, x):
    """Profile from a Dirac mass alpha at 0 after macroscopic time t at bias p.

    The Hamilton-Jacobi clock runs at (2p - 1) t.
    """
    model.require_strict()
    tau = (2 * p - 1) * t
    xa = np.asarray(x, dtype=float)
    if tau <= 0:
        out = np.where(xa > 0, alpha, 0.0)
    elif model.convexity == "strictly_concave":
        with np.errstate(invalid="ignore"):
            out = np.where(
                xa >= model.g1 * tau, alpha, np.maximum(0.0, alpha - tau * model.psi(-xa / tau))
            )
        out = np.where(xa < 0, 0.0, out)
    else:
        out = np.where(xa <= model.g1 * tau, 0.0, np.minimum(alpha, tau * model.psi(xa / tau)))
    out = np.asarray(out, dtype=float)
    return out if out.ndim else float(out)


def segment_profile(model: FluxModel, alpha: float, p: float, t: float, x):
    """Limit cumulative profile on the unit segment: mass piles up at x = 1."""
    xa = np.asarray(x, dtype=float)
    out = np.where(xa >= 1.0, alpha, dirac_profile(model, alpha, p, t, np.minimum(xa, 1.0)))
    return out if out.ndim else float(out)


def _mass_left_of_one(model, alpha, tau):
    return dirac_profile(model, alpha, 1.0, tau, 1.0)


def equilibrium_time(model: FluxModel, alpha: float, p: float, tol: float = 1e-13) -> float:
    """First time at which no mass is left strictly inside the unit segment.

    The profile is non-decreasing in x, so the supremum over x < 1 is the left
    limit at 1; the predicate is bisected on the Hamilton-Jacobi clock.
    """
    model.require_strict()
    if alpha <= 0:
        raise ValueError("density must be positive")
    if not 0.5 < p <= 1:
        raise ValueError("p must lie in (1/2, 1]")
    lo, hi = 0.0, 1.0 / model.g1
    for _ in range(200):
        if _mass_left_of_one(model, alpha, hi) <= 0.0:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise NoConvergence("could not bracket the equilibrium time")
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if _mass_left_of_one(model, alpha, mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return hi / (2 * p - 1)


@dataclass(frozen=True)
class Fronts:
    left: float
    stack: float
    left_prime: float
    stack_prime: float


def _unit_left_front(model: FluxModel, s: float) -> tuple[float, float]:
    """Front of the left-most particle for unit mass, and its derivative."""
    if s <= 0 or s * model.fugacity_radius <= 1.0:
        return 0.0, 0.0
    x = model.psi_inverse(1.0 / s)
    a = float(model.psi_prime(x))
    if a <= 0:
        return 0.0, model.g1
    return -s * x, float(model.flux_at(min(a, model.alpha_max))) / a


def _unit_stack(model: FluxModel, s: float) -> tuple[float, float]:
    if s * model.g1 <= 1.0:
        return 0.0, 0.0
    return s * float(model.psi(-1.0 / s)), float(model.flux_at(min(float(model.psi_prime(-1.0 / s)), model.alpha_max)))


def front_functions(model: FluxModel, alpha: float, p: float, t: float) -> Fronts:
    """Left-most particle position and terminal stack (both per unit length).

    Both fronts stop at their terminal values (1 and alpha) once equilibrium is
    reached; derivatives are the right derivatives in t.
    """
    model.require_concave()
    c = 2 * p - 1
    lv, ld = _unit_left_front(model, c * t / alpha)
    left, left_prime = alpha * lv, c * ld
    if left >= 1.0:
        left, left_prime = 1.0, 0.0
    sv, sd = _unit_stack(model, c * t)
    stack, stack_prime = sv, c * sd
    if stack >= alpha:
        stack, stack_prime = alpha, 0.0
    return Fronts(float(left), float(stack), float(left_prime), float(stack_prime))


def influence_check(model: FluxModel, data_a: InitialData, data_b: InitialData, agree_up_to: float, t: float, x: float) -> bool:
    """Whether two solutions agree at x, for data that coincide on (-inf, C]."""
    ua = _hopf_lax(model, data_a, t, x)[0]
    ub = _hopf_lax(model, data_b, t, x)[0]
    return bool(abs(ua - ub) <= 1e-8)
