"""Departure-rate functions g with g(0) = 0 < g(1), non-decreasing."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigInvalid


@dataclass(frozen=True)
class RateFunction:
    """Rate g(n) stored as a finite table plus a linear tail.

    For ``n <= len(values) - 1`` the rate is ``values[n]``; beyond the last
    stored index it grows with slope ``tail_slope`` (0 means constant).
    """

    values: tuple[float, ...]
    tail_slope: float = 0.0
    tag: str = "table"
    _logcum: list = field(default_factory=list, repr=False, compare=False, hash=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 2:
            raise ValueError("need at least g(0) and g(1)")
        if v[0] != 0.0:
            raise ValueError("g(0) must be 0")
        if not v[1] > 0.0:
            raise ValueError("g(1) must be positive")
        if np.any(np.diff(v) < 0):
            raise ValueError("g must be non-decreasing")
        if self.tail_slope < 0 or not math.isfinite(self.tail_slope):
            raise ValueError("tail slope must be finite and non-negative")

    # -- constructors -------------------------------------------------
    @classmethod
    def constant(cls, c: float = 1.0) -> RateFunction:
        return cls((0.0, float(c)), 0.0, "constant")

    @classmethod
    def linear(cls, c: float = 1.0) -> RateFunction:
        return cls((0.0, float(c)), float(c), "linear")

    @classmethod
    def piecewise(cls, knots, tail_slope: float = 0.0) -> RateFunction:
        """Linear interpolation through integer ``knots`` [(n, g(n)), ...] starting at (0, 0)."""
        knots = sorted((int(n), float(y)) for n, y in knots)
        if knots[0] != (0, 0.0):
            raise ValueError("first knot must be (0, 0)")
        ns = [n for n, _ in knots]
        if len(set(ns)) != len(ns):
            raise ValueError("duplicate knot abscissa")
        xs = np.arange(ns[-1] + 1)
        vals = np.interp(xs, ns, [y for _, y in knots])
        return cls(tuple(float(x) for x in vals), float(tail_slope), "piecewise-linear")

    @classmethod
    def table(cls, values, tail_slope: float = 0.0) -> RateFunction:
        return cls(tuple(float(x) for x in values), float(tail_slope), "table")

    @classmethod
    def from_config(cls, cfg: dict) -> RateFunction:
        if not isinstance(cfg, dict) or "kind" not in cfg:
            raise ConfigInvalid("rate", "expected an object with a 'kind' field")
        kind = cfg["kind"]
        try:
            if kind == "constant":
                return cls.constant(cfg.get("c", 1.0))
            if kind == "linear":
                return cls.linear(cfg.get("c", 1.0))
            if kind == "piecewise":
                return cls.piecewise(cfg["knots"], cfg.get("tail_slope", 0.0))
            if kind == "table":
                return cls.table(cfg["values"], cfg.get("tail_slope", 0.0))
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigInvalid("rate", str(exc)) from exc
        raise ConfigInvalid("rate.kind", f"unknown rate kind {kind!r}")

    def to_config(self) -> dict:
        if self.tag == "constant":
            return {"kind": "constant", "c": self.values[1]}
        if self.tag == "linear":
            return {"kind": "linear", "c": self.values[1]}
        return {"kind": "table", "values": list(self.values), "tail_slope": self.tail_slope}

    # -- evaluation -----------------------------------------------------
    @property
    def last(self) -> int:
        return len(self.values) - 1

    def __call__(self, n):
        n = np.asarray(n)
        v = np.asarray(self.values)
        m = self.last
        out = np.where(n <= m, v[np.minimum(n, m)], v[m] + self.tail_slope * (n - m))
        return out if out.ndim else float(out)

    def table_upto(self, n_max: int) -> np.ndarray:
        """Array (g(0), ..., g(n_max))."""
        return np.asarray(self(np.arange(n_max + 1)), dtype=float)

    @property
    def g1(self) -> float:
        return self.values[1]

    @property
    def lipschitz(self) -> float:
        return float(max(np.max(np.diff(self.values)), self.tail_slope))

    @property
    def upper_bound(self) -> float | None:
        """sup g when finite, else None."""
        return self.values[-1] if self.tail_slope == 0 else None

    @property
    def fugacity_radius(self) -> float:
        ub = self.upper_bound
        return math.inf if ub is None else ub

    def is_concave(self) -> bool:
        d = np.diff(self.table_upto(self.last + 2))
        return bool(np.all(np.diff(d) <= 1e-15))

    def is_convex(self) -> bool:
        d = np.diff(self.table_upto(self.last + 2))
        return bool(np.all(np.diff(d) >= -1e-15))

    def log_factorial(self, n_max: int) -> np.ndarray:
        """Cumulative sums log g(1) + ... + log g(n) for n = 0..n_max (0 at n = 0)."""
        cache = self._logcum
        if cache and len(cache[0]) > n_max:
            return cache[0][: n_max + 1]
        size = max(64, n_max + 1, 2 * len(cache[0]) if cache else 0)
        g = self.table_upto(size - 1)
        out = np.zeros(size)
        np.cumsum(np.log(g[1:]), out=out[1:])
        cache[:] = [out]
        return out[: n_max + 1]
