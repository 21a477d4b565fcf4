"""Config-driven experiment runner: ``zrplab <experiment> --config cfg.json``."""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys

import numpy as np

from . import coupling, exclusion, flux, macro, mixing, plot
from .errors import ConfigInvalid, ZRPError
from .particles import LatticeGeometry, ProcessSpec, make_config, run_replicas
from .rates import RateFunction

log = logging.getLogger("zrplab")

EXPERIMENTS = ("flux", "macro", "simulate", "couple", "exclusion-check", "mix", "hydro", "fronts", "poisson")
OUT_ENV = "ZRPLAB_OUT_DIR"
FORMATS = {"csv", "json", "svg"}


# -------------------------------------------------------------- validation helpers
def _int(cfg, key, default=None, lo=None):
    v = cfg.get(key, default)
    if v is None:
        raise ConfigInvalid(key, "is required")
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigInvalid(key, "must be an integer")
    if lo is not None and v < lo:
        raise ConfigInvalid(key, f"must be >= {lo}")
    return v


def _float(cfg, key, default=None, lo=None, hi=None, lo_open=False):
    v = cfg.get(key, default)
    if v is None:
        raise ConfigInvalid(key, "is required")
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigInvalid(key, "must be a finite number")
    if lo is not None and (v < lo or (lo_open and v == lo)):
        raise ConfigInvalid(key, f"must be {'>' if lo_open else '>='} {lo}")
    if hi is not None and v > hi:
        raise ConfigInvalid(key, f"must be <= {hi}")
    return float(v)


def _floats(cfg, key, default=None, nonneg=True):
    v = cfg.get(key, default)
    if v is None:
        raise ConfigInvalid(key, "is required")
    if not isinstance(v, list) or not v:
        raise ConfigInvalid(key, "must be a non-empty list")
    if any(isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x) for x in v):
        raise ConfigInvalid(key, "entries must be finite numbers")
    if nonneg and any(x < 0 for x in v):
        raise ConfigInvalid(key, "entries must be non-negative")
    return [float(x) for x in v]


def _ints(cfg, key, default=None, lo=1):
    v = cfg.get(key, default)
    if isinstance(v, int) and not isinstance(v, bool):
        v = [v]
    if not isinstance(v, list) or not v:
        raise ConfigInvalid(key, "must be an integer or a non-empty list of integers")
    if any(isinstance(x, bool) or not isinstance(x, int) or x < lo for x in v):
        raise ConfigInvalid(key, f"entries must be integers >= {lo}")
    return v


def _p(cfg):
    p = _float(cfg, "p", 1.0)
    if not 0.5 < p <= 1.0:
        raise ConfigInvalid("p", "must lie in (1/2, 1]")
    return p


def _rate(cfg, key="rate"):
    return RateFunction.from_config(cfg.get(key, {"kind": "constant", "c": 1.0}))


def _particles(cfg, N):
    if "k" in cfg:
        return _int(cfg, "k", lo=1)
    if "alpha" in cfg:
        a = _float(cfg, "alpha", lo=0, lo_open=True)
        k = int(round(a * N))
        if k < 1:
            raise ConfigInvalid("alpha", "gives no particles at this N")
        return k
    raise ConfigInvalid("k", "give k or alpha")


def _segment_spec(cfg, N, g=None):
    return ProcessSpec(LatticeGeometry.segment(N), _particles(cfg, N), _p(cfg), g or _rate(cfg))


def _init(cfg, key, spec):
    v = cfg.get(key, "wedge")
    try:
        if isinstance(v, list):
            return make_config("custom", spec, v)
        if v in ("wedge", "vee"):
            return make_config(v, spec)
    except ZRPError as exc:
        raise ConfigInvalid(key, str(exc)) from exc
    raise ConfigInvalid(key, "must be 'wedge', 'vee' or an occupancy list")


def _time_unit(cfg, default):
    u = cfg.get("time_unit", default)
    if u not in ("macroscopic", "microscopic"):
        raise ConfigInvalid("time_unit", "must be 'macroscopic' or 'microscopic'")
    return u


# -------------------------------------------------------------- output
class Emitter:
    def __init__(self, out_dir, config, formats):
        self.out = out_dir
        self.config = config
        self.formats = formats
        self.files = []
        os.makedirs(out_dir, exist_ok=True)

    def _path(self, name):
        return os.path.join(self.out, name)

    def csv(self, name, header, rows):
        if "csv" not in self.formats and "svg" not in self.formats:
            return None
        path = self._path(name)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_cell(x) for x in r])
        self.files.append(name)
        return path

    def json(self, name, results):
        if "json" not in self.formats:
            return
        with open(self._path(name), "w") as fh:
            json.dump({"config": self.config, "results": _jsonable(results)}, fh, indent=2, sort_keys=True)
            fh.write("\n")
        self.files.append(name)

    def svg(self, csv_name, kind):
        if "svg" not in self.formats:
            return
        name = csv_name.rsplit(".", 1)[0] + ".svg"
        plot.plot(self._path(csv_name), kind, self._path(name))
        self.files.append(name)

    def finish(self):
        if "csv" not in self.formats:
            for f in [f for f in self.files if f.endswith(".csv")]:
                os.remove(self._path(f))
                self.files.remove(f)
        entries = []
        for f in self.files:
            with open(self._path(f), "rb") as fh:
                entries.append({"file": f, "sha256": hashlib.sha256(fh.read()).hexdigest()})
        with open(self._path("manifest.json"), "w") as fh:
            json.dump({"files": entries}, fh, indent=2)
            fh.write("\n")
        return entries


def _cell(x):
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return "nan" if math.isnan(x) else repr(x)
    if isinstance(x, np.integer):
        return int(x)
    return x


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


# -------------------------------------------------------------- experiments
def run_flux(cfg, em, ctx):
    g = _rate(cfg)
    model = flux.build_flux_model(g, _float(cfg, "alpha_max", 50.0, lo=0, lo_open=True),
                                  _float(cfg, "tol", flux.DEFAULT_TOL, lo=0, lo_open=True),
                                  _int(cfg, "n_grid", flux.DEFAULT_GRID, lo=16))
    step = _float(cfg, "csv_step", 1 / 64, lo=0, lo_open=True)
    grid = np.arange(0, math.floor(model.alpha_max / step + 1e-9) + 1) * step
    em.csv("flux_model.csv", ["alpha", "phi", "phi_prime"],
           zip(grid, model.flux_at(grid), model.flux_prime_at(grid)))
    res = {"convexity": model.convexity, "fugacity_radius": model.fugacity_radius,
           "phi_at_1": float(model.flux_at(1.0)) if model.alpha_max >= 1 else None}
    if "alpha" in cfg and model.convexity == "strictly_concave" and g.upper_bound is not None:
        c5 = flux.check_condition_5(model, g, _p(cfg), _float(cfg, "alpha", lo=0, lo_open=True))
        res["condition_5"] = {"holds": c5.holds, "lhs": c5.lhs, "rhs": c5.rhs,
                              "front_branch": c5.front_branch, "stack_branch": c5.stack_branch}
    em.json("flux.json", res)
    return res


def _initial_data(cfg):
    d = cfg.get("initial", {"kind": "dirac", "alpha": 1.0})
    try:
        kind = d["kind"]
        if kind == "dirac":
            return macro.InitialData.dirac(float(d["alpha"]), float(d.get("at", 0.0)))
        if kind == "cdf_table":
            return macro.InitialData.cdf_table(d["breakpoints"], d["values"])
        if kind == "measure_atoms":
            return macro.InitialData.measure_atoms(d["atoms"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigInvalid("initial", str(exc)) from exc
    raise ConfigInvalid("initial.kind", "must be dirac, cdf_table or measure_atoms")


def run_macro(cfg, em, ctx):
    g = _rate(cfg)
    p = _p(cfg)
    model = flux.build_flux_model(g, _float(cfg, "alpha_max", 50.0, lo=0, lo_open=True))
    data = _initial_data(cfg)
    times = _floats(cfg, "times")
    xs = _floats(cfg, "x", nonneg=False)
    segment = bool(cfg.get("segment", False))
    prof = macro.MacroProfile(model, data)
    rows = []
    for t in times:
        tau = (2 * p - 1) * t
        if segment:
            if data.kind != "dirac" or data.ys[0] != 0.0:
                raise ConfigInvalid("segment", "the segment profile needs a Dirac mass at 0")
            u = macro.segment_profile(model, data.total_mass, p, t, np.array(xs))
        else:
            u = macro.hopf_lax_eval(prof, tau, np.array(xs))
        rows += [(t, tau, x, v) for x, v in zip(xs, np.atleast_1d(u))]
    em.csv("profile.csv", ["t", "t_hj", "x", "U"], rows)
    res = {"convention": prof.convention}
    if data.kind == "dirac" and model.convexity in ("strictly_concave", "strictly_convex"):
        res["equilibrium_time"] = macro.equilibrium_time(model, data.total_mass, p)
        if model.convexity == "strictly_concave":
            res["fronts"] = [dict(t=t, **vars(macro.front_functions(model, data.total_mass, p, t))) for t in times]
    em.json("macro.json", res)
    em.svg("profile.csv", "profile")
    return res


def run_simulate(cfg, em, ctx):
    N = _int(cfg, "N", lo=1)
    spec = _segment_spec(cfg, N)
    unit = _time_unit(cfg, "macroscopic")
    times = sorted(set(_floats(cfg, "times")))
    scale = N if unit == "macroscopic" else 1.0
    micro = [t * scale for t in times]
    init = _init(cfg, "init", spec)
    reps = _int(cfg, "replicas", 1, lo=1)
    batch = run_replicas(spec, init, micro[-1], micro, reps, ctx["seed"], threads=ctx["threads"])
    rows = []
    for j, t in enumerate(times):
        for i, v in enumerate(batch.snapshots[0, j]):
            rows.append((t, micro[j], i + 1, int(v)))
    em.csv("trajectory.csv", ["t", "t_micro", "site", "occupancy"], rows)
    mean_h = batch.snapshots.cumsum(axis=2).mean(axis=0) / N
    res = {"events": batch.events, "absorbed_at": [None if math.isnan(a) else a for a in batch.absorbed_at],
           "mean_height_over_N": mean_h}
    em.json("simulate.json", res)
    return res


def run_couple(cfg, em, ctx):
    N = _int(cfg, "N", lo=1)
    spec_a = _segment_spec(cfg, N, _rate(cfg, "rate"))
    spec_b = ProcessSpec(spec_a.geometry, spec_a.k, spec_a.p, _rate(cfg, "rate_b") if "rate_b" in cfg else spec_a.g)
    unit = _time_unit(cfg, "macroscopic")
    times = sorted(set(_floats(cfg, "times")))
    scale = N if unit == "macroscopic" else 1.0
    micro = [t * scale for t in times]
    try:
        pair = coupling.CoupledPair(spec_a, spec_b, _init(cfg, "init_a", spec_a), _init(cfg, "init_b", spec_b))
    except ValueError as exc:
        raise ConfigInvalid("init_b", str(exc)) from exc
    reps = _int(cfg, "replicas", 1, lo=1)
    res_pair = coupling.run_pair(pair, micro[-1], micro, reps, ctx["seed"], threads=ctx["threads"])
    macro_of = dict(zip(micro, times))
    rows = [(macro_of[tm], tm, copy, site, occ) for tm, copy, site, occ in res_pair.rows(0)]
    em.csv("coupled.csv", ["t", "t_micro", "copy", "site", "occupancy"], rows)
    co = res_pair.coalescence
    res = {"coalesced_fraction": [float(np.mean(co <= m)) for m in micro], "order_violations": int(res_pair.violations.sum())}
    em.json("couple.json", res)
    return res


def run_exclusion(cfg, em, ctx):
    Ns = _ints(cfg, "N")
    ks = _ints(cfg, "k")
    ps = _floats(cfg, "p_list", [cfg.get("p", 1.0)])
    if any(not 0.5 <= p <= 1 for p in ps):
        raise ConfigInvalid("p_list", "entries must lie in [1/2, 1]")
    cap = _int(cfg, "cap", mixing.DEFAULT_CAP, lo=1)
    rows = []
    for N in Ns:
        for k in ks:
            for p in ps:
                r = exclusion.conjugation_residual(N, k, p, cap)
                size = math.comb(N + k - 1, k)
                rows.append((N, k, p, r, size))
                print(f"N={N} k={k} p={p} residual={r!r} states={size}")
    em.csv("conjugation.csv", ["N", "k", "p", "residual", "states"], rows)
    res = {"max_residual": max(r[3] for r in rows)}
    em.json("exclusion.json", res)
    return res


def run_mix(cfg, em, ctx):
    N = _int(cfg, "N", lo=1)
    spec = _segment_spec(cfg, N)
    unit = _time_unit(cfg, "microscopic")
    times = sorted(set(_floats(cfg, "times")))
    scale = N if unit == "macroscopic" else 1.0
    micro = np.array(times) * scale
    modes = cfg.get("modes", [cfg.get("mode", "exact")])
    if not isinstance(modes, list) or not modes:
        raise ConfigInvalid("modes", "must be a non-empty list")
    reps = _int(cfg, "replicas", 0, lo=0)
    thetas = _floats(cfg, "theta", [0.25])
    rows, res = [], {"modes": {}}
    for mode in modes:
        try:
            curve = mixing.tv_curve(spec, micro, mode, reps, ctx["seed"], eps=_float(cfg, "eps", 0.1, lo=0),
                                    cap=_int(cfg, "cap", mixing.DEFAULT_CAP, lo=1), threads=ctx["threads"])
        except ZRPError as exc:
            if type(exc).__name__ == "BadMode":
                raise ConfigInvalid("modes", str(exc)) from exc
            raise
        lo = curve.ci_low if curve.ci_low is not None else curve.values
        hi = curve.ci_high if curve.ci_high is not None else curve.values
        for j, t in enumerate(times):
            rows.append((t, curve.values[j], lo[j], hi[j], mode, micro[j], micro[j] / N))
        tm = {}
        for th in thetas:
            try:
                tm[str(th)] = mixing.mixing_time_from_curve(curve, th)
            except ZRPError:
                tm[str(th)] = None
        res["modes"][mode] = {"mixing_time_micro": tm, "info": curve.info}
    em.csv("tv_curve.csv", ["t", "value", "ci_low", "ci_high", "mode", "t_micro", "t_macro"], rows)
    em.json("mix.json", res)
    em.svg("tv_curve.csv", "curve")
    return res


def run_hydro(cfg, em, ctx):
    N = _int(cfg, "N", lo=1)
    spec = _segment_spec(cfg, N)
    times = _floats(cfg, "times")
    xs = _floats(cfg, "x", [i / 10 for i in range(1, 10)])
    reps = _int(cfg, "replicas", 20, lo=1)
    hs = mixing.hydro_profile_experiment(spec, sorted(set(times)), xs, reps, ctx["seed"], threads=ctx["threads"])
    em.csv("hydro.csv", ["t", "t_micro", "t_hj", "x", "empirical", "ci_low", "ci_high", "predicted"], hs.rows())
    res = {"max_error": dict(zip(map(str, hs.times), hs.max_error))}
    em.json("hydro.json", res)
    em.svg("hydro.csv", "profile")
    return res


def run_fronts(cfg, em, ctx):
    N = _int(cfg, "N", lo=1)
    spec = _segment_spec(cfg, N)
    times = sorted(set(_floats(cfg, "times")))
    reps = _int(cfg, "replicas", 20, lo=1)
    fs = mixing.front_trajectory_experiment(spec, times, reps, ctx["seed"], threads=ctx["threads"])
    em.csv("fronts.csv", ["t", "t_micro", "L_emp", "L_lo", "L_hi", "L_pred", "S_emp", "S_lo", "S_hi", "S_pred"],
           fs.rows())
    res = {"left_error": np.abs(fs.left_mean - fs.left_pred), "stack_error": np.abs(fs.stack_mean - fs.stack_pred)}
    em.json("fronts.json", res)
    em.svg("fronts.csv", "curve")
    return res


def run_poisson(cfg, em, ctx):
    alpha = _float(cfg, "alpha", 1.0, lo=0, lo_open=True)
    C = _float(cfg, "C", 1.0, lo=0, lo_open=True)
    Ns = _ints(cfg, "N", [20, 40, 80])
    reps = _int(cfg, "replicas", 10_000, lo=0)
    rows = []
    for i, N in enumerate(Ns):
        if alpha * N < 1:
            raise ConfigInvalid("N", "needs alpha N >= 1")
        rows.append(mixing.poisson_max_experiment(alpha, C, N, reps, ctx["seed"] + i).row())
    em.csv("poisson.csv", ["alpha", "C", "N", "replicas", "frequency", "exact", "bound"],
           [tuple("" if v is None else v for v in r) for r in rows])
    res = {"rows": rows}
    em.json("poisson.json", res)
    return res


RUNNERS = {
    "flux": run_flux, "macro": run_macro, "simulate": run_simulate, "couple": run_couple,
    "exclusion-check": run_exclusion, "mix": run_mix, "hydro": run_hydro, "fronts": run_fronts,
    "poisson": run_poisson,
}


def load_config(path):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigInvalid("config", str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise ConfigInvalid("config", f"not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigInvalid("config", "must be a JSON object")
    return cfg


def run(kind: str, cfg: dict, seed: int | None = None, out: str | None = None, threads: int = 1):
    """Run one experiment; returns (results, manifest entries)."""
    if kind not in RUNNERS:
        raise ConfigInvalid("experiment", f"unknown experiment {kind!r}")
    if cfg.get("experiment", kind) != kind:
        raise ConfigInvalid("experiment", f"config is for {cfg['experiment']!r}, not {kind!r}")
    cfg = dict(cfg)
    cfg["experiment"] = kind
    if seed is not None:
        cfg["seed"] = seed
    cfg["seed"] = _int(cfg, "seed", 0, lo=0)
    if cfg["seed"] >= 2**64:
        raise ConfigInvalid("seed", "must fit in 64 bits")
    formats = cfg.get("outputs", ["csv", "json"])
    if not isinstance(formats, list) or not set(formats) <= FORMATS:
        raise ConfigInvalid("outputs", f"must be a subset of {sorted(FORMATS)}")
    out_dir = out or os.environ.get(OUT_ENV) or cfg.get("out") or "zrplab_out"
    if "out" in cfg:
        cfg.pop("out")
    em = Emitter(out_dir, cfg, set(formats))
    res = RUNNERS[kind](cfg, em, {"seed": cfg["seed"], "threads": max(1, int(threads))})
    return res, em.finish()


def main(argv=None):
    ap = argparse.ArgumentParser(prog="zrplab", description="Asymmetric zero-range process experiments")
    sub = ap.add_subparsers(dest="cmd", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON experiment config")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default=None, help=f"output directory (else ${OUT_ENV}, else config 'out')")
        sp.add_argument("--threads", type=int, default=1)
    pp = sub.add_parser("plot")
    pp.add_argument("csv")
    pp.add_argument("--kind", choices=["curve", "profile"], required=True)
    pp.add_argument("--out", default=None, help="SVG path")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    try:
        if args.cmd == "plot":
            print(plot.plot(args.csv, args.kind, args.out))
            return 0
        _, files = run(args.cmd, load_config(args.config), args.seed, args.out, args.threads)
        for f in files:
            print(f"{f['sha256']}  {f['file']}")
        return 0
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ZRPError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
