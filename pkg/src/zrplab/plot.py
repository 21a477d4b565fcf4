"""Deterministic SVG line plots of the CSV artifacts."""
from __future__ import annotations

import csv
import io
from collections import OrderedDict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .errors import SchemaMismatch  # noqa: E402

_SKIP = ("ci_", "_lo", "_hi", "t_micro", "t_hj", "t_macro", "replicas", "seed", "N")


def _read(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaMismatch(f"{path} is empty")
    return rows[0], rows[1:]


def _num(v):
    try:
        return float(v)
    except ValueError:
        return None


def _series_curve(header, rows):
    if "t" not in header:
        raise SchemaMismatch("a curve needs a 't' column")
    ti = header.index("t")
    out = OrderedDict()
    if "mode" in header and "value" in header:
        mi, vi = header.index("mode"), header.index("value")
        for r in rows:
            out.setdefault(r[mi], []).append((float(r[ti]), float(r[vi])))
        return out
    cols = [i for i, h in enumerate(header)
            if i != ti and not any(s in h for s in _SKIP) and rows and _num(rows[0][i]) is not None]
    if not cols:
        raise SchemaMismatch("no numeric series next to 't'")
    for i in cols:
        out[header[i]] = [(float(r[ti]), float(r[i])) for r in rows if _num(r[i]) is not None]
    return out


def _series_profile(header, rows):
    if "t" not in header or "x" not in header:
        raise SchemaMismatch("a profile needs 't' and 'x' columns")
    ti, xi = header.index("t"), header.index("x")
    vals = [i for i, h in enumerate(header)
            if i not in (ti, xi) and not any(s in h for s in _SKIP) and rows and _num(rows[0][i]) is not None]
    if not vals:
        raise SchemaMismatch("no profile value column")
    out = OrderedDict()
    for r in rows:
        for i in vals:
            label = f"{header[i]} t={r[ti]}" if len(vals) > 1 else f"t={r[ti]}"
            out.setdefault(label, []).append((float(r[xi]), float(r[i])))
    return out


def render_svg(csv_path: str, kind: str) -> bytes:
    header, rows = _read(csv_path)
    if kind == "curve":
        series, xlabel = _series_curve(header, rows), "t"
    elif kind == "profile":
        series, xlabel = _series_profile(header, rows), "x"
    else:
        raise SchemaMismatch(f"unknown plot kind {kind!r}")
    with matplotlib.rc_context({"svg.hashsalt": "zrplab", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        for label, pts in series.items():
            pts.sort()
            (line,) = ax.plot([a for a, _ in pts], [b for _, b in pts], label=label)
            line.set_gid(f"series-{label}")
        ax.set_xlabel(xlabel)
        ax.set_ylabel("value" if kind == "curve" and "value" in header else ", ".join(series)[:60])
        if len(series) <= 12:
            ax.legend(fontsize=7)
        buf = io.BytesIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    return buf.getvalue()


def plot(csv_path: str, kind: str, out_path: str | None = None) -> str:
    out_path = out_path or csv_path.rsplit(".", 1)[0] + ".svg"
    data = render_svg(csv_path, kind)
    with open(out_path, "wb") as fh:
        fh.write(data)
    return out_path
