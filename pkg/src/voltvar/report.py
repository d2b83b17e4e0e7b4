"""CSV and figure output for sweeps and single runs.

Figures are written with matplotlib's SVG backend using a fixed hash salt and
no date stamp, so identical inputs produce identical bytes.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .control import Scheme  # noqa: E402
from .metrics import FrontierPoint  # noqa: E402

CASES_HEADER = ["scheme", "k", "scale", "seed", "case", "max_dev_above_pu",
                "max_dev_below_pu", "loss_w", "loss_rel", "iterations"]
FRONTIER_HEADER = ["scheme", "k", "scale", "swing_pu", "avg_rel_loss", "n_realizations"]
FAILURES_HEADER = ["scheme", "k", "scale", "seed", "case", "error"]

STYLE = {
    "font.family": "DejaVu Sans",
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.2,
    "lines.markersize": 4,
    "figure.figsize": (5.0, 3.6),
    "svg.hashsalt": "voltvar",
    "svg.fonttype": "path",
}

# colour/marker per scheme, loosely following the usual black/green/blue/red
SCHEME_STYLE = {
    Scheme.NO_CONTROL.value: dict(color="black", marker="s", linestyle=":"),
    Scheme.SIGMOID_V.value: dict(color="tab:green", marker="^", linestyle="--"),
    Scheme.LOCAL_FLOW_K.value: dict(color="tab:blue", marker="o", linestyle="-"),
    Scheme.HYBRID_KV.value: dict(color="tab:red", marker="D", linestyle="--"),
}


def fmt(x) -> str:
    """Decimal text with 12 significant digits; blank for missing values."""
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return f"{float(x):.12g}"


def label(scheme: str, scale: float) -> str:
    text = Scheme.parse(scheme).label
    if scale != 1.0 and scheme != Scheme.NO_CONTROL.value:
        inv = 1.0 / scale
        text += f"/{inv:g}" if inv.is_integer() else f" x{scale:g}"
    return text


def _sorted_frontier(points: Iterable[FrontierPoint]) -> list[FrontierPoint]:
    return sorted(points, key=lambda p: (p.scheme, -1.0 if p.k is None else p.k, p.limit_scale))


def emit_csv(result, out_dir: str | Path) -> list[Path]:
    """Write ``cases.csv`` and ``frontier.csv`` (plus ``failures.csv`` if any solve failed)."""
    if not result.rows:
        raise ValueError("sweep result is empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    path = out_dir / "cases.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CASES_HEADER)
        for row in sorted(result.rows, key=lambda r: r.sort_key):
            m = row.metrics
            w.writerow([row.scheme.value, fmt(row.k), fmt(row.scale), str(row.seed), row.case.short,
                        fmt(m and m.max_dev_above), fmt(m and m.max_dev_below),
                        fmt(m and m.loss_w), fmt(m and m.loss_rel), fmt(row.iterations)])
    written.append(path)

    path = out_dir / "frontier.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FRONTIER_HEADER)
        for p in _sorted_frontier(result.frontier):
            w.writerow([p.scheme, fmt(p.k), fmt(p.limit_scale), fmt(p.swing_pu),
                        fmt(p.avg_rel_loss), str(p.n_realizations)])
    written.append(path)

    failures = [r for r in result.rows if not r.ok]
    if failures:
        path = out_dir / "failures.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(FAILURES_HEADER)
            for row in failures:
                w.writerow([row.scheme.value, fmt(row.k), fmt(row.scale), str(row.seed),
                            row.case.short, row.error])
        written.append(path)
    return written


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def emit_frontier_svg(frontier: Sequence[FrontierPoint], path: str | Path) -> Path:
    """Swing versus average relative loss; one K-parameterized line per (scheme, scale)."""
    if not frontier:
        raise ValueError("no frontier points to plot")
    groups: dict[tuple[str, float], list[FrontierPoint]] = {}
    for p in _sorted_frontier(frontier):
        groups.setdefault((p.scheme, p.limit_scale), []).append(p)

    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for (scheme, scale), pts in sorted(groups.items(), key=lambda kv: (kv[0][0], -kv[0][1])):
            style = dict(SCHEME_STYLE.get(scheme, {}))
            if scale != 1.0:
                style["markerfacecolor"] = "white"
            style["gid"] = f"frontier-{scheme}-{scale:g}"
            x = [p.avg_rel_loss for p in pts]
            y = [p.swing_pu for p in pts]
            if len(pts) > 1:
                ax.plot(x, y, label=label(scheme, scale), **style)
            else:
                style.pop("linestyle", None)
                ax.plot(x, y, linestyle="none", label=label(scheme, scale), **style)
        ax.set_xlabel("average relative loss")
        ax.set_ylabel("maximum voltage swing [pu]")
        ax.legend(loc="best", frameon=False)
        fig.tight_layout()
        return _save(fig, Path(path))


def emit_k_curves_svg(rows, path: str | Path) -> Path:
    """Per-case deviation and relative loss against K, averaged over realizations.

    Schemes without K are drawn as horizontal reference lines.
    """
    agg: dict[tuple, dict[str, list]] = {}
    for row in rows:
        if not row.ok or row.scale != 1.0:
            continue
        key = (row.scheme.value, row.k, row.case.short)
        entry = agg.setdefault(key, {"dev": [], "loss": []})
        m = row.metrics
        entry["dev"].append(m.max_dev_below if row.case.short == "under" else m.max_dev_above)
        entry["loss"].append(m.loss_rel)

    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(2, 2, figsize=(7.0, 5.0), sharex=True)
        for col, case in enumerate(("under", "over")):
            for r, metric in enumerate(("dev", "loss")):
                ax = axes[r][col]
                for scheme in (s.value for s in Scheme):
                    pts = sorted((k, np.mean(v[metric])) for (s, k, c), v in agg.items()
                                 if s == scheme and c == case)
                    if not pts:
                        continue
                    style = SCHEME_STYLE[scheme]
                    if pts[0][0] is None:
                        ax.axhline(pts[0][1], color=style["color"], linestyle=style["linestyle"],
                                   label=Scheme(scheme).label)
                    else:
                        ax.plot([p[0] for p in pts], [p[1] for p in pts], label=Scheme(scheme).label,
                                **style)
                ax.set_title(f"{case}generated", fontsize=9)
                ax.set_ylabel("max deviation [pu]" if metric == "dev" else "relative loss")
                if r == 1:
                    ax.set_xlabel("K")
        axes[0][0].legend(frameon=False)
        fig.tight_layout()
        return _save(fig, Path(path))


def write_profile_csv(state, model, path: str | Path) -> Path:
    """Per-node voltage and inverter dispatch of a single AC solve."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(profile_header())
        for row in profile_rows(state, model):
            w.writerow(row)
    return path


def profile_header() -> list[str]:
    return ["node", "distance_km", "v_pu", "angle_rad", "q_g_var", "q_max_var"]


def profile_rows(state, model):
    for i in range(model.n_buses):
        yield [str(i), fmt(i * model.segment_length), fmt(state.v_mag[i]), fmt(state.v_ang[i]),
               fmt(state.q_g[i] * model.s_base), fmt(state.q_max[i] * model.s_base)]


def emit_profile_svg(state, model, path: str | Path, title: str = "") -> Path:
    dist = np.arange(model.n_buses) * model.segment_length
    with plt.rc_context(STYLE):
        fig, (ax_v, ax_q) = plt.subplots(2, 1, sharex=True, figsize=(5.0, 4.5))
        ax_v.plot(dist, state.v_mag, color="black")
        ax_v.set_ylabel("|V| [pu]")
        if title:
            ax_v.set_title(title, fontsize=9)
        ax_q.plot(dist, state.q_g * model.s_base / 1e3, color="tab:red", linestyle="none",
                  marker=".", markersize=2)
        ax_q.set_ylabel("q_g [kVAr]")
        ax_q.set_xlabel("distance from substation [km]")
        fig.tight_layout()
        return _save(fig, Path(path))
