"""SVG figures from results CSVs.

Phase rows (checkpoint >= 0) become gray-scale recovery maps, one per
checkpoint; final rows (checkpoint -1) become success-rate curves against
``m / d_r`` with the mean outer-iteration count on a secondary axis.  Output
bytes depend only on the CSV contents.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .harness import ALGOS, FINAL, degrees_of_freedom, rate_table, read_csv  # noqa: E402

_STYLE = {
    "svg.hashsalt": "icra",
    "svg.fonttype": "path",
    "font.family": "DejaVu Sans",
    "font.size": 9,
}
_MARKERS = {"icra": "o", "nnm": "s", "lgd": "^"}


def _save(fig, path: Path) -> Path:
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return path


def _phase_map(rows, problem, n1, n2, checkpoint, path: Path) -> Path:
    table = {(r, m): s / t for (a, r, m, ck), (s, t) in rate_table(rows, "icra").items()
             if ck == checkpoint}
    ranks = sorted({r for r, _ in table})
    ms = sorted({m for _, m in table})
    grid = np.full((len(ranks), len(ms)), np.nan)
    for (r, m), v in table.items():
        grid[ranks.index(r), ms.index(m)] = v
    fig, ax = plt.subplots(figsize=(4.2, 3.6))
    masked = np.ma.masked_invalid(grid)
    cmap = plt.get_cmap("gray").copy()
    cmap.set_bad("#c03030")
    im = ax.imshow(masked, cmap=cmap, vmin=0.0, vmax=1.0, origin="lower", aspect="auto",
                   interpolation="nearest")
    ax.set_xticks(range(len(ms)))
    ax.set_xticklabels([f"{m / (n1 * n2):.2f}" for m in ms], rotation=60)
    ax.set_yticks(range(len(ranks)))
    ax.set_yticklabels([str(r) for r in ranks])
    ax.set_xlabel("m / (n1 n2)")
    ax.set_ylabel("rank r")
    ax.set_title(f"{problem.upper()} recovery rate, checkpoint {checkpoint}")
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    return _save(fig, path)


def _rate_curves(rows, problem, n1, n2, r, path: Path) -> Path:
    dr = degrees_of_freedom(n1, n2, r)
    fig, ax = plt.subplots(figsize=(4.6, 3.4))
    ax2 = ax.twinx()
    table = rate_table([x for x in rows if x["r"] == r and x["checkpoint"] == FINAL])
    for algo in ALGOS:
        pts = sorted((m, s / t) for (a, _, m, _), (s, t) in table.items() if a == algo)
        if not pts:
            continue
        x = [m / dr for m, _ in pts]
        ax.plot(x, [v for _, v in pts], marker=_MARKERS[algo], label=algo.upper())
        iters = []
        for m, _ in pts:
            its = [row["outer_iters"] for row in rows
                   if row["algo"] == algo and row["r"] == r and row["m"] == m
                   and row["checkpoint"] == FINAL]
            iters.append(float(np.mean(its)))
        ax2.plot(x, iters, linestyle="--", marker=_MARKERS[algo], alpha=0.5)
    ax.set_ylim(-0.05, 1.05)
    ax.set_xlabel("m / d_r")
    ax.set_ylabel("success rate")
    ax2.set_ylabel("mean outer iterations (dashed)")
    ax.set_title(f"{problem.upper()}, n1={n1}, n2={n2}, r={r}")
    if ax.lines:
        ax.legend(loc="lower right")
    fig.tight_layout()
    return _save(fig, path)


def emit_plots(csv_path, out_dir) -> list[Path]:
    """Render every figure the CSV supports into ``out_dir``; returns the paths written."""
    rows = read_csv(csv_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    with plt.rc_context(_STYLE):
        if not rows:
            fig, ax = plt.subplots(figsize=(4, 3))
            ax.set_title("no data")
            return [_save(fig, out / "empty.svg")]
        for problem in sorted({x["problem"] for x in rows}):
            sub = [x for x in rows if x["problem"] == problem]
            for n1, n2 in sorted({(x["n1"], x["n2"]) for x in sub}):
                cur = [x for x in sub if (x["n1"], x["n2"]) == (n1, n2)]
                for ck in sorted({x["checkpoint"] for x in cur if x["checkpoint"] >= 0}):
                    name = f"phase_{problem}_{n1}x{n2}_ck{ck}.svg"
                    written.append(_phase_map(cur, problem, n1, n2, ck, out / name))
                finals = [x for x in cur if x["checkpoint"] == FINAL]
                for r in sorted({x["r"] for x in finals}):
                    name = f"rate_{problem}_{n1}x{n2}_r{r}.svg"
                    written.append(_rate_curves(finals, problem, n1, n2, r, out / name))
    return written
