"""Consolidated study report: Markdown summary plus rendered figures.

Everything here works off the CSV artifacts the other subcommands emit; the
figures are the plot-ready files turned into actual plots, written next to
the delimited summary so a report directory is self-contained.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

#: Fixed savefig metadata so identical runs produce identical PNG bytes.
_PNG_META = {"metadata": {"Software": "topdog"}}

METRIC_LABELS = {
    "gross_yield_ignore": "gross yield (ignore)",
    "gross_yield_estimate": "gross yield (estimate)",
    "last_price_ignore": "last price (ignore)",
    "last_price_estimate": "last price (estimate)",
}


def _read_csv(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def scenario_grid(rows: list[dict[str, str]]) -> tuple[list[str], list[list[str]]]:
    """Columns and body lines of the study-shaped scenario table."""
    headers, control, test, cert = [], [], [], []
    for row in rows:
        headers.append(f"{row['method'][0]}_{row['shift_pp']}")
        control.append(row["control_rank_sum"])
        test.append(row["test_rank_sum"])
        cert.append(row["certainty_pct"])
    body = [["control group", *control], ["test group", *test],
            ["certainty (%)", *cert]]
    return headers, body


def _markdown_table(headers: list[str], body: list[list[str]]) -> str:
    lines = ["| " + " | ".join(headers) + " |",
             "|" + "|".join("---" for _ in headers) + "|"]
    lines += ["| " + " | ".join(str(c) for c in row) + " |" for row in body]
    return "\n".join(lines)


def render_report(study_path: str | Path, out_md: str | Path,
                  groups_path: str | Path | None = None,
                  shares_path: str | Path | None = None,
                  discrepancy_path: str | Path | None = None,
                  tdi_path: str | Path | None = None,
                  figures_dir: str | Path | None = None) -> dict[str, Path]:
    """Write the Markdown report, the summary CSV, and all renderable figures.

    Returns every file written, keyed by a short artifact name.
    """
    out_md = Path(out_md)
    fig_dir = Path(figures_dir) if figures_dir else out_md.parent / "figures"
    fig_dir.mkdir(parents=True, exist_ok=True)
    outputs: dict[str, Path] = {"report": out_md}

    study_rows = _read_csv(study_path)
    headers, body = scenario_grid(study_rows)

    summary_csv = out_md.with_name(out_md.stem + "_summary.csv")
    with open(summary_csv, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["scenario", "control_rank_sum", "test_rank_sum", "certainty_pct"])
        for i, h in enumerate(headers):
            writer.writerow([h, body[0][i + 1], body[1][i + 1], body[2][i + 1]])
    outputs["summary"] = summary_csv

    sections = ["# Field-study report", ""]
    sections += ["## Rank sums and certainties per scenario", "",
                 "Scenario `m_c` shifts the test branches' gross yield "
                 "(method `m`) by `c` percentage points before ranking.", "",
                 _markdown_table(["scenario", *headers], body), ""]

    outputs["fig_certainty"] = _fig_certainty(study_rows, fig_dir)
    sections += [f"![certainty by scenario]({_rel(outputs['fig_certainty'], out_md)})", ""]

    if groups_path is not None:
        group_rows = _read_csv(groups_path)
        gheaders = ["group", "metric", "mean %", "min %", "stddev pp"]
        gbody = [[r["group"], METRIC_LABELS.get(r["metric"], r["metric"]),
                  r["mean_pct"], r["min_pct"], r["stddev_pp"]] for r in group_rows]
        sections += ["## Group statistics", "", _markdown_table(gheaders, gbody), ""]
        outputs["fig_groups"] = _fig_groups(group_rows, fig_dir)
        sections += [f"![group statistics]({_rel(outputs['fig_groups'], out_md)})", ""]

    if shares_path is not None:
        outputs["fig_shares"] = _fig_shares(_read_csv(shares_path), fig_dir)
        sections += ["## Subset stability of the scarcity index", "",
                     "Each stack shows one branch-size cell's index share per "
                     "product subset; near-equal bands mean the subset barely "
                     "matters.", "",
                     f"![index shares]({_rel(outputs['fig_shares'], out_md)})", ""]

    if discrepancy_path is not None:
        outputs["fig_discrepancy"] = _fig_discrepancy(_read_csv(discrepancy_path), fig_dir)
        sections += ["## Half-sample discrepancy of the direct size profile", "",
                     f"![discrepancy]({_rel(outputs['fig_discrepancy'], out_md)})", ""]

    if tdi_path is not None:
        outputs["fig_tdi"] = _fig_tdi(_read_csv(tdi_path), fig_dir)
        sections += ["## Scarcity index per branch and size", "",
                     f"![index heatmap]({_rel(outputs['fig_tdi'], out_md)})", ""]

    with open(out_md, "w", encoding="utf-8") as fh:
        fh.write("\n".join(sections).rstrip() + "\n")
    return outputs


def _rel(target: Path, anchor: Path) -> str:
    try:
        return str(target.relative_to(anchor.parent))
    except ValueError:
        return str(target)


def _fig_certainty(rows: list[dict[str, str]], fig_dir: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    for method, marker in (("ignore", "o"), ("estimate", "s")):
        pts = [(float(r["shift_pp"]), float(r["certainty_pct"]))
               for r in rows if r["method"] == method]
        if pts:
            pts.sort()
            ax.plot([p[0] for p in pts], [p[1] for p in pts],
                    marker=marker, label=method)
    ax.set_xlabel("shift applied to test branches (pp)")
    ax.set_ylabel("certainty of improvement (%)")
    ax.set_ylim(0, 100)
    ax.legend()
    ax.grid(True, alpha=0.3)
    path = fig_dir / "scenario_certainty.png"
    fig.savefig(path, dpi=120, **_PNG_META)
    plt.close(fig)
    return path


def _fig_groups(rows: list[dict[str, str]], fig_dir: Path) -> Path:
    metrics = sorted({r["metric"] for r in rows})
    groups = ["control", "test"]
    fig, ax = plt.subplots(figsize=(7, 4))
    width = 0.38
    for gi, group in enumerate(groups):
        means, errs = [], []
        for m in metrics:
            match = [r for r in rows if r["group"] == group and r["metric"] == m]
            means.append(float(match[0]["mean_pct"]) if match else 0.0)
            errs.append(float(match[0]["stddev_pp"]) if match else 0.0)
        xs = [i + (gi - 0.5) * width for i in range(len(metrics))]
        ax.bar(xs, means, width, yerr=errs, capsize=3, label=group)
    ax.set_xticks(range(len(metrics)))
    ax.set_xticklabels([METRIC_LABELS.get(m, m) for m in metrics],
                       rotation=20, ha="right")
    ax.set_ylabel("group mean (%)")
    lo = min(float(r["min_pct"]) for r in rows)
    ax.set_ylim(max(0.0, lo - 5), 100)
    ax.legend()
    fig.tight_layout()
    path = fig_dir / "group_metrics.png"
    fig.savefig(path, dpi=120, **_PNG_META)
    plt.close(fig)
    return path


def _fig_shares(rows: list[dict[str, str]], fig_dir: Path) -> Path:
    cells = [f"{r['branch']}/{r['size']}" for r in rows]
    fig, ax = plt.subplots(figsize=(max(6, 0.22 * len(cells)), 4))
    bottoms = [0.0] * len(rows)
    for i in range(1, 8):
        heights = [float(r[f"d{i}"]) for r in rows]
        ax.bar(range(len(rows)), heights, bottom=bottoms, width=0.9, label=f"D{i}")
        bottoms = [b + h for b, h in zip(bottoms, heights)]
    ax.set_xticks(range(len(cells)))
    ax.set_xticklabels(cells, rotation=90, fontsize=5)
    ax.set_ylabel("index share per subset")
    ax.set_ylim(0, 1)
    ax.legend(ncol=7, fontsize=7, loc="upper center")
    fig.tight_layout()
    path = fig_dir / "tdi_shares.png"
    fig.savefig(path, dpi=120, **_PNG_META)
    plt.close(fig)
    return path


def _fig_discrepancy(rows: list[dict[str, str]], fig_dir: Path) -> Path:
    days = [int(r["day"]) for r in rows]
    deltas = [float(r["avg_delta"]) if r["avg_delta"] else None for r in rows]
    coverage = [int(r["coverage"]) for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot([d for d, v in zip(days, deltas) if v is not None],
            [v for v in deltas if v is not None], color="tab:blue")
    ax.set_xlabel("measurement day")
    ax.set_ylabel("average profile discrepancy", color="tab:blue")
    ax.set_ylim(bottom=0)
    twin = ax.twinx()
    twin.plot(days, coverage, color="tab:gray", alpha=0.5, linestyle="--")
    twin.set_ylabel("branches covered", color="tab:gray")
    twin.set_ylim(bottom=0)
    fig.tight_layout()
    path = fig_dir / "discrepancy.png"
    fig.savefig(path, dpi=120, **_PNG_META)
    plt.close(fig)
    return path


def _fig_tdi(rows: list[dict[str, str]], fig_dir: Path) -> Path:
    branches = sorted({r["branch"] for r in rows})
    sizes = list(dict.fromkeys(r["size"] for r in rows))  # keep file order
    grid = [[0.0] * len(sizes) for _ in branches]
    for r in rows:
        grid[branches.index(r["branch"])][sizes.index(r["size"])] = float(r["tdi"])
    fig, ax = plt.subplots(figsize=(max(4, 0.5 * len(sizes) + 2),
                                    max(3, 0.25 * len(branches) + 1)))
    im = ax.imshow(grid, aspect="auto", cmap="RdYlGn_r")
    ax.set_xticks(range(len(sizes)))
    ax.set_xticklabels(sizes)
    ax.set_yticks(range(len(branches)))
    ax.set_yticklabels(branches, fontsize=6)
    fig.colorbar(im, ax=ax, label="scarcity index")
    fig.tight_layout()
    path = fig_dir / "tdi_heatmap.png"
    fig.savefig(path, dpi=120, **_PNG_META)
    plt.close(fig)
    return path
