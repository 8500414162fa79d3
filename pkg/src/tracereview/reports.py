"""Delimited tables and figures for the evaluation report paths.

Every eval command writes machine-readable CSV first and renders matching
PNG figures next to it: coverage bars per system and per category, a
win-fraction heatmap, the paired avg-win-rate / avg-rank panels, and the
rating table with its bootstrap intervals. Percentages and ratings are
formatted to two decimals; undefined cells say "undefined" and are left out
of figures rather than drawn as zeros.
"""

from __future__ import annotations

import csv
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .eval_coverage import CoverageRow, format_fraction_pct
from .eval_ranking import (
    BootstrapResult,
    ChainPool,
    HeadToHeadRow,
    WinMatrix,
    average_ranks,
    avg_win_rate,
    win_fraction,
)

_BAR_COLORS = ("#4878a8", "#e49444", "#5fa052", "#b85c5c", "#8268a8", "#6d6d6d")


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[object]]) -> None:
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)


def _pct(value: float | None) -> str:
    return "undefined" if value is None else f"{100.0 * value:.2f}"


# --- coverage -------------------------------------------------------------------

def write_coverage_outputs(
    out_dir: str | Path,
    rows: Sequence[CoverageRow],
    categories: Mapping[str, Mapping[str, Fraction]],
) -> list[Path]:
    """coverage_table.csv, category_coverage.csv, and their two figures.

    `categories` maps system id to {category: coverage fraction}.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    table = out / "coverage_table.csv"
    _write_csv(
        table,
        ["System", "Overall (%)", "Major (%)", "Minor (%)", "Critical miss (%)"],
        [
            [
                row.system_id,
                format_fraction_pct(row.overall),
                format_fraction_pct(row.major),
                format_fraction_pct(row.minor),
                format_fraction_pct(row.critical_miss),
            ]
            for row in rows
        ],
    )
    written.append(table)

    cat_table = out / "category_coverage.csv"
    cat_rows = []
    for system_id in sorted(categories):
        for category, value in sorted(categories[system_id].items()):
            cat_rows.append([system_id, category, format_fraction_pct(value)])
    _write_csv(cat_table, ["System", "Category", "Coverage (%)"], cat_rows)
    written.append(cat_table)

    written.append(_coverage_summary_figure(out, rows))
    figure = _category_figure(out, categories)
    if figure is not None:
        written.append(figure)
    return written


def _coverage_summary_figure(out: Path, rows: Sequence[CoverageRow]) -> Path:
    fig, ax = plt.subplots(figsize=(max(6.0, 1.8 * len(rows)), 4.0))
    systems = [row.system_id for row in rows]
    groups = ("overall", "major", "minor")
    width = 0.8 / len(groups)
    x = np.arange(len(systems))
    for offset, name in enumerate(groups):
        values = [
            float(getattr(row, name)) * 100 if getattr(row, name) is not None else np.nan
            for row in rows
        ]
        ax.bar(x + offset * width, values, width, label=name, color=_BAR_COLORS[offset])
    ax.set_xticks(x + width)
    ax.set_xticklabels(systems, rotation=20, ha="right")
    ax.set_ylabel("coverage (%)")
    ax.set_ylim(0, 100)
    ax.set_title("Issue coverage by system")
    ax.legend()
    fig.tight_layout()
    path = out / "coverage_summary.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _category_figure(out: Path, categories: Mapping[str, Mapping[str, Fraction]]) -> Path | None:
    if not categories:
        return None
    systems = sorted(categories)
    all_cats = sorted({c for per in categories.values() for c in per})
    if not all_cats:
        return None
    fig, ax = plt.subplots(figsize=(max(7.0, 1.2 * len(all_cats)), 4.2))
    width = 0.8 / len(systems)
    x = np.arange(len(all_cats))
    for offset, system_id in enumerate(systems):
        values = [
            float(categories[system_id].get(cat)) * 100
            if categories[system_id].get(cat) is not None
            else np.nan
            for cat in all_cats
        ]
        ax.bar(
            x + offset * width,
            values,
            width,
            label=system_id,
            color=_BAR_COLORS[offset % len(_BAR_COLORS)],
        )
    ax.set_xticks(x + width * (len(systems) - 1) / 2)
    ax.set_xticklabels(all_cats, rotation=25, ha="right")
    ax.set_ylabel("coverage (%)")
    ax.set_ylim(0, 100)
    ax.set_title("Issue coverage by category")
    ax.legend()
    fig.tight_layout()
    path = out / "category_coverage.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


# --- ranking --------------------------------------------------------------------

def write_ranking_outputs(
    out_dir: str | Path,
    pool: ChainPool,
    matrix: WinMatrix,
    bootstrap: BootstrapResult | None,
    head_rows: Sequence[HeadToHeadRow] | None = None,
) -> list[Path]:
    """The full protocol-two/three report: four CSV tables plus three figures."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    roster = matrix.roster
    written: list[Path] = []

    fractions = {
        (x, y): win_fraction(matrix, x, y) for x in roster for y in roster
    }
    wf_table = out / "win_fractions.csv"
    _write_csv(
        wf_table,
        ["System"] + list(roster),
        [
            [x] + ["" if x == y else _pct(fractions[(x, y)]) for y in roster]
            for x in roster
        ],
    )
    written.append(wf_table)

    ranks = average_ranks(pool.chains, roster)
    rank_table = out / "rank_table.csv"
    _write_csv(
        rank_table,
        ["System", "Avg win rate (%)", "Avg rank"],
        [
            [
                name,
                _pct(avg_win_rate(matrix, name)),
                "undefined" if ranks[name] is None else f"{ranks[name]:.3f}",
            ]
            for name in roster
        ],
    )
    written.append(rank_table)

    if bootstrap is not None:
        elo_table = out / "elo_table.csv"
        _write_csv(
            elo_table,
            ["System", "Rating", "CI low (2.5%)", "CI high (97.5%)"],
            [
                [
                    name,
                    f"{bootstrap.point_elo[name]:.2f}",
                    f"{bootstrap.intervals[name][0]:.2f}",
                    f"{bootstrap.intervals[name][1]:.2f}",
                ]
                for name in roster
            ],
        )
        written.append(elo_table)

    if head_rows:
        h2h_table = out / "head_to_head.csv"
        _write_csv(
            h2h_table,
            ["Aspect", "Win (%)", "Tie (%)", "Lose (%)", "Wins", "Ties", "Losses"],
            [
                [
                    row.label,
                    f"{row.win_pct:.2f}",
                    f"{row.tie_pct:.2f}",
                    f"{row.lose_pct:.2f}",
                    row.wins,
                    row.ties,
                    row.losses,
                ]
                for row in head_rows
            ],
        )
        written.append(h2h_table)

    written.append(_win_fraction_figure(out, roster, fractions))
    written.append(_rank_panels_figure(out, roster, matrix, ranks))
    if bootstrap is not None:
        written.append(_rating_figure(out, roster, bootstrap))
    return written


def _win_fraction_figure(out: Path, roster, fractions) -> Path:
    n = len(roster)
    grid = np.full((n, n), np.nan)
    for i, x in enumerate(roster):
        for j, y in enumerate(roster):
            value = fractions[(x, y)]
            if x != y and value is not None:
                grid[i, j] = 100.0 * value
    fig, ax = plt.subplots(figsize=(1.1 * n + 3, 1.0 * n + 2.2))
    image = ax.imshow(grid, cmap="RdYlGn", vmin=0, vmax=100)
    ax.set_xticks(range(n))
    ax.set_yticks(range(n))
    ax.set_xticklabels(roster, rotation=30, ha="right")
    ax.set_yticklabels(roster)
    for i in range(n):
        for j in range(n):
            if not np.isnan(grid[i, j]):
                ax.text(j, i, f"{grid[i, j]:.1f}", ha="center", va="center", fontsize=8)
    ax.set_title("Pairwise non-tie win fraction (%), row beats column")
    fig.colorbar(image, ax=ax, shrink=0.8)
    fig.tight_layout()
    path = out / "win_fractions.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _rank_panels_figure(out: Path, roster, matrix: WinMatrix, ranks) -> Path:
    fig, (left, right) = plt.subplots(1, 2, figsize=(11, 0.5 * len(roster) + 2.5))
    y = np.arange(len(roster))
    win_rates = [avg_win_rate(matrix, name) for name in roster]
    left.barh(y, [100.0 * w if w is not None else 0.0 for w in win_rates], color=_BAR_COLORS[0])
    left.set_yticks(y)
    left.set_yticklabels(roster)
    left.invert_yaxis()
    left.set_xlabel("average win rate (%)")
    left.set_xlim(0, 100)
    rank_values = [ranks[name] if ranks[name] is not None else 0.0 for name in roster]
    right.barh(y, rank_values, color=_BAR_COLORS[1])
    right.set_yticks(y)
    right.set_yticklabels(roster)
    right.invert_yaxis()
    right.set_xlabel("average rank (lower is better)")
    fig.suptitle("Average win rate and average rank")
    fig.tight_layout()
    path = out / "avg_win_rank.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _rating_figure(out: Path, roster, bootstrap: BootstrapResult) -> Path:
    order = sorted(roster, key=lambda name: -bootstrap.point_elo[name])
    points = [bootstrap.point_elo[name] for name in order]
    lows = [bootstrap.point_elo[name] - bootstrap.intervals[name][0] for name in order]
    highs = [bootstrap.intervals[name][1] - bootstrap.point_elo[name] for name in order]
    fig, ax = plt.subplots(figsize=(max(6.0, 1.6 * len(order)), 4.0))
    x = np.arange(len(order))
    ax.errorbar(x, points, yerr=[lows, highs], fmt="o", capsize=5, color=_BAR_COLORS[0])
    ax.set_xticks(x)
    ax.set_xticklabels(order, rotation=20, ha="right")
    ax.set_ylabel("rating")
    ax.set_title(
        f"Ratings with bootstrap 95% intervals "
        f"({bootstrap.n_usable}/{bootstrap.n_resamples} usable resamples)"
    )
    fig.tight_layout()
    path = out / "rating_intervals.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
