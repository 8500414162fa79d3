"""Anonymous ranking evaluation: chains, win matrices, abilities, intervals.

Evaluation protocols two and three. A judge emits one ranking chain per
(paper, aspect): systems joined by ">" and "=" into a total preorder. From
the pooled chains come pairwise win fractions, tie-aware average ranks, a
latent-ability fit (minorization-maximization on the classic paired
comparison likelihood), a rating scale anchored at 1500 with 400-point decades,
paper-level bootstrap intervals, and per-aspect head-to-head tallies.

One parsed pool feeds every downstream statistic, so the three protocols can
never silently disagree about which chains were admitted.
"""

from __future__ import annotations

import itertools
import json
import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    BootstrapFailed,
    ChainParseError,
    DegenerateMLE,
    DisconnectedComparisons,
    DuplicateSystem,
    EmptyChain,
    InvalidAbility,
    MalformedToken,
    UnknownSystem,
)

ASPECTS = (
    "Technical Accuracy",
    "Constructive Value",
    "Analytical Depth",
    "Communication Clarity",
    "Overall Judgment",
)
MICRO_LABEL = "All Dimensions (micro)"

ELO_BASE = 1500.0
ELO_SCALE = 400.0


@dataclass(frozen=True)
class RankingChain:
    """One judged preorder: tiers of systems, best tier first."""

    paper_id: str
    aspect: str
    tiers: tuple[tuple[str, ...], ...]

    def systems(self) -> tuple[str, ...]:
        return tuple(s for tier in self.tiers for s in tier)


@dataclass(frozen=True)
class ChainPool:
    """Validated chains plus the bookkeeping for everything that was dropped."""

    chains: tuple[RankingChain, ...]
    roster: tuple[str, ...]
    dropped: int
    drop_reasons: tuple[str, ...] = ()


@dataclass(frozen=True)
class WinMatrix:
    """Strict-win counts over a fixed roster; ties contribute nothing."""

    roster: tuple[str, ...]
    counts: np.ndarray

    def index(self, system: str) -> int:
        return self.roster.index(system)

    def wins(self, x: str, y: str) -> int:
        return int(self.counts[self.index(x), self.index(y)])


def parse_chain(text: str, roster: Sequence[str]) -> tuple[tuple[str, ...], ...]:
    """Split on ">" into tiers and "=" within tiers, whitespace tolerant.

    Raises:
        EmptyChain: nothing but whitespace.
        MalformedToken: an empty segment (">>", "==", leading or trailing
            operators).
        UnknownSystem: a name outside the roster.
        DuplicateSystem: a name repeated anywhere in the chain.
    """
    if not text.strip():
        raise EmptyChain("chain text is empty")
    roster_set = set(roster)
    seen: set[str] = set()
    tiers: list[tuple[str, ...]] = []
    for tier_text in text.split(">"):
        members: list[str] = []
        for token in tier_text.split("="):
            name = token.strip()
            if not name:
                raise MalformedToken(f"empty segment in chain {text!r}")
            if name not in roster_set:
                raise UnknownSystem(f"{name!r} not in roster")
            if name in seen:
                raise DuplicateSystem(f"{name!r} appears twice")
            seen.add(name)
            members.append(name)
        tiers.append(tuple(members))
    return tuple(tiers)


def tier_ranks(tiers: Sequence[Sequence[str]]) -> dict[str, float]:
    """Tie-aware ranks: a tier filling positions r..r+k-1 gets (2r+k-1)/2.

    Over n systems the ranks always sum to n(n+1)/2, ties or not.
    """
    ranks: dict[str, float] = {}
    position = 1
    for tier in tiers:
        k = len(tier)
        rank = (2 * position + k - 1) / 2
        for system in tier:
            ranks[system] = rank
        position += k
    return ranks


def chain_ranks(chain: RankingChain) -> dict[str, float]:
    return tier_ranks(chain.tiers)


def load_chain_pool(
    path: str | Path,
    roster: Sequence[str] | None = None,
    aspects: Sequence[str] = ASPECTS,
) -> ChainPool:
    """Parse a chain file into the single pool all three protocols share.

    Records are JSON lines with paper_id, aspect, and chain. Any record-level
    problem (bad JSON, missing field, unknown aspect, chain parse error,
    duplicate (paper, aspect)) drops that record and counts it; the remainder
    is processed. Without an explicit roster, the roster is the sorted union
    of names seen in the chain texts.
    """
    raw_records: list[tuple[int, object]] = []
    for index, raw in enumerate(l for l in Path(path).read_text(encoding="utf-8").splitlines() if l.strip()):
        try:
            raw_records.append((index, json.loads(raw)))
        except json.JSONDecodeError:
            raw_records.append((index, None))

    if roster is None:
        names: set[str] = set()
        for _, obj in raw_records:
            if isinstance(obj, dict) and isinstance(obj.get("chain"), str):
                for tier_text in obj["chain"].split(">"):
                    for token in tier_text.split("="):
                        if token.strip():
                            names.add(token.strip())
        roster = sorted(names)

    chains: list[RankingChain] = []
    reasons: list[str] = []
    seen_keys: set[tuple[str, str]] = set()
    for index, obj in raw_records:
        if not isinstance(obj, dict):
            reasons.append(f"record {index}: invalid JSON")
            continue
        if any(f not in obj for f in ("paper_id", "aspect", "chain")):
            reasons.append(f"record {index}: missing fields")
            continue
        if obj["aspect"] not in aspects:
            reasons.append(f"record {index}: unknown aspect {obj['aspect']!r}")
            continue
        key = (obj["paper_id"], obj["aspect"])
        if key in seen_keys:
            reasons.append(f"record {index}: duplicate (paper, aspect) {key}")
            continue
        try:
            tiers = parse_chain(obj["chain"], roster)
        except ChainParseError as exc:
            reasons.append(f"record {index}: {type(exc).__name__}: {exc}")
            continue
        seen_keys.add(key)
        chains.append(RankingChain(obj["paper_id"], obj["aspect"], tiers))
    return ChainPool(
        chains=tuple(chains),
        roster=tuple(roster),
        dropped=len(reasons),
        drop_reasons=tuple(reasons),
    )


def accumulate_wins(chains: Sequence[RankingChain], roster: Sequence[str]) -> WinMatrix:
    """Count strict wins over papers and aspects; equal tiers add nothing."""
    roster = tuple(roster)
    index = {name: i for i, name in enumerate(roster)}
    counts = np.zeros((len(roster), len(roster)), dtype=np.int64)
    for chain in chains:
        for upper_pos, upper in enumerate(chain.tiers):
            for lower in chain.tiers[upper_pos + 1 :]:
                for x in upper:
                    for y in lower:
                        counts[index[x], index[y]] += 1
    return WinMatrix(roster=roster, counts=counts)


def win_fraction(matrix: WinMatrix, x: str, y: str) -> float | None:
    """Strict-win share W[x,y] / (W[x,y] + W[y,x]); None when never decided."""
    if x == y:
        return None
    wxy = matrix.wins(x, y)
    wyx = matrix.wins(y, x)
    if wxy + wyx == 0:
        return None
    return wxy / (wxy + wyx)


def avg_win_rate(matrix: WinMatrix, x: str) -> float | None:
    """Mean win fraction against opponents with at least one decided meeting."""
    fractions = [
        f
        for y in matrix.roster
        if y != x
        if (f := win_fraction(matrix, x, y)) is not None
    ]
    if not fractions:
        return None
    return sum(fractions) / len(fractions)


def average_ranks(
    chains: Sequence[RankingChain], roster: Sequence[str]
) -> dict[str, float | None]:
    """Mean tie-aware rank per system over the chains it appears in."""
    totals: dict[str, float] = {name: 0.0 for name in roster}
    counts: dict[str, int] = {name: 0 for name in roster}
    for chain in chains:
        for system, rank in chain_ranks(chain).items():
            totals[system] += rank
            counts[system] += 1
    return {
        name: (totals[name] / counts[name] if counts[name] else None) for name in roster
    }


# --- ability fitting -----------------------------------------------------------

def _geometric_mean(values: np.ndarray) -> float:
    return float(np.exp(np.mean(np.log(values))))


def _components(adjacency: np.ndarray) -> bool:
    """True when BFS from node 0 reaches every node."""
    n = adjacency.shape[0]
    seen = {0}
    frontier = deque([0])
    while frontier:
        node = frontier.popleft()
        for other in np.nonzero(adjacency[node])[0]:
            if int(other) not in seen:
                seen.add(int(other))
                frontier.append(int(other))
    return len(seen) == n


def check_comparison_structure(counts: np.ndarray) -> None:
    """Raise the structural errors that make the MLE meaningless or infinite.

    Disconnected first: the undirected comparison graph (any decided meeting)
    must connect all systems, and every system needs at least one comparison.
    Then degeneracy: the strict-win digraph must be strongly connected, the
    exact condition for a finite unique maximizer. A system with all wins or
    all losses is one way to fail it.
    """
    n = counts.shape[0]
    totals = counts + counts.T
    if n == 0:
        raise DisconnectedComparisons("empty matrix")
    if np.any(totals.sum(axis=1) == 0):
        isolated = [int(i) for i in np.nonzero(totals.sum(axis=1) == 0)[0]]
        raise DisconnectedComparisons(f"systems with no comparisons at indices {isolated}")
    if not _components(totals > 0):
        raise DisconnectedComparisons("comparison graph is not connected")
    if not (_components(counts > 0) and _components(counts.T > 0)):
        raise DegenerateMLE("strict-win digraph is not strongly connected")


def log_likelihood(counts: np.ndarray, theta: np.ndarray) -> float:
    """Paired-comparison log likelihood of strict wins under abilities theta."""
    total = 0.0
    n = counts.shape[0]
    for x in range(n):
        for y in range(n):
            if x != y and counts[x, y] > 0:
                total += counts[x, y] * math.log(theta[x] / (theta[x] + theta[y]))
    return total


def mm_step(counts: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """One minorization-maximization update, renormalized to geometric mean 1.

    theta_x <- (total wins of x) / sum_y N_xy / (theta_x + theta_y), with N
    the decided-meeting counts. The likelihood never decreases across a step.
    """
    totals = counts + counts.T
    pair_sums = theta[:, None] + theta[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        contributions = np.where(totals > 0, totals / pair_sums, 0.0)
    np.fill_diagonal(contributions, 0.0)
    updated = counts.sum(axis=1) / contributions.sum(axis=1)
    return updated / _geometric_mean(updated)


def fit_bradley_terry(
    counts: np.ndarray | WinMatrix,
    tol: float = 1e-10,
    max_iter: int = 10_000,
    epsilon: float = 0.0,
) -> np.ndarray:
    """Fit latent abilities by MM iteration; geometric mean pinned to 1.

    Convergence is max relative change below `tol`, capped at `max_iter`
    sweeps. With `epsilon` > 0 every ordered pair is padded with that many
    pseudo-wins, which regularizes away degeneracy (and skips the structural
    checks); the default leaves the data untouched.

    Raises:
        DisconnectedComparisons, DegenerateMLE: see check_comparison_structure.
    """
    matrix = counts.counts if isinstance(counts, WinMatrix) else counts
    work = np.asarray(matrix, dtype=float)
    if epsilon > 0:
        work = work + epsilon * (1.0 - np.eye(work.shape[0]))
    else:
        check_comparison_structure(work)
    theta = np.ones(work.shape[0], dtype=float)
    for _ in range(max_iter):
        updated = mm_step(work, theta)
        delta = float(np.max(np.abs(updated - theta) / theta))
        theta = updated
        if delta < tol:
            break
    return theta


def to_elo(theta: np.ndarray) -> np.ndarray:
    """Map abilities to the 1500-anchored rating scale (400 points per decade).

    Raises:
        InvalidAbility: any nonpositive ability.
    """
    arr = np.asarray(theta, dtype=float)
    if np.any(arr <= 0) or np.any(~np.isfinite(arr)):
        raise InvalidAbility(f"abilities must be positive and finite, got {arr}")
    return ELO_BASE + ELO_SCALE * np.log10(arr)


# --- bootstrap -----------------------------------------------------------------

@dataclass(frozen=True)
class BootstrapResult:
    roster: tuple[str, ...]
    point_elo: dict[str, float]
    intervals: dict[str, tuple[float, float]]
    n_resamples: int
    n_usable: int
    n_skipped: int
    seed: int | None


def nearest_rank_percentile(sorted_values: Sequence[float], pct: float) -> float:
    """Nearest-rank percentile over pre-sorted values (no interpolation)."""
    n = len(sorted_values)
    if n == 0:
        raise ValueError("no values")
    rank = math.ceil(pct / 100.0 * n)
    rank = min(max(rank, 1), n)
    return sorted_values[rank - 1]


def bootstrap_elo(
    chains_by_paper: Mapping[str, Sequence[RankingChain]],
    roster: Sequence[str],
    n_resamples: int = 1000,
    seed: int = 0,
    exhaustive: bool = False,
    tol: float = 1e-10,
    max_iter: int = 10_000,
) -> BootstrapResult:
    """Paper-level bootstrap of the rating scale with nearest-rank intervals.

    Papers are resampled with replacement; each resample's chains are pooled,
    refit, and mapped to ratings. Resamples whose matrices are disconnected
    or degenerate are skipped and counted. Intervals are the [2.5, 97.5]
    nearest-rank percentiles per system.

    Reproducibility: resample i draws from a generator seeded by (seed, i),
    so results are independent of iteration order and identical across runs.
    With `exhaustive=True` all n^n index tuples are enumerated instead (only
    sensible for tiny paper counts; guarded), which makes the interval exact.

    Raises:
        BootstrapFailed: every resample was skipped.
        DisconnectedComparisons, DegenerateMLE: the full pool itself is
            unusable (the point estimate cannot be formed).
    """
    papers = sorted(chains_by_paper)
    if not papers:
        raise BootstrapFailed("no papers to resample")
    roster = tuple(roster)

    all_chains = [c for p in papers for c in chains_by_paper[p]]
    point_theta = fit_bradley_terry(
        accumulate_wins(all_chains, roster), tol=tol, max_iter=max_iter
    )
    point_elo = dict(zip(roster, (float(v) for v in to_elo(point_theta))))

    if exhaustive:
        total = len(papers) ** len(papers)
        if total > 100_000:
            raise ValueError(f"exhaustive enumeration of {total} resamples is not tractable")
        index_tuples = itertools.product(range(len(papers)), repeat=len(papers))
        n_planned = total
    else:
        def _sampled():
            for i in range(n_resamples):
                rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
                yield tuple(int(v) for v in rng.integers(0, len(papers), size=len(papers)))

        index_tuples = _sampled()
        n_planned = n_resamples

    per_system: dict[str, list[float]] = {name: [] for name in roster}
    skipped = 0
    usable = 0
    for indices in index_tuples:
        chains = [c for j in indices for c in chains_by_paper[papers[j]]]
        try:
            theta = fit_bradley_terry(
                accumulate_wins(chains, roster), tol=tol, max_iter=max_iter
            )
        except (DisconnectedComparisons, DegenerateMLE):
            skipped += 1
            continue
        usable += 1
        for name, value in zip(roster, to_elo(theta)):
            per_system[name].append(float(value))

    if usable == 0:
        raise BootstrapFailed(f"all {n_planned} resamples were degenerate")
    intervals = {}
    for name in roster:
        values = sorted(per_system[name])
        intervals[name] = (
            nearest_rank_percentile(values, 2.5),
            nearest_rank_percentile(values, 97.5),
        )
    return BootstrapResult(
        roster=roster,
        point_elo=point_elo,
        intervals=intervals,
        n_resamples=n_planned,
        n_usable=usable,
        n_skipped=skipped,
        seed=None if exhaustive else seed,
    )


def chains_by_paper(pool: ChainPool) -> dict[str, list[RankingChain]]:
    grouped: dict[str, list[RankingChain]] = {}
    for chain in pool.chains:
        grouped.setdefault(chain.paper_id, []).append(chain)
    return grouped


# --- head to head ----------------------------------------------------------------

@dataclass(frozen=True)
class HeadToHeadRow:
    """Win/tie/lose tally of subject vs opponent for one aspect (or micro)."""

    label: str
    wins: int
    ties: int
    losses: int
    win_pct: float
    tie_pct: float
    lose_pct: float


def _tally_row(label: str, wins: int, ties: int, losses: int) -> HeadToHeadRow:
    total = wins + ties + losses
    return HeadToHeadRow(
        label=label,
        wins=wins,
        ties=ties,
        losses=losses,
        win_pct=100.0 * wins / total,
        tie_pct=100.0 * ties / total,
        lose_pct=100.0 * losses / total,
    )


def head_to_head(
    chains: Sequence[RankingChain],
    subject: str,
    opponent: str,
    aspects: Sequence[str] = ASPECTS,
) -> list[HeadToHeadRow]:
    """Per-aspect rank comparison of two systems, plus a micro-average row.

    Any chain missing either system is skipped. The micro row aggregates raw
    counts across aspects before normalizing, so it is not the mean of the
    per-aspect percentages. Rows with zero counted instances are omitted;
    every emitted row's percentages sum to 100.
    """
    counts: dict[str, list[int]] = {aspect: [0, 0, 0] for aspect in aspects}
    for chain in chains:
        if chain.aspect not in counts:
            continue
        ranks = chain_ranks(chain)
        if subject not in ranks or opponent not in ranks:
            continue
        if ranks[subject] < ranks[opponent]:
            counts[chain.aspect][0] += 1
        elif ranks[subject] == ranks[opponent]:
            counts[chain.aspect][1] += 1
        else:
            counts[chain.aspect][2] += 1

    rows: list[HeadToHeadRow] = []
    micro = [0, 0, 0]
    for aspect in aspects:
        wins, ties, losses = counts[aspect]
        micro[0] += wins
        micro[1] += ties
        micro[2] += losses
    if sum(micro):
        rows.append(_tally_row(MICRO_LABEL, *micro))
    for aspect in aspects:
        wins, ties, losses = counts[aspect]
        if wins + ties + losses:
            rows.append(_tally_row(aspect, wins, ties, losses))
    return rows
