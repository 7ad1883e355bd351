"""Field-study analytics: yield metrics, rank sums, and exact certainties.

Gross yield is realized turnover over the theoretic revenue at full prices;
the last-price ratio tracks how deep the final markdowns went. Test-vs-
control comparisons use the rank-sum statistic with the largest value at
rank 1, and the certainty of an improvement is one minus the exact null
probability of seeing a rank sum at most as small as observed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from fractions import Fraction
from math import comb, sqrt
from pathlib import Path

import numpy as np

from .domain import DELIVERY, SALE, TransactionSet, product_last_sale

TEST = "test"
CONTROL = "control"

METRICS = ("gross_yield_ignore", "gross_yield_estimate",
           "last_price_ignore", "last_price_estimate")

MC_DRAWS = 10**6


@dataclass(frozen=True)
class BranchOutcome:
    branch: str
    group: str  # TEST or CONTROL
    gross_yield_ignore: Fraction
    gross_yield_estimate: Fraction
    last_price_ignore: Fraction
    last_price_estimate: Fraction

    def metric(self, name: str) -> Fraction:
        return getattr(self, name)


@dataclass(frozen=True)
class GroupStats:
    mean: float
    minimum: float
    stddev: float  # population


@dataclass(frozen=True)
class ScenarioRow:
    method: str  # "ignore" | "estimate"
    shift_pp: Fraction  # added to test-branch gross yields, in percentage points
    control_sum: Fraction
    test_sum: Fraction
    certainty: float  # in [0, 1]
    exact: bool  # False when ties forced the Monte Carlo fallback


@dataclass(frozen=True)
class StudyReport:
    outcomes: tuple[BranchOutcome, ...]
    group_stats: dict[str, dict[str, GroupStats]]  # group -> metric -> stats
    scenarios: tuple[ScenarioRow, ...]
    excluded: tuple[str, ...] = ()  # branches without theoretic revenue


def full_prices(ts: TransactionSet, branch: str) -> dict[str, int]:
    """Full price per product: the price of its first delivery in the branch.

    Several deliveries on the same first day resolve to the highest price,
    the pre-markdown level.
    """
    best: dict[str, tuple[int, int]] = {}
    for t in ts.transactions:
        if t.kind != DELIVERY or t.branch != branch:
            continue
        cur = best.get(t.product)
        if cur is None or t.day < cur[0] or (t.day == cur[0] and t.unit_price > cur[1]):
            best[t.product] = (t.day, t.unit_price)
    return {p: price for p, (_, price) in best.items()}


def gross_yield(ts: TransactionSet, branch: str) -> Fraction | None:
    """Realized revenue / (units sold x full price); None without any sales."""
    prices = full_prices(ts, branch)
    realized = theoretic = 0
    for t in ts.transactions:
        if t.kind != SALE or t.branch != branch:
            continue
        if t.product not in prices:
            raise LookupError(
                f"no delivery price for product {t.product!r} in branch {branch!r}")
        realized += t.qty * t.unit_price
        theoretic += t.qty * prices[t.product]
    if theoretic == 0:
        return None
    return Fraction(realized, theoretic)


def last_price_ratio(ts: TransactionSet, branch: str) -> Fraction | None:
    """Mean over sold products of last sale price / full price."""
    prices = full_prices(ts, branch)
    sold = sorted({t.product for t in ts.transactions
                   if t.kind == SALE and t.branch == branch})
    ratios = []
    for p in sold:
        if p not in prices or prices[p] == 0:
            continue
        _, last_price = product_last_sale(ts, branch, p)
        ratios.append(Fraction(last_price, prices[p]))
    if not ratios:
        return None
    return sum(ratios) / len(ratios)


def branch_outcomes(ts_ignore: TransactionSet, ts_estimate: TransactionSet,
                    groups: dict[str, str]) -> tuple[list[BranchOutcome], list[str]]:
    """Per-branch metrics under both repair strategies.

    Branches where any metric is undefined (no revenue under some repair)
    are excluded and reported separately.
    """
    outcomes, excluded = [], []
    for branch, group in sorted(groups.items()):
        values = (gross_yield(ts_ignore, branch), gross_yield(ts_estimate, branch),
                  last_price_ratio(ts_ignore, branch), last_price_ratio(ts_estimate, branch))
        if any(v is None for v in values):
            excluded.append(branch)
            continue
        outcomes.append(BranchOutcome(branch, group, *values))
    return outcomes, excluded


def group_stats(outcomes: list[BranchOutcome]) -> dict[str, dict[str, GroupStats]]:
    """Mean, minimum, and population standard deviation per group and metric."""
    out: dict[str, dict[str, GroupStats]] = {}
    for group in (CONTROL, TEST):
        values = [o for o in outcomes if o.group == group]
        if not values:
            continue
        per_metric = {}
        for m in METRICS:
            xs = [float(o.metric(m)) for o in values]
            mean = sum(xs) / len(xs)
            var = sum((x - mean) ** 2 for x in xs) / len(xs)
            per_metric[m] = GroupStats(mean=mean, minimum=min(xs), stddev=sqrt(var))
        out[group] = per_metric
    return out


# ---------------------------------------------------------------------------
# Rank sums and exact certainty


def _midranks(values: list[Fraction]) -> list[Fraction]:
    """Descending ranks (largest value gets rank 1), ties get the mid rank."""
    order = sorted(range(len(values)), key=lambda i: values[i], reverse=True)
    ranks: list[Fraction] = [Fraction(0)] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        mid = Fraction(i + 1 + j + 1, 2)
        for k in range(i, j + 1):
            ranks[order[k]] = mid
        i = j + 1
    return ranks


def rank_sum(test_values: list[Fraction],
             control_values: list[Fraction]) -> tuple[Fraction, Fraction]:
    """(test, control) rank sums; the two always total N(N+1)/2."""
    ranks = _midranks(list(test_values) + list(control_values))
    n_test = len(test_values)
    return sum(ranks[:n_test], Fraction(0)), sum(ranks[n_test:], Fraction(0))


def rank_sum_distribution(n_test: int, n_control: int) -> list[int]:
    """ways[s] = number of n_test-subsets of {1..N} with rank sum s.

    Dynamic program over (#chosen, sum); exact integer arithmetic, so the
    resulting null distribution is exact for any N small enough to bother.
    """
    n = n_test + n_control
    max_sum = n * (n + 1) // 2
    ways = [[0] * (max_sum + 1) for _ in range(n_test + 1)]
    ways[0][0] = 1
    for rank in range(1, n + 1):
        for k in range(min(rank, n_test), 0, -1):
            prev, cur = ways[k - 1], ways[k]
            for s in range(max_sum, rank - 1, -1):
                if prev[s - rank]:
                    cur[s] += prev[s - rank]
    return ways[n_test]


def certainty(w: Fraction | int, n_test: int, n_control: int) -> float:
    """1 - P(W' <= w) for the rank sum W' of a random n_test-subset of ranks.

    Exact via the subset-sum dynamic program; requires untied (integer)
    ranks. Small observed sums mean the test group collected the large
    values, so low w = high certainty of a real improvement.
    """
    n = n_test + n_control
    if n > 30:
        raise ValueError(f"exact enumeration capped at 30 branches, got {n}")
    w = Fraction(w)
    if w.denominator != 1:
        raise ValueError("tied ranks produce non-integer sums; use certainty_mc")
    w_int = int(w)
    lo = n_test * (n_test + 1) // 2
    hi = sum(range(n_control + 1, n + 1))
    if not lo <= w_int <= hi:
        raise ValueError(f"rank sum {w_int} outside [{lo}, {hi}] for {n_test}+{n_control}")
    ways = rank_sum_distribution(n_test, n_control)
    at_most = sum(ways[: w_int + 1])
    return float(1 - Fraction(at_most, comb(n, n_test)))


def certainty_mc(ranks: list[Fraction], w: Fraction, n_test: int,
                 seed: int = 0, draws: int = MC_DRAWS) -> float:
    """Monte Carlo certainty over random n_test-subsets of the given ranks.

    Fallback for tied (mid) ranks, where the exact program does not apply.
    """
    values = np.array([float(r) for r in ranks])
    w_f = float(w)
    rng = np.random.default_rng(seed)
    at_most = 0
    chunk = 100_000
    done = 0
    while done < draws:
        m = min(chunk, draws - done)
        keys = rng.random((m, len(values)))
        picks = np.argpartition(keys, n_test - 1, axis=1)[:, :n_test]
        sums = values[picks].sum(axis=1)
        at_most += int((sums <= w_f + 1e-12).sum())
        done += m
    return 1.0 - at_most / draws


def scenario_shift(outcomes: list[BranchOutcome], method: str,
                   shift_pp: Fraction | int | str, mc_seed: int = 0) -> ScenarioRow:
    """Rank sums and certainty after adding shift_pp points to test yields.

    A negative shift handicaps the test group on purpose: it models an
    implementation cost the measured improvement must still beat.
    """
    if method not in ("ignore", "estimate"):
        raise ValueError(f"method must be ignore or estimate, got {method!r}")
    shift = Fraction(str(shift_pp)) if isinstance(shift_pp, str) else Fraction(shift_pp)
    metric = f"gross_yield_{method}"
    test = [o.metric(metric) + shift / 100 for o in outcomes if o.group == TEST]
    control = [o.metric(metric) for o in outcomes if o.group == CONTROL]
    test_sum, control_sum = rank_sum(test, control)
    tied = len(set(test + control)) < len(test) + len(control)
    if tied:
        ranks = _midranks(test + control)
        cert = certainty_mc(ranks, test_sum, len(test), seed=mc_seed)
    else:
        cert = certainty(test_sum, len(test), len(control))
    return ScenarioRow(method, shift, control_sum, test_sum, cert, exact=not tied)


def run_study(ts_ignore: TransactionSet, ts_estimate: TransactionSet,
              groups: dict[str, str], shifts: list[Fraction | str],
              mc_seed: int = 0) -> StudyReport:
    """Full study: outcomes, group statistics, and the scenario grid."""
    outcomes, excluded = branch_outcomes(ts_ignore, ts_estimate, groups)
    scenarios = [scenario_shift(outcomes, method, shift, mc_seed)
                 for shift in shifts for method in ("ignore", "estimate")]
    return StudyReport(tuple(outcomes), group_stats(outcomes),
                       tuple(scenarios), tuple(excluded))


# ---------------------------------------------------------------------------
# Group-assignment and CSV formats


def read_groups(path: str | Path) -> dict[str, str]:
    groups: dict[str, str] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["branch", "group"]:
            raise ValueError("groups file must have header branch,group")
        for row in reader:
            group = row["group"].strip().lower()
            if group not in (TEST, CONTROL):
                raise ValueError(f"group must be test or control, got {row['group']!r}")
            groups[row["branch"]] = group
    return groups


def write_groups(path: str | Path, groups: dict[str, str]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["branch", "group"])
        for branch in sorted(groups):
            writer.writerow([branch, groups[branch]])


def assign_groups(branches: list[str], seed: int) -> dict[str, str]:
    """Random test/control split: a uniform draw per branch, the smaller
    half of the draws becomes the test group."""
    ordered = sorted(branches)
    rng = np.random.default_rng(seed)
    draws = rng.random(len(ordered))
    cut = len(ordered) // 2
    test_idx = set(np.argsort(draws, kind="stable")[:cut])
    return {b: TEST if i in test_idx else CONTROL for i, b in enumerate(ordered)}
