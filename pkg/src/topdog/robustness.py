"""Stability analysis: direct size-profile baseline vs index-based ordering.

The direct estimator divides units sold per size by total units sold up to a
measurement day. Its reliability is probed by splitting the product set into
random halves and measuring how far the two half-sample profiles drift apart
(the discrepancy), and, more generally, by comparing results across seven
overlapping product subsets. The same subset machinery applied to the
scarcity index shows that the induced size ordering is far more stable.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass

import numpy as np
from scipy.stats import kendalltau

from . import tdi as tdi_mod
from .domain import SALE, SizeSet, TransactionSet

PARTITION_RNG = "numpy-pcg64"

#: Label subsets defining the seven overlapping test sets D1..D7. The pairs
#: (D1, D2), (D3, D4) and (D5, D6) are complementary; D7 is everything.
SUBSET_SCHEME: tuple[frozenset[int], ...] = (
    frozenset({1, 2}),
    frozenset({3, 4}),
    frozenset({1, 3}),
    frozenset({2, 4}),
    frozenset({3}),
    frozenset({1, 2, 4}),
    frozenset({1, 2, 3, 4}),
)

COMPLEMENTARY_PAIRS = ((0, 1), (2, 3), (4, 5))


@dataclass(frozen=True)
class ProductPartition:
    labels: dict[str, int]  # product -> label in {1, 2, 3, 4}
    seed: int
    rng_name: str = PARTITION_RNG


@dataclass(frozen=True)
class SizeProfile:
    branch: str
    day: int
    fractions: dict[str, float]
    has_data: bool


@dataclass(frozen=True)
class SharesRow:
    branch: str
    size: str
    shares: tuple[float, ...]  # one per subset, sums to 1
    mean: float  # mean of the raw index values
    median: float


def partition_products(ts: TransactionSet, seed: int) -> ProductPartition:
    """Assign each product an independent uniform label from {1, 2, 3, 4}."""
    products = sorted(ts.products)
    rng = np.random.default_rng(seed)
    labels = rng.integers(1, 5, size=len(products))
    return ProductPartition(dict(zip(products, (int(x) for x in labels))), seed)


def subset(ts: TransactionSet, partition: ProductPartition,
           labels: frozenset[int] | set[int]) -> TransactionSet:
    """Restrict to products whose label falls in ``labels``.

    Branch and size registries are preserved so that profiles over different
    subsets stay directly comparable.
    """
    keep = {p for p, lab in partition.labels.items() if lab in labels}
    txs = tuple(t for t in ts.transactions if t.product in keep)
    gone = tuple((key, flag) for key, flag in ts.gone if key[1] in keep)
    return TransactionSet(sizes=ts.sizes, horizon=ts.horizon, transactions=txs,
                          branches=ts.branches, products=ts.products,
                          gone=gone, grace_days=ts.grace_days)


def size_profile(ts: TransactionSet, branch: str, day: int) -> SizeProfile:
    """Fraction of units per size among all units sold in the branch by ``day``."""
    if day < 0:
        raise ValueError(f"measurement day must be >= 0, got {day}")
    counts = {s: 0 for s in ts.sizes.order}
    for t in ts.transactions:
        if t.kind == SALE and t.branch == branch and t.day <= day:
            counts[t.size] += t.qty
    total = sum(counts.values())
    if total == 0:
        return SizeProfile(branch, day, {s: 0.0 for s in ts.sizes.order}, False)
    return SizeProfile(branch, day, {s: c / total for s, c in counts.items()}, True)


def profile_ranking(profile: SizeProfile, sizes: SizeSet) -> list[str] | None:
    """Sizes by descending sold share; None when the profile has no data."""
    if not profile.has_data:
        return None
    return sorted(sizes.order, key=lambda s: (-profile.fractions[s], sizes.index(s)))


def _daily_sales(ts: TransactionSet) -> dict[str, np.ndarray]:
    """Units sold per (size, day) for every branch, shape (|S|, horizon + 1)."""
    idx = {s: i for i, s in enumerate(ts.sizes.order)}
    out = {b: np.zeros((len(ts.sizes), ts.horizon + 1), dtype=np.int64)
           for b in ts.branches}
    for t in ts.transactions:
        if t.kind == SALE:
            out[t.branch][idx[t.size], t.day] += t.qty
    return out


def discrepancy(ts: TransactionSet, partition: ProductPartition, branch: str,
                day: int) -> float | None:
    """L1 distance between the two half-sample profiles at ``day``.

    Ranges over [0, 2]; None when either half has no sales yet.
    """
    half_a = size_profile(subset(ts, partition, SUBSET_SCHEME[0]), branch, day)
    half_b = size_profile(subset(ts, partition, SUBSET_SCHEME[1]), branch, day)
    if not (half_a.has_data and half_b.has_data):
        return None
    return sum(abs(half_a.fractions[s] - half_b.fractions[s]) for s in ts.sizes.order)


def discrepancy_curve(ts: TransactionSet, partition: ProductPartition,
                      days: range = range(61)) -> list[tuple[int, float | None, int]]:
    """(day, average discrepancy over branches, branch coverage) per grid day.

    Branches where either half is still empty at a day are skipped there and
    the coverage column says how many branches did contribute.
    """
    cum_a = {b: arr.cumsum(axis=1) for b, arr in
             _daily_sales(subset(ts, partition, SUBSET_SCHEME[0])).items()}
    cum_b = {b: arr.cumsum(axis=1) for b, arr in
             _daily_sales(subset(ts, partition, SUBSET_SCHEME[1])).items()}
    rows = []
    for day in days:
        d = min(day, ts.horizon)
        deltas = []
        for b in ts.branches:
            col_a, col_b = cum_a[b][:, d], cum_b[b][:, d]
            tot_a, tot_b = col_a.sum(), col_b.sum()
            if tot_a == 0 or tot_b == 0:
                continue
            deltas.append(float(np.abs(col_a / tot_a - col_b / tot_b).sum()))
        avg = sum(deltas) / len(deltas) if deltas else None
        rows.append((day, avg, len(deltas)))
    return rows


def subset_profiles(ts: TransactionSet, partition: ProductPartition,
                    dampening=tdi_mod.DEFAULT_DAMPENING,
                    scheme: tuple[frozenset[int], ...] = SUBSET_SCHEME,
                    ) -> list[dict[str, tdi_mod.TdiProfile]]:
    """Per-subset branch profiles, one dict per scheme entry."""
    out = []
    for labels in scheme:
        sub = subset(ts, partition, labels)
        table = tdi_mod.stockout_days(sub)
        out.append({b: tdi_mod.branch_profile(table, b, ts.sizes, dampening)
                    for b in ts.branches})
    return out


def tdi_shares(ts: TransactionSet, partition: ProductPartition,
               dampening=tdi_mod.DEFAULT_DAMPENING,
               scheme: tuple[frozenset[int], ...] = SUBSET_SCHEME) -> list[SharesRow]:
    """Relative index per subset for every branch-size cell.

    share_i = TDI(D_i) / sum_j TDI(D_j); the dampening keeps every index
    positive, so the shares always exist and sum to one. The mean and median
    of the seven raw index values ride along as reference columns.
    """
    per_subset = subset_profiles(ts, partition, dampening, scheme)
    rows = []
    for b in ts.branches:
        for s in ts.sizes.order:
            values = [profiles[b].tdi[s] for profiles in per_subset]
            total = sum(values)
            shares = tuple(float(v / total) for v in values)
            rows.append(SharesRow(
                branch=b, size=s, shares=shares,
                mean=float(sum(values) / len(values)),
                median=float(statistics.median(values)),
            ))
    return rows


def ordinal_agreement(ranking_a: list[str], ranking_b: list[str]) -> float:
    """Kendall tau-b between two size rankings over the same size set."""
    if set(ranking_a) != set(ranking_b):
        raise ValueError("rankings must cover the same sizes")
    pos_b = {s: i for i, s in enumerate(ranking_b)}
    tau = kendalltau(range(len(ranking_a)), [pos_b[s] for s in ranking_a]).statistic
    return float(tau)


def subset_stability(ts: TransactionSet, partition: ProductPartition,
                     dampening=tdi_mod.DEFAULT_DAMPENING,
                     pairs=COMPLEMENTARY_PAIRS) -> list[float]:
    """Tau between index rankings from complementary subsets, per branch/pair."""
    per_subset = subset_profiles(ts, partition, dampening)
    taus = []
    for b in ts.branches:
        for i, j in pairs:
            rank_i = tdi_mod.rank_sizes(per_subset[i][b], ts.sizes)
            rank_j = tdi_mod.rank_sizes(per_subset[j][b], ts.sizes)
            taus.append(ordinal_agreement(rank_i, rank_j))
    return taus


def profile_stability(ts: TransactionSet, partition: ProductPartition, day: int,
                      pairs=COMPLEMENTARY_PAIRS) -> list[float]:
    """Tau between direct-profile rankings from complementary subsets.

    Cells where either half has no sales by ``day`` are skipped, mirroring
    the coverage rule of the discrepancy curve.
    """
    d = min(day, ts.horizon)
    order = ts.sizes.order
    cum = [{b: arr[:, :d + 1].sum(axis=1) for b, arr in
            _daily_sales(subset(ts, partition, labels)).items()}
           for labels in SUBSET_SCHEME]
    taus = []
    for b in ts.branches:
        for i, j in pairs:
            col_i, col_j = cum[i][b], cum[j][b]
            if col_i.sum() == 0 or col_j.sum() == 0:
                continue
            rank_i = sorted(order, key=lambda s: (-col_i[order.index(s)], order.index(s)))
            rank_j = sorted(order, key=lambda s: (-col_j[order.index(s)], order.index(s)))
            taus.append(ordinal_agreement(rank_i, rank_j))
    return taus
