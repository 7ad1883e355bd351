"""Stockout days, top-/flop-dog counts, and the dampened scarcity index.

The index of a size in a branch is (TDC + C) / (FDC + C): TDC counts the
products for which the size sold out first, FDC those for which it sold out
last, and C > 0 dampens small-sample noise. Only the induced ordering of
sizes is meant to be interpreted, never the absolute values.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction

from .domain import DELIVERY, SizeSet, TransactionSet

DEFAULT_DAMPENING = 15

#: Sentinel stockout day for sizes whose delivered stock never sold out.
NEVER_SOLD_OUT = None


@dataclass(frozen=True)
class StockoutTable:
    """(branch, product, size) -> stockout day; None = never sold out."""

    days: dict[tuple[str, str, str], int | None]

    def branches(self) -> list[str]:
        return sorted({b for (b, _, _) in self.days})

    def branch_products(self, branch: str) -> dict[str, dict[str, int | None]]:
        out: dict[str, dict[str, int | None]] = defaultdict(dict)
        for (b, p, s), day in self.days.items():
            if b == branch:
                out[p][s] = day
        return dict(out)


@dataclass(frozen=True)
class TdiProfile:
    branch: str
    tdc: dict[str, int]
    fdc: dict[str, int]
    tdi: dict[str, Fraction]
    dampening: Fraction
    products_used: int


def stockout_days(ts: TransactionSet) -> StockoutTable:
    """Earliest day by which cumulative sales reach the delivered total.

    Requires consistent data (validate/repair first); triples that never
    received a delivery are excluded.
    """
    delivered: dict[tuple[str, str, str], int] = defaultdict(int)
    sales: dict[tuple[str, str, str], list[tuple[int, int]]] = defaultdict(list)
    for t in ts.transactions:
        key = (t.branch, t.product, t.size)
        if t.kind == DELIVERY:
            delivered[key] += t.qty
        else:
            sales[key].append((t.day, t.qty))
    table: dict[tuple[str, str, str], int | None] = {}
    for key, total in delivered.items():
        if total <= 0:
            continue
        cum = 0
        day_of_sellout: int | None = NEVER_SOLD_OUT
        for day, qty in sorted(sales.get(key, ())):
            cum += qty
            if cum >= total:
                day_of_sellout = day  # sale days never exceed the horizon
                break
        table[key] = day_of_sellout
    return StockoutTable(table)


def dog_counts(table: StockoutTable, branch: str) -> dict[str, tuple[int, int]]:
    """Per-size (TDC, FDC) over the branch's eligible products.

    A product is eligible if it was delivered in at least two distinct sizes.
    Never-sold-out compares as +inf: such a size can share the flop honours
    but can only "win" the top spot if every size never sold out, in which
    case the product carries no information and is skipped. Ties count for
    every tied size.
    """
    tdc: dict[str, int] = defaultdict(int)
    fdc: dict[str, int] = defaultdict(int)
    observed: set[str] = set()
    for _, per_size in sorted(table.branch_products(branch).items()):
        observed.update(per_size)
        if len(per_size) < 2:
            continue
        values = {s: (math.inf if d is None else d) for s, d in per_size.items()}
        lo = min(values.values())
        hi = max(values.values())
        if lo == math.inf:  # nothing ever sold out: no signal
            continue
        for s, v in values.items():
            if v == lo:
                tdc[s] += 1
            if v == hi:
                fdc[s] += 1
    return {s: (tdc[s], fdc[s]) for s in observed}


def tdi(counts: tuple[int, int], dampening: int | Fraction = DEFAULT_DAMPENING) -> Fraction:
    """Dampened scarcity ratio (TDC + C) / (FDC + C), exact."""
    c = Fraction(dampening)
    if c <= 0:
        raise ValueError(f"dampening must be positive, got {dampening}")
    top, flop = counts
    return Fraction(top + c, flop + c)


def branch_profile(table: StockoutTable, branch: str, sizes: SizeSet,
                   dampening: int | Fraction = DEFAULT_DAMPENING) -> TdiProfile:
    """Assemble the full per-branch profile over the whole size set."""
    counts = dog_counts(table, branch)
    eligible = sum(1 for _, per_size in table.branch_products(branch).items()
                   if len(per_size) >= 2
                   and any(d is not None for d in per_size.values()))
    full = {s: counts.get(s, (0, 0)) for s in sizes.order}
    return TdiProfile(
        branch=branch,
        tdc={s: full[s][0] for s in sizes.order},
        fdc={s: full[s][1] for s in sizes.order},
        tdi={s: tdi(full[s], dampening) for s in sizes.order},
        dampening=Fraction(dampening),
        products_used=eligible,
    )


def rank_sizes(profile: TdiProfile, sizes: SizeSet) -> list[str]:
    """Sizes by descending index; ties fall back to the fixed size order."""
    return sorted(sizes.order, key=lambda s: (-profile.tdi[s], sizes.index(s)))


def all_profiles(ts: TransactionSet,
                 dampening: int | Fraction = DEFAULT_DAMPENING) -> dict[str, TdiProfile]:
    """Profiles for every branch of the set, from its own stockout table."""
    table = stockout_days(ts)
    return {b: branch_profile(table, b, ts.sizes, dampening) for b in ts.branches}
