"""One-piece pre-pack swaps driven by the per-branch scarcity ranking.

Each step removes one piece of the amplest size and adds one piece of the
scarcest size, keeping the pre-pack total constant. Products slated for
advertising flyers must keep at least one piece in every main size, which
can force the removal onto the second-amplest size instead.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

from . import tdi as tdi_mod
from .domain import SizeSet, TransactionSet

ADVERTISED = "advertised"
PLAIN = "plain"
VARIANTS = (ADVERTISED, PLAIN)


@dataclass(frozen=True)
class LotType:
    """Non-negative integer piece count per size; total must be >= 1."""

    counts: dict[str, int]

    def __post_init__(self):
        if any(c < 0 for c in self.counts.values()):
            raise ValueError(f"negative piece count in {self.counts}")
        if self.total < 1:
            raise ValueError("lot must contain at least one piece")

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def count(self, size: str) -> int:
        return self.counts.get(size, 0)

    def swap(self, remove: str, add: str) -> "LotType":
        out = dict(self.counts)
        out[remove] = out.get(remove, 0) - 1
        out[add] = out.get(add, 0) + 1
        return LotType(out)


@dataclass(frozen=True)
class DogCall:
    """Classification outcome for one branch: act or leave alone."""

    top: str | None
    flop: str | None
    act: bool
    reason: str = ""


@dataclass(frozen=True)
class VariantPlan:
    variant: str
    remove: str | None
    add: str | None
    result: LotType | None
    reason: str = ""  # non-empty iff no action

    @property
    def acted(self) -> bool:
        return self.result is not None


@dataclass(frozen=True)
class RepackPlan:
    branch: str
    variants: dict[str, VariantPlan]


def ample_order(profile: tdi_mod.TdiProfile, sizes: SizeSet) -> list[str]:
    """Sizes by ascending index (amplest first); ties prefer the earlier size."""
    return sorted(sizes.order, key=lambda s: (profile.tdi[s], sizes.index(s)))


def classify_dogs(profile: tdi_mod.TdiProfile, sizes: SizeSet,
                  threshold: float = 1.0) -> DogCall:
    """Pick the scarcest and amplest size, or decline when balanced.

    Ties resolve to the earlier size in the fixed order on both ends.
    ``threshold`` is the minimum max/min index ratio worth acting on; the
    default 1.0 means always act. There is no principled significance level
    for this ratio, so it stays a configuration knob.
    """
    top = tdi_mod.rank_sizes(profile, sizes)[0]
    flop = ample_order(profile, sizes)[0]
    ratio = profile.tdi[top] / profile.tdi[flop]
    if ratio < threshold:
        return DogCall(None, None, False,
                       f"index ratio {float(ratio):.3f} below threshold {threshold}")
    return DogCall(top, flop, True)


def repack(lot: LotType, top: str, flop: str, advertised: bool,
           main_sizes: tuple[str, ...], ample: list[str]) -> VariantPlan:
    """Move one piece from the amplest (or fallback) size to the scarcest.

    ``ample`` lists the sizes amplest-first (ascending index). Advertised
    pre-packs keep >= 1 piece in every main size: if the flop is a main size
    down to its last piece, the removal falls onto the amplest size by index
    that still has >= 2 pieces. Without the advertising constraint a flop
    with no pieces falls back to the next-amplest size with stock.
    """
    variant = ADVERTISED if advertised else PLAIN
    amplest_first = [s for s in ample if s != top]
    if advertised:
        blocked = flop in main_sizes and lot.count(flop) <= 1
        if not blocked and lot.count(flop) >= 1 and flop != top:
            remove = flop
        else:
            candidates = [s for s in amplest_first if lot.count(s) >= 2]
            if not candidates:
                return VariantPlan(variant, None, None, None,
                                   "no size with >= 2 pieces to take from")
            remove = candidates[0]
    else:
        if lot.count(flop) >= 1 and flop != top:
            remove = flop
        else:
            candidates = [s for s in amplest_first if lot.count(s) >= 1]
            if not candidates:
                return VariantPlan(variant, None, None, None,
                                   "no removable piece outside the top size")
            remove = candidates[0]
    result = lot.swap(remove, top)
    if advertised and any(result.count(m) < 1 for m in main_sizes):
        return VariantPlan(variant, None, None, None,
                           "swap would break the main-size floor")
    return VariantPlan(variant, remove, top, result)


def optimization_step(ts: TransactionSet, lots: dict[str, LotType],
                      dampening=tdi_mod.DEFAULT_DAMPENING,
                      threshold: float = 1.0) -> dict[str, RepackPlan]:
    """One heuristic improvement step over all branches under study.

    Combines the per-branch classification with the swap for both the
    advertised and the plain variant. Balanced branches come back as
    no-action plans so the caller sees every branch accounted for.
    """
    profiles = tdi_mod.all_profiles(ts, dampening)
    plans: dict[str, RepackPlan] = {}
    for branch, lot in sorted(lots.items()):
        if branch not in profiles:
            raise KeyError(f"no transaction data for branch {branch!r}")
        profile = profiles[branch]
        call = classify_dogs(profile, ts.sizes, threshold)
        if not call.act:
            plans[branch] = RepackPlan(branch, {
                v: VariantPlan(v, None, None, None, call.reason) for v in VARIANTS})
            continue
        ample = ample_order(profile, ts.sizes)
        plans[branch] = RepackPlan(branch, {
            ADVERTISED: repack(lot, call.top, call.flop, True, ts.sizes.main, ample),
            PLAIN: repack(lot, call.top, call.flop, False, ts.sizes.main, ample),
        })
    return plans


# ---------------------------------------------------------------------------
# CSV formats


def read_lots(path: str | Path, sizes: SizeSet) -> dict[str, LotType]:
    counts: dict[str, dict[str, int]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["branch", "size", "count"]:
            raise ValueError("lots file must have header branch,size,count")
        for row in reader:
            if row["size"] not in sizes:
                raise ValueError(f"unknown size label {row['size']!r} in lots file")
            counts.setdefault(row["branch"], {})[row["size"]] = int(row["count"])
    return {b: LotType({s: c.get(s, 0) for s in sizes.order})
            for b, c in counts.items()}


def write_lots(path: str | Path, lots: dict[str, LotType], sizes: SizeSet) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["branch", "size", "count"])
        for branch in sorted(lots):
            for s in sizes.order:
                writer.writerow([branch, s, lots[branch].count(s)])


def format_lot(lot: LotType | None, sizes: SizeSet) -> str:
    if lot is None:
        return ""
    return "|".join(f"{s}:{lot.count(s)}" for s in sizes.order)


def write_plans(path: str | Path, plans: dict[str, RepackPlan], sizes: SizeSet) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["branch", "variant", "remove", "add", "resulting_lot"])
        for branch in sorted(plans):
            for variant in VARIANTS:
                plan = plans[branch].variants[variant]
                writer.writerow([branch, variant, plan.remove or "",
                                 plan.add or "", format_lot(plan.result, sizes)])
