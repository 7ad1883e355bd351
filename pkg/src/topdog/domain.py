"""Transaction data model, CSV ingestion, consistency checks, and repairs.

Money is kept in integer minor units throughout; day indices are integers
relative to the first sales day (day 0). Deliveries may carry negative days
(pre-season stocking), sales days are >= 0.
"""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path


DELIVERY = "D"
SALE = "S"

CSV_HEADER = ["kind", "branch", "product", "size", "day", "qty", "unit_price", "gone_flag"]

DEFAULT_GRACE_DAYS = 28


class ParseError(ValueError):
    """Raised for malformed input rows; carries the offending row number."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        super().__init__(f"row {row}: {message}" if row is not None else message)


@dataclass(frozen=True)
class SizeSet:
    """Ordered size labels with a designated subset of main sizes."""

    order: tuple[str, ...]
    main: tuple[str, ...] = ()

    def __post_init__(self):
        if len(set(self.order)) != len(self.order):
            raise ValueError(f"duplicate size labels in {self.order}")
        missing = [s for s in self.main if s not in self.order]
        if missing:
            raise ValueError(f"main sizes {missing} not in size order {self.order}")

    def index(self, size: str) -> int:
        return self.order.index(size)

    def __contains__(self, size: str) -> bool:
        return size in self.order

    def __len__(self) -> int:
        return len(self.order)


@dataclass(frozen=True)
class Transaction:
    kind: str  # DELIVERY or SALE
    branch: str
    product: str
    size: str
    day: int
    qty: int
    unit_price: int

    def __post_init__(self):
        if self.kind not in (DELIVERY, SALE):
            raise ValueError(f"bad transaction kind {self.kind!r}")
        if self.qty < 1:
            raise ValueError(f"quantity must be >= 1, got {self.qty}")
        if self.unit_price < 0:
            raise ValueError(f"unit price must be >= 0, got {self.unit_price}")
        if self.kind == SALE and self.day < 0:
            raise ValueError(f"sale day must be >= 0, got {self.day}")


@dataclass(frozen=True)
class TransactionSet:
    """Immutable collection of deliveries and sales over a delivery period.

    ``gone`` maps (branch, product) to an explicit end-state flag: True means
    the partner reported every piece gone, False means pieces provably remain,
    a missing key means unknown (the grace-window heuristic applies).
    """

    sizes: SizeSet
    horizon: int
    transactions: tuple[Transaction, ...]
    branches: tuple[str, ...] = ()
    products: tuple[str, ...] = ()
    gone: tuple[tuple[tuple[str, str], bool], ...] = ()
    grace_days: int = DEFAULT_GRACE_DAYS

    def __post_init__(self):
        if not self.branches:
            object.__setattr__(self, "branches",
                               tuple(sorted({t.branch for t in self.transactions})))
        if not self.products:
            object.__setattr__(self, "products",
                               tuple(sorted({t.product for t in self.transactions})))
        for t in self.transactions:
            if t.size not in self.sizes:
                raise ValueError(f"unknown size label {t.size!r}")
            if t.day > self.horizon:
                raise ValueError(
                    f"transaction day {t.day} beyond horizon {self.horizon}")

    @property
    def gone_map(self) -> dict[tuple[str, str], bool]:
        return dict(self.gone)

    def gone_state(self, branch: str, product: str) -> bool | None:
        return self.gone_map.get((branch, product))


@dataclass(frozen=True)
class Anomaly:
    branch: str
    product: str
    size: str
    kind: str  # "oversell" | "leftover"
    magnitude: int


@dataclass(frozen=True)
class ConsistencyReport:
    anomalies: tuple[Anomaly, ...]

    def __bool__(self) -> bool:
        return bool(self.anomalies)

    def triples(self, kind: str) -> list[tuple[str, str, str]]:
        return [(a.branch, a.product, a.size) for a in self.anomalies if a.kind == kind]


@dataclass(frozen=True)
class SchemaConfig:
    """Parsed JSON config: size order, main sizes, grace window, horizon."""

    sizes: SizeSet
    grace_days: int = DEFAULT_GRACE_DAYS
    horizon: int | None = None  # None: use the latest transaction day
    dampening: int = 15


def load_config(path: str | Path) -> SchemaConfig:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    try:
        sizes = SizeSet(tuple(raw["sizes"]), tuple(raw.get("main_sizes", ())))
    except KeyError as exc:
        raise ParseError(f"config missing field {exc}") from exc
    return SchemaConfig(
        sizes=sizes,
        grace_days=int(raw.get("grace_days", DEFAULT_GRACE_DAYS)),
        horizon=raw.get("horizon"),
        dampening=int(raw.get("dampening", 15)),
    )


def parse_transactions(path: str | Path, config: SchemaConfig,
                       endstates_path: str | Path | None = None) -> TransactionSet:
    """Read the transaction CSV into a validated TransactionSet.

    Row order is irrelevant for the semantics but is preserved verbatim so
    that ``parse_transactions`` round-trips with :func:`serialize_transactions`.
    Gone flags may come from the ``gone_flag`` column (meaningful on the last
    row of each branch/product pair) or from a sidecar endstates CSV.
    """
    txs: list[Transaction] = []
    gone: dict[tuple[str, str], bool] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != CSV_HEADER:
            raise ParseError(f"expected header {','.join(CSV_HEADER)}", row=1)
        for rownum, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(CSV_HEADER):
                raise ParseError(f"expected {len(CSV_HEADER)} fields, got {len(row)}", rownum)
            kind, branch, product, size, day, qty, price, flag = [c.strip() for c in row]
            if kind not in (DELIVERY, SALE):
                raise ParseError(f"field 'kind': expected D or S, got {kind!r}", rownum)
            if size not in config.sizes:
                raise ParseError(f"field 'size': unknown size label {size!r}", rownum)
            try:
                day_i, qty_i, price_i = int(day), int(qty), int(price)
            except ValueError as exc:
                raise ParseError(f"non-integer numeric field: {exc}", rownum) from exc
            if qty_i < 1:
                raise ParseError(f"field 'qty': must be >= 1, got {qty_i}", rownum)
            try:
                txs.append(Transaction(kind, branch, product, size, day_i, qty_i, price_i))
            except ValueError as exc:
                raise ParseError(str(exc), rownum) from exc
            if flag != "":
                if flag not in ("0", "1"):
                    raise ParseError(f"field 'gone_flag': expected 0, 1 or empty, got {flag!r}", rownum)
                gone[(branch, product)] = flag == "1"
    if endstates_path is not None:
        gone.update(_parse_endstates(endstates_path))
    horizon = config.horizon
    if horizon is None:
        horizon = max((t.day for t in txs), default=0)
    return TransactionSet(sizes=config.sizes, horizon=horizon,
                          transactions=tuple(txs),
                          gone=tuple(sorted(gone.items())),
                          grace_days=config.grace_days)


def _parse_endstates(path: str | Path) -> dict[tuple[str, str], bool]:
    out: dict[tuple[str, str], bool] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["branch", "product", "gone"]:
            raise ParseError("expected header branch,product,gone", row=1)
        for rownum, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            branch, product, flag = [c.strip() for c in row]
            if flag not in ("0", "1"):
                raise ParseError(f"field 'gone': expected 0 or 1, got {flag!r}", rownum)
            out[(branch, product)] = flag == "1"
    return out


def serialize_transactions(ts: TransactionSet, path: str | Path) -> None:
    """Write the CSV form; gone flags go on the last row of each (branch, product)."""
    gone = ts.gone_map
    last_row: dict[tuple[str, str], int] = {}
    for i, t in enumerate(ts.transactions):
        last_row[(t.branch, t.product)] = i
    flag_at = {i: key for key, i in last_row.items() if key in gone}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for i, t in enumerate(ts.transactions):
            flag = ""
            if i in flag_at:
                flag = "1" if gone[flag_at[i]] else "0"
            writer.writerow([t.kind, t.branch, t.product, t.size,
                             t.day, t.qty, t.unit_price, flag])


# ---------------------------------------------------------------------------
# Per-triple timelines

Triple = tuple[str, str, str]


def triple_events(ts: TransactionSet) -> dict[Triple, list[Transaction]]:
    """Group transactions by (branch, product, size), preserving input order."""
    out: dict[Triple, list[Transaction]] = defaultdict(list)
    for t in ts.transactions:
        out[(t.branch, t.product, t.size)].append(t)
    return dict(out)


def _max_shortfall(events: list[Transaction]) -> int:
    """Largest cumulative-sales excess over cumulative delivery across days."""
    deltas: dict[int, int] = defaultdict(int)
    for t in events:
        deltas[t.day] += t.qty if t.kind == SALE else -t.qty
    running = worst = 0
    for day in sorted(deltas):
        running += deltas[day]
        worst = max(worst, running)
    return worst


def _end_inventory(events: list[Transaction]) -> int:
    delivered = sum(t.qty for t in events if t.kind == DELIVERY)
    sold = sum(t.qty for t in events if t.kind == SALE)
    return delivered - sold


def product_last_sale(ts: TransactionSet, branch: str, product: str) -> tuple[int, int] | None:
    """Last sale (day, unit price) of a product in a branch over all sizes.

    Among same-day sales the lowest price wins: the deepest markdown is the
    relevant "last price" for both repair and the last-price ratio.
    """
    best: tuple[int, int] | None = None
    for t in ts.transactions:
        if t.kind != SALE or t.branch != branch or t.product != product:
            continue
        if best is None or t.day > best[0] or (t.day == best[0] and t.unit_price < best[1]):
            best = (t.day, t.unit_price)
    return best


def validate(ts: TransactionSet) -> ConsistencyReport:
    """Scan every (branch, product, size) for oversell and leftover anomalies.

    Oversell: cumulative sales exceed cumulative delivery at some day
    (magnitude = maximum excess). Leftover: pieces remain at the horizon
    although the item's end state says it is gone -- either via an explicit
    flag or, when the flag is absent, because the product's sales ceased
    more than ``grace_days`` before the horizon.
    """
    anomalies: list[Anomaly] = []
    events = triple_events(ts)
    last_sale_day: dict[tuple[str, str], int] = {}
    for t in ts.transactions:
        if t.kind == SALE:
            key = (t.branch, t.product)
            last_sale_day[key] = max(last_sale_day.get(key, t.day), t.day)
    for (b, p, s) in sorted(events):
        evs = events[(b, p, s)]
        shortfall = _max_shortfall(evs)
        if shortfall > 0:
            anomalies.append(Anomaly(b, p, s, "oversell", shortfall))
        left = _end_inventory(evs)
        if left > 0 and _is_gone(ts, b, p, last_sale_day.get((b, p))):
            anomalies.append(Anomaly(b, p, s, "leftover", left))
    return ConsistencyReport(tuple(anomalies))


def _is_gone(ts: TransactionSet, branch: str, product: str,
             last_sale: int | None) -> bool:
    flag = ts.gone_state(branch, product)
    if flag is not None:
        return flag
    # Unknown end state: treat long-dead products as gone. A product with no
    # sales at all is merely unsold, not inconsistent.
    if last_sale is None:
        return False
    return last_sale < ts.horizon - ts.grace_days


# ---------------------------------------------------------------------------
# Repairs


def repair_ignore(ts: TransactionSet, report: ConsistencyReport) -> TransactionSet:
    """Drop the inconsistent part: excess sales latest-first, surplus delivery.

    Oversold triples keep the earliest sales that the recorded supply covers;
    later sale units are removed. Leftover triples lose the undelivered-in-
    practice surplus from their latest deliveries. Idempotent.
    """
    return _repair_loop(ts, report, _ignore_pass)


def repair_estimate(ts: TransactionSet, report: ConsistencyReport) -> TransactionSet:
    """Reconstruct the missing part instead of dropping the inconsistent one.

    Oversold triples get their supply raised to the observed sales at the
    same price level. Leftover pieces are booked as synthetic sales at the
    product's last selling price over all sizes, dated at that last sale.
    A leftover triple whose product never sold in the branch is unrepairable
    by estimation and falls back to ignore semantics. Idempotent.
    """
    return _repair_loop(ts, report, _estimate_pass)


def unrepairable_leftovers(ts: TransactionSet, report: ConsistencyReport) -> list[Triple]:
    """Leftover triples whose product has no sales in the branch at all."""
    sold_pairs = {(t.branch, t.product) for t in ts.transactions if t.kind == SALE}
    return [t for t in report.triples("leftover") if (t[0], t[1]) not in sold_pairs]


_MAX_REPAIR_PASSES = 8


def _repair_loop(ts, report, apply_pass):
    current = ts
    for _ in range(_MAX_REPAIR_PASSES):
        if not report:
            return current
        current = apply_pass(current, report)
        report = validate(current)
    raise RuntimeError("repair did not converge")  # pragma: no cover


def _rebuild(ts: TransactionSet, rows: list[Transaction]) -> TransactionSet:
    return replace(ts, transactions=tuple(rows), branches=(), products=())


def _ignore_pass(ts: TransactionSet, report: ConsistencyReport) -> TransactionSet:
    rows: list[Transaction | None] = list(ts.transactions)
    for triple in report.triples("oversell"):
        _clip_sales(rows, triple)
    for triple in report.triples("leftover"):
        _shrink_delivery(rows, triple)
    return _rebuild(ts, [r for r in rows if r is not None])


def _estimate_pass(ts: TransactionSet, report: ConsistencyReport) -> TransactionSet:
    rows: list[Transaction | None] = list(ts.transactions)
    extra: list[Transaction] = []
    for (b, p, s) in report.triples("oversell"):
        evs = [r for r in rows if r is not None and (r.branch, r.product, r.size) == (b, p, s)]
        missing = _max_shortfall(evs)
        if missing <= 0:
            continue
        deliveries = [r for r in evs if r.kind == DELIVERY]
        first_sale = min(r.day for r in evs if r.kind == SALE)
        if deliveries and min(d.day for d in deliveries) <= first_sale:
            first = min(deliveries, key=lambda d: (d.day, rows.index(d)))
            rows[rows.index(first)] = replace(first, qty=first.qty + missing)
        else:
            price = deliveries[0].unit_price if deliveries else \
                min((r for r in evs if r.kind == SALE), key=lambda r: r.day).unit_price
            extra.append(Transaction(DELIVERY, b, p, s, first_sale, missing, price))
    unrepairable = set(unrepairable_leftovers(ts, report))
    for (b, p, s) in report.triples("leftover"):
        evs = [r for r in rows if r is not None and (r.branch, r.product, r.size) == (b, p, s)]
        left = _end_inventory(evs)
        if left <= 0:
            continue
        if (b, p, s) in unrepairable:
            _shrink_delivery(rows, (b, p, s))
            continue
        day, price = product_last_sale(ts, b, p)
        # stock that arrived after the product's final sale cannot have been
        # sold by then; book it on the delivery day instead so the repair
        # stays consistent (and terminates) on such degenerate data
        last_delivery = max(r.day for r in evs if r.kind == DELIVERY)
        extra.append(Transaction(SALE, b, p, s, max(day, last_delivery), left, price))
    return _rebuild(ts, [r for r in rows if r is not None] + extra)


def _clip_sales(rows: list[Transaction | None], triple: Triple) -> None:
    """Chronologically cap sales at available stock (deliveries count first
    within a day), which drops the latest excess sale units."""
    idxs = [i for i, r in enumerate(rows)
            if r is not None and (r.branch, r.product, r.size) == triple]
    idxs.sort(key=lambda i: (rows[i].day, rows[i].kind == SALE, i))
    avail = 0
    for i in idxs:
        r = rows[i]
        if r.kind == DELIVERY:
            avail += r.qty
        else:
            take = min(r.qty, avail)
            avail -= take
            if take == 0:
                rows[i] = None
            elif take < r.qty:
                rows[i] = replace(r, qty=take)


def _shrink_delivery(rows: list[Transaction | None], triple: Triple) -> None:
    """Remove the end-of-horizon surplus from the latest deliveries."""
    idxs = [i for i, r in enumerate(rows)
            if r is not None and (r.branch, r.product, r.size) == triple]
    excess = _end_inventory([rows[i] for i in idxs])
    if excess <= 0:
        return
    for i in sorted((i for i in idxs if rows[i].kind == DELIVERY),
                    key=lambda i: (rows[i].day, i), reverse=True):
        r = rows[i]
        cut = min(r.qty, excess)
        excess -= cut
        rows[i] = None if cut == r.qty else replace(r, qty=r.qty - cut)
        if excess == 0:
            break
