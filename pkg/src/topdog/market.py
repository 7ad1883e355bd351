"""Synthetic market generator with known per-branch size demand.

Demand is a compound process: customers arrive per branch, product, and day
at a Poisson rate proportional to the product's attractivity, and each asks
for a size drawn from the branch's demand distribution. Only satisfied
demand becomes sales data (stockouts censor the rest), prices follow a
global markdown schedule, and the full uncensored demand is kept privately
so tests can compare estimates against ground truth.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .domain import DELIVERY, SALE, SizeSet, Transaction, TransactionSet
from .prepack import LotType

RNG_NAME = "numpy-pcg64"


@dataclass(frozen=True)
class MarketConfig:
    branches: int
    products: int
    sizes: SizeSet
    demand: dict[str, tuple[float, ...]]  # branch id -> fractions summing to 1
    lots: dict[str, LotType]  # branch id -> pre-pack
    base_rate: float = 0.25  # expected arrivals per product and day
    attractivity_sigma: float = 0.6  # log-normal spread of product appeal
    attractivities: tuple[float, ...] | None = None  # explicit override
    full_price: int = 2999  # minor currency units
    markdown: tuple[tuple[int, float], ...] = ((0, 1.0), (28, 0.8), (42, 0.6), (56, 0.4))
    horizon: int = 70
    substitution: float = 0.0  # chance a stocked-out customer tries a neighbour size
    lead_days: int = 7  # deliveries arrive this many days before day 0
    seed: int = 0

    def __post_init__(self):
        for b, q in self.demand.items():
            if abs(sum(q) - 1.0) > 1e-9:
                raise ValueError(f"demand fractions for {b} sum to {sum(q)}, not 1")
        starts = [d for d, _ in self.markdown]
        fracs = [f for _, f in self.markdown]
        if starts[0] != 0 or starts != sorted(starts):
            raise ValueError("markdown schedule must start at day 0, days ascending")
        if any(b > a for a, b in zip(fracs, fracs[1:])):
            raise ValueError("markdown price fractions must be non-increasing")
        if not 0.0 <= self.substitution <= 1.0:
            raise ValueError(f"substitution must lie in [0, 1], got {self.substitution}")

    @property
    def branch_ids(self) -> list[str]:
        return [f"b{i + 1:02d}" for i in range(self.branches)]

    @property
    def product_ids(self) -> list[str]:
        return [f"p{j + 1:03d}" for j in range(self.products)]


def branch_ids(n: int) -> list[str]:
    return [f"b{i + 1:02d}" for i in range(n)]


def uniform_market(branches: int, products: int, sizes: SizeSet,
                   demand: tuple[float, ...], lot: dict[str, int],
                   **kwargs) -> MarketConfig:
    """Convenience constructor: the same demand and lot type in every branch."""
    ids = branch_ids(branches)
    return MarketConfig(
        branches=branches, products=products, sizes=sizes,
        demand={b: tuple(demand) for b in ids},
        lots={b: LotType(dict(lot)) for b in ids}, **kwargs)


def load_market_config(path: str | Path) -> MarketConfig:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    sizes = SizeSet(tuple(raw["sizes"]), tuple(raw.get("main_sizes", raw["sizes"])))
    n = int(raw["branches"])
    ids = branch_ids(n)
    demand = raw["demand"]
    if isinstance(demand, list):
        demand = {b: tuple(demand) for b in ids}
    else:
        demand = {b: tuple(demand[b]) for b in ids}
    lots = raw["lot"] if "lot" in raw else raw["lots"]
    if isinstance(lots, dict) and all(isinstance(v, int) for v in lots.values()):
        lots = {b: LotType({s: lots.get(s, 0) for s in sizes.order}) for b in ids}
    else:
        lots = {b: LotType({s: lots[b].get(s, 0) for s in sizes.order}) for b in ids}
    return MarketConfig(
        branches=n, products=int(raw["products"]), sizes=sizes,
        demand=demand, lots=lots,
        base_rate=float(raw.get("base_rate", 0.25)),
        attractivity_sigma=float(raw.get("attractivity_sigma", 0.6)),
        attractivities=tuple(raw["attractivities"]) if "attractivities" in raw else None,
        full_price=int(raw.get("full_price", 2999)),
        markdown=tuple((int(d), float(f)) for d, f in raw.get(
            "markdown", [[0, 1.0], [28, 0.8], [42, 0.6], [56, 0.4]])),
        horizon=int(raw.get("horizon", 70)),
        substitution=float(raw.get("substitution", 0.0)),
        lead_days=int(raw.get("lead_days", 7)),
        seed=int(raw.get("seed", 0)),
    )


@dataclass(frozen=True)
class GroundTruth:
    """Per-branch scarcity order plus the inputs it was derived from."""

    scarcity: dict[str, list[str]]  # branch -> sizes, most undersupplied first
    demand: dict[str, tuple[float, ...]]
    lots: dict[str, LotType]
    seed: int
    rng_name: str = RNG_NAME


@dataclass(frozen=True)
class SimulationResult:
    transactions: TransactionSet  # public, censored view
    truth: GroundTruth
    demand_log: dict[tuple[str, str], np.ndarray]  # (branch, product) -> (|S|, days)
    attractivities: tuple[float, ...]


def price_at(day: int, schedule: tuple[tuple[int, float], ...], full_price: int) -> int:
    frac = schedule[0][1]
    for start, f in schedule:
        if start <= day:
            frac = f
    return int(round(full_price * frac))


def true_scarcity(demand: tuple[float, ...], lot: LotType, sizes: SizeSet) -> list[str]:
    """Sizes by expected demand pressure per delivered piece, descending.

    A size with positive demand but no pieces has infinite pressure and
    ranks first; ties fall back to the fixed size order.
    """
    def pressure(s: str) -> float:
        q = demand[sizes.index(s)]
        c = lot.count(s)
        if c == 0:
            return float("inf") if q > 0 else 0.0
        return q / c

    return sorted(sizes.order, key=lambda s: (-pressure(s), sizes.index(s)))


def generate(config: MarketConfig, seed: int | None = None) -> SimulationResult:
    """Run one market season; deterministic for a given (config, seed).

    Without substitution the per-size demand streams are independent Poisson
    thinnings of the arrival process, which lets each branch be drawn as one
    tensor. With substitution the arrivals are processed one by one so a
    stocked-out customer can try an adjacent size.
    """
    root = config.seed if seed is None else seed
    children = np.random.SeedSequence(root).spawn(config.branches + 1)
    setup_rng = np.random.default_rng(children[0])
    if config.attractivities is not None:
        attract = np.asarray(config.attractivities, dtype=float)
    else:
        attract = setup_rng.lognormal(0.0, config.attractivity_sigma, config.products)
    n_sizes = len(config.sizes)
    days = config.horizon + 1
    b_ids, p_ids = config.branch_ids, config.product_ids

    deliveries: list[Transaction] = []
    sales: list[Transaction] = []
    gone: dict[tuple[str, str], bool] = {}
    demand_log: dict[tuple[str, str], np.ndarray] = {}
    day_prices = np.array([price_at(d, config.markdown, config.full_price)
                           for d in range(days)])

    for bi, b in enumerate(b_ids):
        rng = np.random.default_rng(children[bi + 1])
        q = np.asarray(config.demand[b], dtype=float)
        lot = config.lots[b]
        stock = np.array([lot.count(s) for s in config.sizes.order])
        if config.substitution == 0.0:
            rates = (config.base_rate * attract)[:, None, None] * q[None, :, None]
            demand = rng.poisson(np.broadcast_to(rates, (config.products, n_sizes, days)))
            sold_cum = np.minimum(demand.cumsum(axis=2), stock[None, :, None])
            sold = np.diff(sold_cum, axis=2, prepend=0)
        else:
            demand, sold = _simulate_with_substitution(
                rng, config, attract, q, stock, days)
        for pi, p in enumerate(p_ids):
            demand_log[(b, p)] = demand[pi]
            for si, s in enumerate(config.sizes.order):
                if stock[si] > 0:
                    deliveries.append(Transaction(
                        DELIVERY, b, p, s, -config.lead_days,
                        int(stock[si]), config.full_price))
            for si, s in enumerate(config.sizes.order):
                for d in np.nonzero(sold[pi, si])[0]:
                    sales.append(Transaction(
                        SALE, b, p, s, int(d), int(sold[pi, si, d]),
                        int(day_prices[d])))
            sold_out = all(sold[pi, si].sum() == stock[si]
                           for si in range(n_sizes) if stock[si] > 0)
            gone[(b, p)] = bool(sold_out)

    size_index = {s: i for i, s in enumerate(config.sizes.order)}
    sales.sort(key=lambda t: (t.branch, t.product, t.day, size_index[t.size]))
    ts = TransactionSet(
        sizes=config.sizes, horizon=config.horizon,
        transactions=tuple(deliveries + sales),
        branches=tuple(b_ids), products=tuple(p_ids),
        gone=tuple(sorted(gone.items())))
    truth = GroundTruth(
        scarcity={b: true_scarcity(config.demand[b], config.lots[b], config.sizes)
                  for b in b_ids},
        demand=dict(config.demand), lots=dict(config.lots), seed=root)
    return SimulationResult(ts, truth, demand_log, tuple(float(a) for a in attract))


def _simulate_with_substitution(rng, config, attract, q, stock, days):
    """Arrival-by-arrival path: a blocked customer tries one adjacent size."""
    n_sizes = len(q)
    demand = np.zeros((config.products, n_sizes, days), dtype=np.int64)
    sold = np.zeros_like(demand)
    for pi in range(config.products):
        arrivals = rng.poisson(config.base_rate * attract[pi], days)
        n = int(arrivals.sum())
        if n == 0:
            continue
        wanted = rng.choice(n_sizes, size=n, p=q)
        try_sub = rng.random(n) < config.substitution
        side = rng.random(n)
        day_of = np.repeat(np.arange(days), arrivals)
        left = stock.copy()
        for k in range(n):
            s, d = int(wanted[k]), int(day_of[k])
            demand[pi, s, d] += 1
            if left[s] > 0:
                left[s] -= 1
                sold[pi, s, d] += 1
            elif try_sub[k]:
                neighbours = [j for j in (s - 1, s + 1)
                              if 0 <= j < n_sizes and left[j] > 0]
                if neighbours:
                    j = neighbours[0] if len(neighbours) == 1 or side[k] < 0.5 \
                        else neighbours[1]
                    left[j] -= 1
                    sold[pi, j, d] += 1
    return demand, sold


def inject_inconsistencies(ts: TransactionSet, rate: float, seed: int,
                           kinds: tuple[str, ...] = (DELIVERY, SALE)) -> TransactionSet:
    """Drop each unit of the selected kinds independently with ``rate``.

    Lost delivery records surface as oversells; lost sale records on gone
    products surface as leftovers. Registries and end-state flags are kept,
    exactly like a corrupted extract of an otherwise known assortment.
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"rate must lie in [0, 1], got {rate}")
    rng = np.random.default_rng(seed)
    rows = []
    for t in ts.transactions:
        qty = t.qty
        if t.kind in kinds and rate > 0:
            qty -= int(rng.binomial(t.qty, rate))
        if qty >= 1:
            rows.append(t if qty == t.qty else
                        Transaction(t.kind, t.branch, t.product, t.size,
                                    t.day, qty, t.unit_price))
    return TransactionSet(sizes=ts.sizes, horizon=ts.horizon,
                          transactions=tuple(rows), branches=ts.branches,
                          products=ts.products, gone=ts.gone,
                          grace_days=ts.grace_days)


def write_truth(path: str | Path, truth: GroundTruth, sizes: SizeSet) -> None:
    payload = {
        "rng": truth.rng_name,
        "seed": truth.seed,
        "branches": {
            b: {
                "scarcity": truth.scarcity[b],
                "demand": list(truth.demand[b]),
                "lot": {s: truth.lots[b].count(s) for s in sizes.order},
            }
            for b in sorted(truth.scarcity)
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
