from fractions import Fraction

import numpy as np
import pytest

from topdog.domain import DELIVERY, SALE
from topdog.prepack import (
    ADVERTISED,
    PLAIN,
    LotType,
    ample_order,
    classify_dogs,
    optimization_step,
    repack,
)
from topdog.tdi import TdiProfile, rank_sizes


def profile(sizes, tdis):
    return TdiProfile(branch="b1", tdc={s: 0 for s in sizes.order},
                      fdc={s: 0 for s in sizes.order},
                      tdi={s: Fraction(v).limit_denominator() for s, v in tdis.items()},
                      dampening=Fraction(15), products_used=10)


BASE_LOT = {"S": 1, "M": 2, "L": 2, "XL": 1}


def test_lot_type_invariants():
    with pytest.raises(ValueError):
        LotType({"S": -1, "M": 2})
    with pytest.raises(ValueError):
        LotType({"S": 0})
    assert LotType(BASE_LOT).total == 6


def test_classify_strict_extremes(sizes4):
    call = classify_dogs(profile(sizes4, {"S": 0.8, "M": 1.0, "L": 1.1, "XL": 1.9}),
                         sizes4)
    assert (call.top, call.flop, call.act) == ("XL", "S", True)


def test_classify_balanced_with_threshold(sizes4):
    call = classify_dogs(profile(sizes4, {s: 1.0 for s in sizes4.order}),
                         sizes4, threshold=1.2)
    assert not call.act and "threshold" in call.reason


def test_classify_tie_consistent_with_ranking(sizes4):
    tdis = {"S": 1.5, "M": 1.0, "L": 1.0, "XL": 1.5}
    p = profile(sizes4, tdis)
    call = classify_dogs(p, sizes4)
    assert call.top == rank_sizes(p, sizes4)[0] == "S"  # earlier size wins the tie
    assert call.flop == ample_order(p, sizes4)[0] == "M"  # earlier of the minimal


def test_repack_direct_swap_both_variants(sizes4):
    # branch 2 of the study: M out, XL in, with and without advertising
    lot = LotType(BASE_LOT)
    ample = ["M", "L", "S", "XL"]
    for advertised in (True, False):
        plan = repack(lot, "XL", "M", advertised, sizes4.main, ample)
        assert (plan.remove, plan.add) == ("M", "XL")
        assert plan.result.counts == {"S": 1, "M": 1, "L": 2, "XL": 2}
        assert plan.result.total == lot.total


def test_repack_advertising_floor_forces_second_amplest(sizes4):
    # branch 3 of the study: flop S has one piece and is protected, the
    # second-amplest L loses a piece instead; without advertising S goes
    lot = LotType(BASE_LOT)
    ample = ["S", "L", "M", "XL"]  # amplest first
    advertised = repack(lot, "XL", "S", True, sizes4.main, ample)
    assert (advertised.remove, advertised.add) == ("L", "XL")
    assert advertised.result.counts == {"S": 1, "M": 2, "L": 1, "XL": 2}
    plain = repack(lot, "XL", "S", False, sizes4.main, ample)
    assert (plain.remove, plain.add) == ("S", "XL")
    assert plain.result.counts == {"S": 0, "M": 2, "L": 2, "XL": 2}


def test_repack_plain_fallback_when_flop_empty(sizes4):
    lot = LotType({"S": 0, "M": 2, "L": 2, "XL": 1})
    ample = ["S", "L", "M", "XL"]
    plan = repack(lot, "XL", "S", False, sizes4.main, ample)
    # next-amplest with stock after the empty flop S is L
    assert (plan.remove, plan.add) == ("L", "XL")
    assert plan.result.total == lot.total


def test_repack_no_action_when_nothing_removable(sizes4):
    lot = LotType({"S": 1, "M": 1, "L": 1, "XL": 1})
    ample = ["S", "L", "M", "XL"]
    plan = repack(lot, "XL", "S", True, sizes4.main, ample)
    assert not plan.acted and plan.reason


def test_repack_never_negative_and_conserves_total(sizes4):
    rng = np.random.default_rng(12)
    ranking_pool = ["S", "M", "L", "XL"]
    for _ in range(300):
        counts = {s: int(rng.integers(0, 5)) for s in ranking_pool}
        if sum(counts.values()) == 0:
            counts["M"] = 1
        lot = LotType(counts)
        order = list(rng.permutation(ranking_pool))
        top, flop = order[-1], order[0]  # order is amplest-first
        for advertised in (True, False):
            plan = repack(lot, top, flop, advertised, ("S", "M", "L", "XL"), order)
            if plan.acted:
                assert plan.result.total == lot.total
                assert all(c >= 0 for c in plan.result.counts.values())
                if advertised:
                    assert all(plan.result.count(m) >= 1 for m in ("S", "M", "L", "XL")
                               if lot.count(m) >= 1)


def test_repack_inverse_swap_restores_lot(sizes4):
    lot = LotType(BASE_LOT)
    ample = ["M", "L", "S", "XL"]
    plan = repack(lot, "XL", "M", False, sizes4.main, ample)
    assert plan.result.swap(plan.add, plan.remove) == lot


# ---------------------------------------------------------------------------
# Full step


def scripted_market(make_set, theta_by_branch):
    """One product group per branch realizing the given stockout days."""
    rows = []
    for b, per_product in theta_by_branch.items():
        for p, per_size in per_product.items():
            for s, day in per_size.items():
                rows.append((DELIVERY, b, p, s, -7, 1, 999))
                if day is not None:
                    rows.append((SALE, b, p, s, day, 1, 999))
    return make_set(rows)


def test_optimization_step_balanced_branches_report_no_action(make_set):
    ts = scripted_market(make_set, {
        "b1": {"p1": {"S": 3, "M": 3, "L": 3, "XL": 3},
               "p2": {"S": 5, "M": 5, "L": 5, "XL": 5}}})
    plans = optimization_step(ts, {"b1": LotType(BASE_LOT)}, threshold=1.05)
    assert not plans["b1"].variants[PLAIN].acted
    assert not plans["b1"].variants[ADVERTISED].acted


def test_optimization_step_swaps_scarce_for_ample(make_set):
    ts = scripted_market(make_set, {
        "b1": {f"p{j}": {"S": 30 + j, "M": 9, "L": 12, "XL": 2} for j in range(8)}})
    plans = optimization_step(ts, {"b1": LotType(BASE_LOT)})
    plain = plans["b1"].variants[PLAIN]
    assert (plain.remove, plain.add) == ("S", "XL")
    assert plain.result.total == 6


def test_optimization_step_reversal_undoes_previous_swap(make_set):
    # period 1: XL scarce, S ample -> move a piece from S to XL
    period1 = scripted_market(make_set, {
        "b1": {f"p{j}": {"S": 40, "M": 20, "L": 20, "XL": 3} for j in range(6)}})
    lots = {"b1": LotType(BASE_LOT)}
    first = optimization_step(period1, lots)["b1"].variants[PLAIN]
    assert (first.remove, first.add) == ("S", "XL")
    # period 2 with the swapped lot: the measurement flips, XL now ample
    period2 = scripted_market(make_set, {
        "b1": {f"p{j}": {"S": 3, "M": 20, "L": 20, "XL": 40} for j in range(6)}})
    second = optimization_step(period2, {"b1": first.result})["b1"].variants[PLAIN]
    assert (second.remove, second.add) == (first.add, first.remove)
    assert second.result == lots["b1"]  # oversteering rolled back


def test_optimization_step_requires_branch_data(make_set):
    ts = scripted_market(make_set, {"b1": {"p1": {"S": 1, "M": 2}}})
    with pytest.raises(KeyError):
        optimization_step(ts, {"b9": LotType(BASE_LOT)})
