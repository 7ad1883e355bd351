import json

import numpy as np
import pytest

from topdog.domain import (
    DELIVERY,
    SALE,
    ParseError,
    SchemaConfig,
    SizeSet,
    Transaction,
    TransactionSet,
    load_config,
    parse_transactions,
    repair_estimate,
    repair_ignore,
    serialize_transactions,
    unrepairable_leftovers,
    validate,
)

CSV_HEADER = "kind,branch,product,size,day,qty,unit_price,gone_flag\n"


@pytest.fixture
def config(sizes4):
    return SchemaConfig(sizes=sizes4, grace_days=28, horizon=60)


def write_csv(tmp_path, body, name="data.csv"):
    path = tmp_path / name
    path.write_text(CSV_HEADER + body)
    return path


# ---------------------------------------------------------------------------
# Parsing


def test_parse_empty_file(tmp_path, config):
    ts = parse_transactions(write_csv(tmp_path, ""), config)
    assert ts.transactions == ()
    assert ts.branches == () and ts.products == ()


def test_parse_single_delivery_row(tmp_path, config):
    ts = parse_transactions(write_csv(tmp_path, "D,b1,p1,S,-7,2,999,\n"), config)
    assert len(ts.branches) == 1 and len(ts.products) == 1
    (t,) = ts.transactions
    assert (t.kind, t.day, t.qty, t.unit_price) == (DELIVERY, -7, 2, 999)


def test_parse_duplicate_sale_rows_are_additive(tmp_path, config):
    single = parse_transactions(write_csv(
        tmp_path, "D,b1,p1,S,-7,5,999,\nS,b1,p1,S,3,2,999,\n", "one.csv"), config)
    double = parse_transactions(write_csv(
        tmp_path, "D,b1,p1,S,-7,5,999,\nS,b1,p1,S,3,2,999,\nS,b1,p1,S,3,2,999,\n",
        "two.csv"), config)

    def total_sales(ts):  # direct aggregation oracle
        return sum(t.qty for t in ts.transactions if t.kind == SALE)

    assert len(double.transactions) == 3
    assert total_sales(double) == 2 * total_sales(single)


def test_parse_rejects_unknown_size(tmp_path, config):
    with pytest.raises(ParseError, match="row 2.*size"):
        parse_transactions(write_csv(tmp_path, "S,b1,p1,XXL,3,1,999,\n"), config)


def test_parse_rejects_nonpositive_qty(tmp_path, config):
    with pytest.raises(ParseError, match="row 2.*qty"):
        parse_transactions(write_csv(tmp_path, "S,b1,p1,S,3,0,999,\n"), config)


def test_parse_reports_row_number_of_malformed_row(tmp_path, config):
    body = "D,b1,p1,S,-7,2,999,\nS,b1,p1,S,notaday,1,999,\n"
    with pytest.raises(ParseError, match="row 3"):
        parse_transactions(write_csv(tmp_path, body), config)


def test_parse_gone_flag_and_sidecar(tmp_path, config):
    body = "D,b1,p1,S,-7,2,999,\nS,b1,p1,S,3,2,999,1\n"
    sidecar = tmp_path / "endstates.csv"
    sidecar.write_text("branch,product,gone\nb1,p2,0\n")
    data = write_csv(tmp_path, body + "D,b1,p2,S,-7,1,999,\n")
    ts = parse_transactions(data, config, endstates_path=sidecar)
    assert ts.gone_state("b1", "p1") is True
    assert ts.gone_state("b1", "p2") is False
    assert ts.gone_state("b1", "p3") is None


def test_round_trip_parse_serialize(tmp_path, config):
    body = ("D,b1,p1,S,-7,8,999,\nS,b1,p1,S,0,3,999,\nS,b1,p1,S,12,5,700,1\n"
            "D,b2,p1,M,-7,4,999,\nS,b2,p1,M,1,1,999,0\n")
    ts = parse_transactions(write_csv(tmp_path, body), config)
    out = tmp_path / "echo.csv"
    serialize_transactions(ts, out)
    again = parse_transactions(out, config)
    assert again == ts


def test_load_config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({
        "sizes": ["S", "M", "L", "XL"], "main_sizes": ["S", "M"],
        "grace_days": 14, "horizon": 90, "dampening": 10}))
    cfg = load_config(path)
    assert cfg.sizes.order == ("S", "M", "L", "XL")
    assert cfg.sizes.main == ("S", "M")
    assert (cfg.grace_days, cfg.horizon, cfg.dampening) == (14, 90, 10)


def test_size_set_invariants():
    with pytest.raises(ValueError):
        SizeSet(("S", "S"))
    with pytest.raises(ValueError):
        SizeSet(("S", "M"), main=("L",))


# ---------------------------------------------------------------------------
# Validation


def test_validate_oversell(make_set):
    ts = make_set([(DELIVERY, "b1", "p1", "S", -7, 8, 999),
                   (SALE, "b1", "p1", "S", 5, 10, 999)])
    report = validate(ts)
    (a,) = report.anomalies
    assert (a.kind, a.magnitude) == ("oversell", 2)


def test_validate_leftover_with_gone_flag(make_set):
    ts = make_set([(DELIVERY, "b1", "p1", "S", -7, 10, 999),
                   (SALE, "b1", "p1", "S", 5, 8, 999)],
                  gone={("b1", "p1"): True})
    report = validate(ts)
    (a,) = report.anomalies
    assert (a.kind, a.magnitude) == ("leftover", 2)


def test_validate_balanced_triple_is_clean(make_set):
    ts = make_set([(DELIVERY, "b1", "p1", "S", -7, 5, 999),
                   (SALE, "b1", "p1", "S", 5, 5, 999)],
                  gone={("b1", "p1"): True})
    assert not validate(ts)


def test_validate_grace_window_heuristic(make_set):
    rows = [(DELIVERY, "b1", "p1", "S", -7, 10, 999),
            (SALE, "b1", "p1", "S", 5, 8, 999)]
    # no flag, sales ceased long before the horizon: treated as gone
    stale = make_set(rows, horizon=60, grace_days=28)
    assert [a.kind for a in validate(stale).anomalies] == ["leftover"]
    # same data but recent sales: not reported
    fresh = make_set(rows, horizon=20, grace_days=28)
    assert not validate(fresh)
    # explicit not-gone flag beats the heuristic
    flagged = make_set(rows, horizon=60, gone={("b1", "p1"): False})
    assert not validate(flagged)


def test_validate_never_sold_product_is_not_leftover(make_set):
    ts = make_set([(DELIVERY, "b1", "p1", "S", -7, 4, 999)], horizon=60)
    assert not validate(ts)


# ---------------------------------------------------------------------------
# Repairs


def total_qty(ts, kind):
    return sum(t.qty for t in ts.transactions if t.kind == kind)


def test_repair_ignore_drops_latest_sales(make_set):
    ts = make_set([(DELIVERY, "b1", "p1", "S", -7, 8, 999),
                   (SALE, "b1", "p1", "S", 1, 4, 999),
                   (SALE, "b1", "p1", "S", 2, 4, 999),
                   (SALE, "b1", "p1", "S", 9, 2, 700)])
    fixed = repair_ignore(ts, validate(ts))
    assert not validate(fixed)
    assert total_qty(fixed, SALE) == 8
    # the latest units went: the day-9 sale disappeared entirely
    assert all(t.day != 9 for t in fixed.transactions if t.kind == SALE)


def test_repair_ignore_drops_leftover_delivery(make_set):
    ts = make_set([(DELIVERY, "b1", "p1", "S", -7, 10, 999),
                   (SALE, "b1", "p1", "S", 5, 8, 999)],
                  gone={("b1", "p1"): True})
    fixed = repair_ignore(ts, validate(ts))
    assert not validate(fixed)
    assert total_qty(fixed, DELIVERY) == 8


def test_repair_ignore_consistent_is_identity(make_set):
    ts = make_set([(DELIVERY, "b1", "p1", "S", -7, 5, 999),
                   (SALE, "b1", "p1", "S", 5, 5, 999)])
    assert repair_ignore(ts, validate(ts)) == ts


def test_repair_estimate_raises_delivery(make_set):
    ts = make_set([(DELIVERY, "b1", "p1", "S", -7, 8, 999),
                   (SALE, "b1", "p1", "S", 5, 10, 999)])
    fixed = repair_estimate(ts, validate(ts))
    assert not validate(fixed)
    assert total_qty(fixed, DELIVERY) == 10
    (d,) = [t for t in fixed.transactions if t.kind == DELIVERY]
    assert d.unit_price == 999  # same price level


def test_repair_estimate_books_missing_sales_at_last_price(make_set):
    ts = make_set([(DELIVERY, "b1", "p1", "S", -7, 10, 999),
                   (SALE, "b1", "p1", "S", 5, 8, 999),
                   (DELIVERY, "b1", "p1", "M", -7, 1, 999),
                   (SALE, "b1", "p1", "M", 9, 1, 500)],
                  gone={("b1", "p1"): True})
    fixed = repair_estimate(ts, validate(ts))
    assert not validate(fixed)
    synthetic = [t for t in fixed.transactions if t.kind == SALE
                 and t.size == "S" and t.day == 9]
    assert len(synthetic) == 1 and synthetic[0].qty == 2
    assert synthetic[0].unit_price == 500  # last price over all sizes


def test_repair_estimate_unrepairable_falls_back_to_ignore(make_set):
    ts = make_set([(DELIVERY, "b1", "p1", "S", -7, 3, 999)],
                  gone={("b1", "p1"): True})
    report = validate(ts)
    assert unrepairable_leftovers(ts, report) == [("b1", "p1", "S")]
    fixed = repair_estimate(ts, report)
    assert not validate(fixed)
    assert total_qty(fixed, DELIVERY) == 0


def test_repair_estimate_consistent_is_identity(make_set):
    ts = make_set([(DELIVERY, "b1", "p1", "S", -7, 5, 999),
                   (SALE, "b1", "p1", "S", 5, 5, 999)])
    assert repair_estimate(ts, validate(ts)) == ts


def test_repair_ignore_intermediate_day_violation(make_set):
    # oversell only in the middle of the horizon: day-1 sale outruns stock
    ts = make_set([(DELIVERY, "b1", "p1", "S", 0, 1, 999),
                   (SALE, "b1", "p1", "S", 1, 2, 999),
                   (DELIVERY, "b1", "p1", "S", 2, 5, 999),
                   (SALE, "b1", "p1", "S", 3, 4, 999)])
    fixed = repair_ignore(ts, validate(ts))
    assert not validate(fixed)
    day1 = [t for t in fixed.transactions if t.kind == SALE and t.day == 1]
    assert day1[0].qty == 1


def test_repair_estimate_converges_with_delivery_after_last_sale(make_set):
    # pathological: the leftover stock arrived after the product's final sale,
    # so the synthetic sale overdraws and needs a follow-up supply estimate
    ts = make_set([(DELIVERY, "b1", "p1", "S", 20, 5, 999),
                   (DELIVERY, "b1", "p1", "M", -7, 1, 999),
                   (SALE, "b1", "p1", "M", 3, 1, 400)],
                  gone={("b1", "p1"): True})
    fixed = repair_estimate(ts, validate(ts))
    assert not validate(fixed)
    assert repair_estimate(fixed, validate(fixed)) == fixed


# ---------------------------------------------------------------------------
# Fuzzed properties


def fuzz_set(rng, sizes):
    rows = []
    gone = {}
    horizon = 40
    for b in [f"b{i}" for i in range(1, rng.integers(2, 4))]:
        for p in [f"p{j}" for j in range(1, rng.integers(2, 5))]:
            for s in sizes.order[: rng.integers(1, 5)]:
                if rng.random() < 0.8:
                    rows.append((DELIVERY, b, p, s, -int(rng.integers(0, 9)),
                                 int(rng.integers(1, 7)), 999))
                n_sales = int(rng.integers(0, 4))
                for _ in range(n_sales):
                    rows.append((SALE, b, p, s, int(rng.integers(0, horizon + 1)),
                                 int(rng.integers(1, 4)), int(rng.choice([999, 700, 500]))))
            flag = rng.random()
            if flag < 0.3:
                gone[(b, p)] = True
            elif flag < 0.5:
                gone[(b, p)] = False
    txs = tuple(Transaction(*r) for r in rows)
    return TransactionSet(sizes=sizes, horizon=horizon, transactions=txs,
                          gone=tuple(sorted(gone.items())), grace_days=10)


@pytest.mark.parametrize("repair", [repair_ignore, repair_estimate])
def test_repairs_idempotent_and_clean_on_fuzzed_sets(repair, sizes4):
    rng = np.random.default_rng(42)
    for _ in range(200):
        ts = fuzz_set(rng, sizes4)
        report = validate(ts)
        once = repair(ts, report)
        assert not validate(once)
        again = repair(once, validate(once))
        assert again == once


def test_repair_direction_properties(sizes4):
    rng = np.random.default_rng(7)
    for _ in range(200):
        ts = fuzz_set(rng, sizes4)
        report = validate(ts)
        ignored = repair_ignore(ts, report)
        assert total_qty(ignored, SALE) <= total_qty(ts, SALE)
        assert total_qty(ignored, DELIVERY) <= total_qty(ts, DELIVERY)
        estimated = repair_estimate(ts, report)
        assert total_qty(estimated, SALE) >= total_qty(ts, SALE)
        if not unrepairable_leftovers(ts, report):
            assert total_qty(estimated, DELIVERY) >= total_qty(ts, DELIVERY)


def test_repaired_gone_triples_balance_at_horizon(sizes4):
    rng = np.random.default_rng(11)
    for _ in range(100):
        ts = fuzz_set(rng, sizes4)
        fixed = repair_ignore(ts, validate(ts))
        balance = {}
        for t in fixed.transactions:
            key = (t.branch, t.product, t.size)
            balance[key] = balance.get(key, 0) + (t.qty if t.kind == DELIVERY else -t.qty)
        for (b, p, s), left in balance.items():
            assert left >= 0
            if fixed.gone_state(b, p) is True:
                assert left == 0
