import pytest

from topdog.domain import SizeSet, Transaction, TransactionSet


@pytest.fixture
def sizes4():
    return SizeSet(("S", "M", "L", "XL"), main=("S", "M", "L", "XL"))


def make_ts(rows, sizes, horizon=60, gone=(), grace_days=28):
    """Build a TransactionSet from (kind, branch, product, size, day, qty, price) rows."""
    txs = tuple(Transaction(*row) for row in rows)
    return TransactionSet(sizes=sizes, horizon=horizon, transactions=txs,
                          gone=tuple(sorted(dict(gone).items())),
                          grace_days=grace_days)


@pytest.fixture
def make_set(sizes4):
    def _make(rows, horizon=60, gone=(), grace_days=28, sizes=None):
        return make_ts(rows, sizes or sizes4, horizon, gone, grace_days)
    return _make
