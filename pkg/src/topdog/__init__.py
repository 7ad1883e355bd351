"""Branch-level size-demand consistency analytics for censored sales data."""

__version__ = "0.1.0"

from .domain import (  # noqa: F401
    ConsistencyReport,
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
    validate,
)
from .evaluation import (  # noqa: F401
    BranchOutcome,
    StudyReport,
    certainty,
    gross_yield,
    last_price_ratio,
    rank_sum,
    run_study,
    scenario_shift,
)
from .market import (  # noqa: F401
    GroundTruth,
    MarketConfig,
    generate,
    inject_inconsistencies,
    true_scarcity,
    uniform_market,
)
from .prepack import LotType, RepackPlan, classify_dogs, optimization_step, repack  # noqa: F401
from .robustness import (  # noqa: F401
    SUBSET_SCHEME,
    discrepancy,
    ordinal_agreement,
    partition_products,
    size_profile,
    subset,
    tdi_shares,
)
# The scarcity-index function itself lives in the submodule of the same name;
# re-exporting it here would shadow `topdog.tdi` the module.
from .tdi import StockoutTable, TdiProfile, all_profiles, dog_counts, rank_sizes, stockout_days  # noqa: F401
