"""ndvkit: distinct-value estimation for table columns under minimal data
access: classical sampling estimators, a schema-semantics learned
estimator, and the evaluation harness that compares them."""

__version__ = "0.1.0"

from .corpus import (  # noqa: F401
    ColumnData,
    ColumnSchema,
    DatasetManifest,
    GroundTruth,
    TableRecord,
    exact_ndv,
    filter_columns,
    load_table,
    split_dataset,
)
from .errors import NdvkitError  # noqa: F401
from .estimators import Estimate, SolverConfig, estimate_all  # noqa: F401
from .evaluation import BenchmarkSpec, layout_experiment, q_error, run_benchmark  # noqa: F401
from .profiles import (  # noqa: F401
    FrequencyProfile,
    Sample,
    frequency_profile,
    profile_cutoff,
    random_sample,
    sequential_sample,
    table_row_count,
)
from .semantics import HashEmbedder, serialize_column  # noqa: F401
