"""Dataset ingestion, splitting and preprocessing."""

from .dataset import (
    ColumnSpec,
    DatasetSchema,
    TabularDataset,
    from_arrays,
    load_arff,
    load_csv,
    parse_csv,
    split_dataset,
)
from .openml import default_cache_dir, fetch_openml, load_openml
from .preprocess import Block, Preprocessor, TransformReport, fit_preprocessor, oversample_minority
from .sources import load_first_available, load_source

__all__ = [
    "Block",
    "ColumnSpec",
    "DatasetSchema",
    "Preprocessor",
    "TabularDataset",
    "TransformReport",
    "default_cache_dir",
    "fetch_openml",
    "fit_preprocessor",
    "from_arrays",
    "load_arff",
    "load_csv",
    "load_first_available",
    "load_openml",
    "load_source",
    "oversample_minority",
    "parse_csv",
    "split_dataset",
]
