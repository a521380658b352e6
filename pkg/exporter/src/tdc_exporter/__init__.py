"""PyTorch-to-toolkit exporter: models, datasets, and performance CSVs."""

from .export import (
    balanced_subset,
    compute_normalization,
    export_dataset,
    export_model,
    export_performance_csv,
    import_model_weights,
    load_source,
)
from .formats import read_dataset, read_tensor, write_dataset, write_tensor

__all__ = [
    "balanced_subset",
    "compute_normalization",
    "export_dataset",
    "export_model",
    "export_performance_csv",
    "import_model_weights",
    "load_source",
    "read_dataset",
    "read_tensor",
    "write_dataset",
    "write_tensor",
]
