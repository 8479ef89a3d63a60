"""Python bindings for the hetgraph C++ core."""

from ._hetgraph import (
    DataError,
    Error,
    NumericalError,
    UsageError,
    build_few_shot,
    build_graph,
    build_zero_shot,
    compose_shots,
    confusion,
    metrics,
    paired_ttest,
    parse_label,
    run_cli,
    stratified_split,
    tokenize,
    train_gcn,
)

__all__ = [
    "DataError",
    "Error",
    "NumericalError",
    "UsageError",
    "build_few_shot",
    "build_graph",
    "build_zero_shot",
    "compose_shots",
    "confusion",
    "metrics",
    "paired_ttest",
    "parse_label",
    "run_cli",
    "stratified_split",
    "tokenize",
    "train_gcn",
]
