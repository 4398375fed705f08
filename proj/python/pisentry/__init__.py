"""Statistical personal-information leak detection for mobile HTTP traffic.

Thin wrapper around the compiled ``pisentry._core`` extension.
"""

from pisentry._core import (  # noqa: F401
    FEATURE_NAMES,
    DomainError,
    ForestModel,
    IoError,
    PairTable,
    ParseError,
    RuleSet,
    SchemaError,
    TrafficRecord,
    __version__,
    apply_rules,
    build_table,
    compute_features,
    evaluate,
    feature_matrix,
    generate_corpus,
    label_dataset,
    load_ground_truth,
    match_blacklist,
    parse_http_request,
    parse_record_line,
    percent_decode,
    propagate,
    read_corpus,
    stratified_split,
    train_forest,
    value_entropy,
)

__all__ = [
    "FEATURE_NAMES",
    "DomainError",
    "ForestModel",
    "IoError",
    "PairTable",
    "ParseError",
    "RuleSet",
    "SchemaError",
    "TrafficRecord",
    "__version__",
    "apply_rules",
    "build_table",
    "compute_features",
    "evaluate",
    "feature_matrix",
    "generate_corpus",
    "label_dataset",
    "load_ground_truth",
    "match_blacklist",
    "parse_http_request",
    "parse_record_line",
    "percent_decode",
    "propagate",
    "read_corpus",
    "stratified_split",
    "train_forest",
    "value_entropy",
]
