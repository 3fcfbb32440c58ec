"""Python access to the secovarc C++ core."""

from ._core import (
    ArcInstance,
    BundleError,
    DataError,
    evaluate_model,
    gen_synthetic_arc,
    parse_arc_tsv,
    predict,
    read_bundle,
    run_cli,
    synthetic_oracle_label,
    tokenize,
    write_arc_tsv,
    write_bundle,
)

__all__ = [
    "ArcInstance",
    "BundleError",
    "DataError",
    "evaluate_model",
    "gen_synthetic_arc",
    "parse_arc_tsv",
    "predict",
    "read_bundle",
    "run_cli",
    "synthetic_oracle_label",
    "tokenize",
    "write_arc_tsv",
    "write_bundle",
]
