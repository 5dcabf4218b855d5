"""Concave-curve low-light enhancement.

Thin Python bindings over the C++ core. Image arrays are float64 in [0, 1]
with shape H×W×C (or N×H×W×C); curves are C×P lookup tables. The training and
inference entry points mirror the ``sacc`` command-line tool and return its
JSON reports as dictionaries.
"""

from ._sacc import (
    ConfigError,
    ContractViolation,
    DimensionError,
    Error,
    InputError,
    IoError,
    analyze_crf,
    analyze_crf_file,
    apply_curve,
    build_codebook,
    build_curve,
    curve_is_valid,
    darken,
    default_config,
    enhance,
    evaluate,
    generate_corpus,
    integral_operator,
    make_puzzle,
    predict_curves,
    resolve_config,
    synthetic_concave_crfs,
    train,
)

__all__ = [
    "ConfigError",
    "ContractViolation",
    "DimensionError",
    "Error",
    "InputError",
    "IoError",
    "analyze_crf",
    "analyze_crf_file",
    "apply_curve",
    "build_codebook",
    "build_curve",
    "curve_is_valid",
    "darken",
    "default_config",
    "enhance",
    "evaluate",
    "generate_corpus",
    "integral_operator",
    "make_puzzle",
    "predict_curves",
    "resolve_config",
    "synthetic_concave_crfs",
    "train",
]
