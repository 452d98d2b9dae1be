"""Soft-input soft-output sphere decoding with complexity-efficient
enumeration, plus the iterative MIMO link simulation around it."""

from .constellation import Constellation, build_gray_qam
from .prior import PriorTable, build_prior_table, symbol_prior
from .sphere import (Counters, LlrFrame, PreprocessedChannel, VARIANTS,
                     delta_channel, pruning_metric, qr_preprocess,
                     repeated_sd_detect, sts_detect)

__all__ = [
    "Constellation", "build_gray_qam",
    "PriorTable", "build_prior_table", "symbol_prior",
    "Counters", "LlrFrame", "PreprocessedChannel", "VARIANTS",
    "delta_channel", "pruning_metric", "qr_preprocess",
    "repeated_sd_detect", "sts_detect",
]
