"""Dataset container, ``.ts`` I/O, normalisation and synthetic generators."""

from .dataset import TsDataset
from .preprocess import feature_bounds, normalize_and_pad, stratified_split
from .synthetic import KINDS, SyntheticSpec, drift_stream, synthesize
from .tsfile import TsFormatError, dumps_ts, parse_ts, parse_ts_string, read_ts, save_ts, write_ts

__all__ = [
    "TsDataset",
    "feature_bounds",
    "normalize_and_pad",
    "stratified_split",
    "KINDS",
    "SyntheticSpec",
    "drift_stream",
    "synthesize",
    "TsFormatError",
    "dumps_ts",
    "parse_ts",
    "parse_ts_string",
    "read_ts",
    "save_ts",
    "write_ts",
]
