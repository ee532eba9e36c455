"""Min-max normalisation to the unit cube, tail padding and splitting."""

from __future__ import annotations

import logging

import numpy as np

from .dataset import TsDataset

log = logging.getLogger(__name__)


def feature_bounds(dataset: TsDataset) -> np.ndarray:
    """Per-feature ``[min, max]`` over the true-length region, NaNs ignored."""
    lo = np.full(dataset.n, np.inf)
    hi = np.full(dataset.n, -np.inf)
    for s, length in zip(dataset.series, dataset.lengths):
        part = s[:, :length]
        with np.errstate(all="ignore"):
            lo = np.fmin(lo, np.nanmin(part, axis=1, initial=np.inf))
            hi = np.fmax(hi, np.nanmax(part, axis=1, initial=-np.inf))
    if not np.all(np.isfinite(lo)):
        raise ValueError("a feature has no observed values in the training split")
    return np.stack([lo, hi], axis=1)


def _apply(dataset: TsDataset, bounds: np.ndarray, target_len: int) -> TsDataset:
    lo, hi = bounds[:, 0][:, None], bounds[:, 1][:, None]
    span = hi - lo
    const = (span == 0)[:, 0]
    out, lengths = [], []
    for i, (s, length) in enumerate(zip(dataset.series, dataset.lengths)):
        length = int(length)
        if length > target_len:
            log.warning("%s: case %d truncated from %d to %d steps", dataset.name, i, length, target_len)
            length = target_len
        part = s[:, :length]
        with np.errstate(invalid="ignore", divide="ignore"):
            scaled = np.where(const[:, None], 0.5, (part - lo) / np.where(span == 0, 1.0, span))
        # missing values sit at the training minimum
        scaled = np.clip(np.nan_to_num(scaled, nan=0.0), 0.0, 1.0)
        padded = np.zeros((dataset.n, target_len))
        padded[:, :length] = scaled
        out.append(padded)
        lengths.append(length)
    return TsDataset(
        name=dataset.name,
        series=out,
        labels=dataset.labels.copy(),
        classes=list(dataset.classes),
        lengths=np.array(lengths, dtype=np.int64),
        bounds=bounds.copy(),
        meta=dict(dataset.meta),
    )


def normalize_and_pad(train: TsDataset, test: TsDataset | None = None):
    """Scale both splits into ``[0, 1]`` with bounds taken from ``train`` only.

    Series are zero-padded at the tail to the longest training length; test
    values outside the training range are clipped.  A constant feature maps
    to 0.5.  Returns ``train`` alone or ``(train, test)``.
    """
    bounds = feature_bounds(train)
    for f in np.flatnonzero(bounds[:, 0] == bounds[:, 1]):
        log.warning("%s: feature %d is constant in the training split; mapped to 0.5", train.name, f)
    target = int(train.lengths.max())
    ntrain = _apply(train, bounds, target)
    if test is None:
        return ntrain
    if test.n != train.n:
        raise ValueError(f"test split has {test.n} dimensions, train has {train.n}")
    if test.classes != train.classes:
        raise ValueError("train and test class vocabularies differ")
    return ntrain, _apply(test, bounds, target)


def stratified_split(dataset: TsDataset, fraction: float, seed: int = 0) -> tuple[TsDataset, TsDataset]:
    """Split off ``fraction`` of every class (at least one case per class when possible)."""
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    held, kept = [], []
    for c in np.unique(dataset.labels):
        idx = np.flatnonzero(dataset.labels == c)
        idx = idx[rng.permutation(idx.size)]
        k = int(round(fraction * idx.size))
        if idx.size > 1:
            k = min(max(k, 1), idx.size - 1)
        else:
            k = 0
        held.extend(idx[:k])
        kept.extend(idx[k:])
    return dataset.subset(np.sort(kept)), dataset.subset(np.sort(held))
