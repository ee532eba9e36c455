"""In-memory labelled multivariate time-series collection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class TsDataset:
    """Labelled multivariate series.

    ``series[i]`` has shape ``(n, L_i)``.  After :func:`normalize_and_pad`
    every series shares one length and ``lengths`` keeps the true lengths
    so pooling can ignore the padded tail.
    """

    name: str
    series: list[np.ndarray]
    labels: np.ndarray
    classes: list[str]
    lengths: np.ndarray | None = None
    bounds: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.series = [np.asarray(s, dtype=np.float64) for s in self.series]
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.series) != len(self.labels):
            raise ValueError(f"{len(self.series)} series but {len(self.labels)} labels")
        if any(s.ndim != 2 for s in self.series):
            raise ValueError("each series must be 2-d (n, L)")
        if self.series and len({s.shape[0] for s in self.series}) != 1:
            raise ValueError("all series must have the same number of dimensions")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= len(self.classes)):
            raise ValueError("label outside the class vocabulary")
        if self.lengths is None:
            self.lengths = np.array([s.shape[1] for s in self.series], dtype=np.int64)
        else:
            self.lengths = np.asarray(self.lengths, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.series)

    @property
    def n(self) -> int:
        return self.series[0].shape[0]

    @property
    def equal_length(self) -> bool:
        return len({s.shape[1] for s in self.series}) == 1

    @property
    def length(self) -> int:
        if not self.equal_length:
            raise ValueError("series have unequal lengths; pad first")
        return self.series[0].shape[1]

    @property
    def X(self) -> np.ndarray:
        """Stacked array of shape ``(N, n, L)``."""
        return np.stack(self.series)

    @property
    def mask(self) -> np.ndarray:
        """Boolean ``(N, L)``; True on real (unpadded) timesteps."""
        return np.arange(self.length)[None, :] < self.lengths[:, None]

    def subset(self, index) -> "TsDataset":
        index = np.asarray(index, dtype=np.int64)
        return TsDataset(
            name=self.name,
            series=[self.series[i] for i in index],
            labels=self.labels[index],
            classes=list(self.classes),
            lengths=self.lengths[index],
            bounds=None if self.bounds is None else self.bounds.copy(),
            meta=dict(self.meta),
        )

    def of_class(self, label: int) -> "TsDataset":
        idx = np.flatnonzero(self.labels == label)
        if idx.size == 0:
            raise ValueError(f"class {label} has no samples in {self.name!r}")
        return self.subset(idx)

    def equals(self, other: "TsDataset") -> bool:
        """Exact value equality, NaN positions included."""
        return (
            self.classes == other.classes
            and np.array_equal(self.labels, other.labels)
            and len(self) == len(other)
            and all(a.shape == b.shape and np.array_equal(a, b, equal_nan=True) for a, b in zip(self.series, other.series))
        )
