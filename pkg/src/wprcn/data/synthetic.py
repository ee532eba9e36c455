"""Seeded synthetic classification benchmarks.

Three generators are available:

``sinusoid``
    Each class owns a set of per-dimension frequencies; phases are random,
    so the marginal distribution at any single timestep is the same for
    every class and only temporal structure separates them.
``ar``
    Second-order autoregressive processes with class-specific coefficients.
``drift``
    A noisy level that ramps by a class-dependent shift after
    ``drift_start``; the resulting stream is non-stationary.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .dataset import TsDataset

KINDS = ("sinusoid", "ar", "drift")


@dataclass(frozen=True)
class SyntheticSpec:
    kind: str = "sinusoid"
    classes: int = 3
    n: int = 2
    length: int = 64
    n_train: int = 60
    n_test: int = 60
    noise: float = 0.1
    seed: int = 0
    shift: float = 0.4
    rate: float = 0.05
    drift_start: float = 0.5

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}; expected one of {KINDS}")
        if self.classes < 2:
            raise ValueError("need at least two classes")
        if self.n < 1 or self.length < 2:
            raise ValueError("n must be >= 1 and length >= 2")
        if self.n_train < self.classes or self.n_test < 0:
            raise ValueError("n_train must cover every class")
        if self.noise < 0 or self.rate <= 0 or not 0 <= self.drift_start < 1:
            raise ValueError("noise >= 0, rate > 0 and drift_start in [0, 1) are required")

    def to_dict(self) -> dict:
        return asdict(self)


def drift_stream(
    length: int, start: int, shift: float, rate: float, noise: float, rng: np.random.Generator, base: float = 0.3
) -> np.ndarray:
    """Level ``base`` that moves towards ``base + shift`` from step ``start`` on.

    The ramp closes ``rate`` of the shift per step, so it completes after
    ``ceil(1 / rate)`` steps.
    """
    t = np.arange(length)
    ramp = np.clip((t - start) * rate, 0.0, 1.0)
    return base + shift * ramp + noise * rng.standard_normal(length)


def _sinusoid(c: int, spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    t = np.arange(spec.length) / spec.length
    out = np.empty((spec.n, spec.length))
    for d in range(spec.n):
        freq = 2.0 + 2.0 * c + 1.5 * d
        phase = rng.uniform(0, 2 * np.pi)
        out[d] = np.sin(2 * np.pi * freq * t + phase)
    return out + spec.noise * rng.standard_normal(out.shape)


def _ar(c: int, spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    # stable AR(2) pairs with distinct spectral peaks per class
    radius = 0.9
    out = np.empty((spec.n, spec.length))
    burn = 50
    for d in range(spec.n):
        angle = np.pi * (0.1 + 0.6 * (c + 0.5 * d) / spec.classes)
        a1, a2 = 2 * radius * np.cos(angle), -radius**2
        e = rng.standard_normal(spec.length + burn)
        x = np.zeros(spec.length + burn)
        for t in range(2, x.size):
            x[t] = a1 * x[t - 1] + a2 * x[t - 2] + e[t]
        out[d] = x[burn:]
    return out + spec.noise * rng.standard_normal(out.shape)


def _drift(c: int, spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    start = int(spec.drift_start * spec.length)
    shift = spec.shift * (c - (spec.classes - 1) / 2) / max(1, spec.classes - 1) * 2
    return np.stack(
        [drift_stream(spec.length, start, shift * (1 + 0.5 * d), spec.rate, spec.noise, rng, base=0.0) for d in range(spec.n)]
    )


_GENERATORS = {"sinusoid": _sinusoid, "ar": _ar, "drift": _drift}


def _split(spec: SyntheticSpec, size: int, rng: np.random.Generator, name: str) -> TsDataset:
    labels = np.arange(size) % spec.classes
    labels = labels[rng.permutation(size)]
    gen = _GENERATORS[spec.kind]
    series = [gen(int(c), spec, rng) for c in labels]
    return TsDataset(
        name=name,
        series=series,
        labels=labels,
        classes=[f"c{i}" for i in range(spec.classes)],
        meta={"synthetic": spec.to_dict()},
    )


def synthesize(spec: SyntheticSpec) -> tuple[TsDataset, TsDataset]:
    """Generate balanced ``(train, test)`` splits; raw values, not yet normalised."""
    train_rng, test_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(spec.seed).spawn(2))
    name = f"synthetic-{spec.kind}"
    return _split(spec, spec.n_train, train_rng, name), _split(spec, spec.n_test, test_rng, name)
