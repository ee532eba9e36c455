"""Channel-attention probabilistic temporal convolutional network (APTCN).

Pipeline over a (B, C, L) feature map: pointwise channel pruning, efficient
channel attention (one channel-axis convolution over the per-channel
averages, squashed by a logistic), then a stack of dilated causal residual
blocks.  The summary vector is the last block's output at the final real
timestep of each sample.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .tensor import CausalConv1d, Dropout, Module, ShapeError, Tensor, concat, global_avg_pool
from .tensor.nn import glorot_uniform

TCN_KERNELS = (3, 5, 7, 11)
ECA_KERNELS = (1, 3, 5)
LEVEL_CHANNELS = (20, 25)
DEPTHS = range(3, 9)


@dataclass(frozen=True)
class AptcnConfig:
    c_in: int = 15
    c_out: int = 5
    eca_kernel: int = 3
    kernel: int = 3
    depth: int = 3
    channels: int = 20
    dropout: float = 0.2
    eca: bool = True
    strict: bool = True

    def __post_init__(self):
        if self.c_in < 1 or self.c_out < 1:
            raise ValueError("channel counts must be positive")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")
        if self.eca_kernel % 2 == 0:
            raise ValueError("ECA kernel must be odd for symmetric padding")
        if self.strict:
            if self.eca_kernel not in ECA_KERNELS:
                raise ValueError(f"ECA kernel {self.eca_kernel} not in {ECA_KERNELS}")
            if self.kernel not in TCN_KERNELS:
                raise ValueError(f"TCN kernel {self.kernel} not in {TCN_KERNELS}")
            if self.depth not in DEPTHS:
                raise ValueError(f"depth {self.depth} outside [3, 8]")
            if self.channels not in LEVEL_CHANNELS:
                raise ValueError(f"level channels {self.channels} not in {LEVEL_CHANNELS}")

    def to_dict(self) -> dict:
        return asdict(self)


def receptive_field(kernel: int, depth: int) -> int:
    """Inputs seen by the last output: two convolutions per level, dilation 2^i."""
    return 1 + sum(2 * (kernel - 1) * 2**i for i in range(depth))


def last_step(x: Tensor, lengths=None) -> Tensor:
    """(B, C, L) -> (B, C) at each sample's final real timestep."""
    if lengths is None:
        return x[:, :, -1]
    lengths = np.asarray(lengths, dtype=np.intp)
    return x[np.arange(x.shape[0]), :, lengths - 1]


class ChannelPrune(Module):
    """Learnable pointwise projection from ``c_in`` to ``c_out`` channels."""

    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator):
        self.c_in = c_in
        self.conv = CausalConv1d(c_in, c_out, 1, rng)

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 3 or x.shape[1] != self.c_in:
            raise ShapeError(f"channel pruning expects (B, {self.c_in}, L), got {x.shape}")
        return self.conv(x)


class ECA(Module):
    """a = logistic(conv_k(GAP(x))) over the channel axis; output x * a."""

    def __init__(self, kernel: int, rng: np.random.Generator):
        if kernel < 1 or kernel % 2 == 0:
            raise ValueError("ECA kernel must be a positive odd integer")
        self.kernel = kernel
        self.weight = glorot_uniform(rng, (kernel,), kernel, 1)

    def score(self, x: Tensor, lengths=None) -> Tensor:
        pooled = global_avg_pool(x, lengths)  # (B, C)
        pad = (self.kernel - 1) // 2
        if pad:
            zeros = Tensor(np.zeros((pooled.shape[0], pad)))
            pooled = concat([zeros, pooled, zeros], axis=1)
        channels = x.shape[1]
        windows = pooled[:, np.arange(channels)[:, None] + np.arange(self.kernel)[None, :]]
        return (windows * self.weight).sum(axis=2).sigmoid()

    def forward(self, x: Tensor, lengths=None) -> tuple[Tensor, Tensor]:
        a = self.score(x, lengths)
        return x * a.reshape(a.shape[0], a.shape[1], 1), a


class TemporalBlock(Module):
    """Two dilated causal convolutions (ReLU, dropout) plus a residual path."""

    def __init__(self, c_in: int, c_out: int, kernel: int, dilation: int, dropout: float, rng: np.random.Generator):
        self.conv1 = CausalConv1d(c_in, c_out, kernel, rng, dilation=dilation)
        self.conv2 = CausalConv1d(c_out, c_out, kernel, rng, dilation=dilation)
        self.drop1 = Dropout(dropout, rng)
        self.drop2 = Dropout(dropout, rng)
        self.downsample = CausalConv1d(c_in, c_out, 1, rng) if c_in != c_out else None

    def forward(self, x: Tensor) -> Tensor:
        out = self.drop1(self.conv1(x).relu())
        out = self.drop2(self.conv2(out).relu())
        res = x if self.downsample is None else self.downsample(x)
        return out + res


class TCN(Module):
    def __init__(self, c_in: int, channels: int, depth: int, kernel: int, dropout: float, rng: np.random.Generator):
        self.kernel = kernel
        self.blocks = [
            TemporalBlock(c_in if i == 0 else channels, channels, kernel, 2**i, dropout, rng) for i in range(depth)
        ]

    @property
    def receptive_field(self) -> int:
        return receptive_field(self.kernel, len(self.blocks))

    def forward(self, x: Tensor) -> Tensor:
        for block in self.blocks:
            x = block(x)
        return x


class APTCN(Module):
    def __init__(self, config: AptcnConfig, rng: np.random.Generator):
        self.config = config
        self.prune = ChannelPrune(config.c_in, config.c_out, rng)
        self.eca = ECA(config.eca_kernel, rng) if config.eca else None
        self.tcn = TCN(config.c_out, config.channels, config.depth, config.kernel, config.dropout, rng)

    @property
    def out_features(self) -> int:
        return self.config.channels

    def sequence(self, x: Tensor, lengths=None) -> Tensor:
        """Full (B, channels, L) output of the block stack."""
        p = self.prune(x)
        if self.eca is not None:
            p, _ = self.eca(p, lengths)
        return self.tcn(p)

    def forward(self, x: Tensor, lengths=None) -> Tensor:
        return last_step(self.sequence(x, lengths), lengths)


def aptcn_forward(P, model: APTCN, lengths=None) -> Tensor:
    """Prune, attend and convolve ``P`` (B, C, L); returns the (B, channels) summary."""
    P = P if isinstance(P, Tensor) else Tensor(np.asarray(P, dtype=np.float64))
    return model(P, lengths)


def attention_scores(model: APTCN, P, lengths=None) -> np.ndarray | None:
    """Per-sample ECA scores (B, c_out), or None when attention is disabled."""
    if model.eca is None:
        return None
    P = P if isinstance(P, Tensor) else Tensor(np.asarray(P, dtype=np.float64))
    return model.eca.score(model.prune(P), lengths).data


__all__ = [
    "APTCN",
    "AptcnConfig",
    "ChannelPrune",
    "ECA",
    "TCN",
    "TemporalBlock",
    "aptcn_forward",
    "attention_scores",
    "last_step",
    "receptive_field",
]
