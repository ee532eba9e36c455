"""Raw-series branches: a causal fully convolutional network with
squeeze-and-excitation, and an LSTM summariser."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .aptcn import last_step
from .tensor import LSTM, BatchNorm1d, CausalConv1d, Dropout, Module, Tensor, global_avg_pool, stack
from .tensor.nn import glorot_uniform


def prefix_mean_matrix(length: int) -> np.ndarray:
    """(L, L) matrix M with (x @ M)[..., t] = mean(x[..., :t + 1])."""
    t = np.arange(length)
    return np.where(t[:, None] <= t[None, :], 1.0 / (t[None, :] + 1.0), 0.0)


class SEBlock(Module):
    """omega = logistic(W2 relu(W1 GAP(x))); output is x scaled per channel.

    The bottleneck width is ``ceil(channels / reduction)``.  With
    ``causal=True`` the global average is replaced by a running mean over
    steps ``0..t``, so the score at ``t`` never sees later inputs; at the
    final real step both variants agree.
    """

    def __init__(self, channels: int, rng: np.random.Generator, reduction: int = 16, causal: bool = False):
        if reduction < 1:
            raise ValueError("reduction ratio must be >= 1")
        self.channels = channels
        self.causal = causal
        self.hidden = max(1, math.ceil(channels / reduction))
        self.w1 = glorot_uniform(rng, (channels, self.hidden), channels, self.hidden)
        self.w2 = glorot_uniform(rng, (self.hidden, channels), self.hidden, channels)

    def score(self, x: Tensor, lengths=None) -> Tensor:
        """(B, C) scores, or (B, C, L) per-step scores when causal."""
        if not self.causal:
            return ((global_avg_pool(x, lengths) @ self.w1).relu() @ self.w2).sigmoid()
        running = (x @ Tensor(prefix_mean_matrix(x.shape[2]))).transpose(0, 2, 1)
        return ((running @ self.w1).relu() @ self.w2).sigmoid().transpose(0, 2, 1)

    def forward(self, x: Tensor, lengths=None) -> Tensor:
        omega = self.score(x, lengths)
        if not self.causal:
            omega = omega.reshape(omega.shape[0], omega.shape[1], 1)
        return x * omega


@dataclass(frozen=True)
class CfcnConfig:
    channels: tuple = (128, 256, 128)
    kernels: tuple = (8, 5, 3)
    reduction: int = 16
    se_blocks: int = 2
    causal_se: bool = True

    def __post_init__(self):
        if len(self.channels) != len(self.kernels) or not self.channels:
            raise ValueError("channels and kernels must be equal-length, non-empty tuples")
        if not 0 <= self.se_blocks <= len(self.channels):
            raise ValueError("se_blocks out of range")

    def to_dict(self) -> dict:
        return asdict(self)


class ConvBlock(Module):
    def __init__(
        self, c_in: int, c_out: int, kernel: int, rng: np.random.Generator, se: bool, reduction: int, causal: bool
    ):
        self.conv = CausalConv1d(c_in, c_out, kernel, rng)
        self.bn = BatchNorm1d(c_out)
        self.se = SEBlock(c_out, rng, reduction, causal) if se else None

    def forward(self, x: Tensor, lengths=None) -> Tensor:
        out = self.bn(self.conv(x)).relu()
        return out if self.se is None else self.se(out, lengths)


class CFCN(Module):
    """Causal conv -> batchnorm -> ReLU (-> SE) blocks, then masked GAP.

    The SE blocks use running-mean scores by default so the whole stack
    stays causal up to the final pooling.
    """

    def __init__(self, n_in: int, config: CfcnConfig, rng: np.random.Generator):
        self.config = config
        widths = (n_in,) + tuple(config.channels)
        self.blocks = [
            ConvBlock(widths[i], widths[i + 1], k, rng, i < config.se_blocks, config.reduction, config.causal_se)
            for i, k in enumerate(config.kernels)
        ]

    @property
    def out_features(self) -> int:
        return self.config.channels[-1]

    def sequence(self, x: Tensor, lengths=None) -> Tensor:
        for block in self.blocks:
            x = block(x, lengths)
        return x

    def forward(self, x: Tensor, lengths=None) -> Tensor:
        return global_avg_pool(self.sequence(x, lengths), lengths)


class LSTMBranch(Module):
    """LSTM over time (channels stay channels), final real-step state, dropout."""

    def __init__(self, n_in: int, hidden: int, rng: np.random.Generator, dropout: float = 0.2):
        self.lstm = LSTM(n_in, hidden, rng)
        self.drop = Dropout(dropout, rng)

    @property
    def out_features(self) -> int:
        return self.lstm.hidden_size

    def forward(self, x: Tensor, lengths=None) -> Tensor:
        """``x`` is (B, n, L) like the other branches."""
        states = self.lstm.run(x.transpose(0, 2, 1))
        if lengths is None:
            h = states[-1]
        else:
            h = last_step(stack(states, axis=2), lengths)
        return self.drop(h)


def cfcn_branch(x, model: CFCN, lengths=None) -> Tensor:
    x = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))
    return model(x, lengths)


def lstm_branch(x, model: LSTMBranch, lengths=None) -> Tensor:
    x = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))
    return model(x, lengths)
