"""Layers built on :mod:`wprcn.tensor.core`.

Sequence layers use batch-first layouts: convolutions take
``(batch, channels, L)`` and recurrent layers take ``(batch, L, features)``.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

from .core import (
    DTYPE,
    Tensor,
    ShapeError,
    concat,
    conv1d_causal,
    stack,
    unbind,
)


class Parameter(Tensor):
    """A leaf tensor that optimizers update."""

    __slots__ = ()

    def __init__(self, data):
        super().__init__(data, requires_grad=True)


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> Parameter:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Parameter(rng.uniform(-limit, limit, size=shape))


class Module:
    training: bool = True

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def _children(self) -> Iterator[tuple[str, object]]:
        for name, value in vars(self).items():
            if isinstance(value, (Parameter, Module)):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, (Parameter, Module)):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for name, value in self._children():
            full = f"{prefix}{name}"
            if isinstance(value, Parameter):
                yield full, value
            else:
                yield from value.named_parameters(full + ".")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def modules(self) -> Iterator["Module"]:
        yield self
        for _, value in self._children():
            if isinstance(value, Module):
                yield from value.modules()

    def buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name in getattr(self, "_buffer_names", ()):
            yield f"{prefix}{name}", getattr(self, name)
        for name, value in self._children():
            if isinstance(value, Module):
                yield from value.buffers(f"{prefix}{name}.")

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: p.data.copy() for name, p in self.named_parameters()}
        state.update({name: np.array(b, dtype=DTYPE) for name, b in self.buffers()})
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        buffer_owners = {}
        for m_name, m in self._named_modules():
            for b in getattr(m, "_buffer_names", ()):
                buffer_owners[f"{m_name}{b}"] = (m, b)
        expected = set(params) | set(buffer_owners)
        missing = expected - set(state)
        if missing:
            raise KeyError(f"state is missing entries: {sorted(missing)}")
        for name, p in params.items():
            value = np.asarray(state[name], dtype=DTYPE)
            if value.shape != p.shape:
                raise ShapeError(f"{name}: expected {p.shape}, got {value.shape}")
            p.data = value.copy()
        for name, (m, b) in buffer_owners.items():
            setattr(m, b, np.asarray(state[name], dtype=DTYPE).copy())

    def _named_modules(self, prefix: str = "") -> Iterator[tuple[str, "Module"]]:
        yield prefix, self
        for name, value in self._children():
            if isinstance(value, Module):
                yield from value._named_modules(f"{prefix}{name}.")

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


class Linear(Module):
    kind = "linear"

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True):
        self.in_features = in_features
        self.out_features = out_features
        self.weight = glorot_uniform(rng, (in_features, out_features), in_features, out_features)
        self.bias = Parameter(np.zeros(out_features)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_features:
            raise ShapeError(f"Linear expects {self.in_features} features, got {x.shape[-1]}")
        y = x @ self.weight
        return y + self.bias if self.bias is not None else y


class CausalConv1d(Module):
    kind = "conv1d-causal"

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        rng: np.random.Generator,
        dilation: int = 1,
        bias: bool = True,
    ):
        if kernel_size < 1:
            raise ValueError("kernel_size must be >= 1")
        if int(dilation) != dilation or dilation < 1:
            raise ValueError(f"dilation must be a positive integer, got {dilation}")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.dilation = int(dilation)
        fan_in, fan_out = in_channels * kernel_size, out_channels * kernel_size
        self.weight = glorot_uniform(rng, (out_channels, in_channels, kernel_size), fan_in, fan_out)
        self.bias = Parameter(np.zeros(out_channels)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return conv1d_causal(x, self.weight, self.bias, self.dilation)


class BatchNorm1d(Module):
    """Normalise each channel of ``(batch, ch)`` or ``(batch, ch, L)`` input."""

    kind = "batchnorm"
    _buffer_names = ("running_mean", "running_var")

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.gamma = Parameter(np.ones(channels))
        self.beta = Parameter(np.zeros(channels))
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[0] == 0:
            raise ValueError("batchnorm on an empty batch")
        axes = (0,) if x.ndim == 2 else (0, 2)
        view = (1, self.channels) if x.ndim == 2 else (1, self.channels, 1)
        if self.training:
            mean = x.mean(axis=axes, keepdims=True)
            centered = x - mean
            var = (centered * centered).mean(axis=axes, keepdims=True)
            count = x.size // self.channels
            unbiased = var.data.reshape(-1) * count / max(count - 1, 1)
            self.running_mean = (1 - self.momentum) * self.running_mean + self.momentum * mean.data.reshape(-1)
            self.running_var = (1 - self.momentum) * self.running_var + self.momentum * unbiased
            xhat = centered / (var + self.eps) ** 0.5
        else:
            mean = self.running_mean.reshape(view)
            std = np.sqrt(self.running_var.reshape(view) + self.eps)
            xhat = (x - Tensor(mean)) / Tensor(std)
        return xhat * self.gamma.reshape(view) + self.beta.reshape(view)


class Dropout(Module):
    """Inverted dropout: survivors are scaled by ``1 / (1 - p)`` at train time."""

    def __init__(self, p: float, rng: np.random.Generator):
        if not 0.0 <= p < 1.0:
            raise ValueError("dropout probability must be in [0, 1)")
        self.p = p
        self.rng = rng

    def forward(self, x: Tensor) -> Tensor:
        if not self.training or self.p == 0.0:
            return x
        keep = self.rng.random(x.shape) >= self.p
        return x * Tensor(keep / (1.0 - self.p))


class GRU(Module):
    """Single-layer gated recurrent unit (gate order: reset, update, candidate).

    r = s(x Wr + h Ur + b), z = s(x Wz + h Uz + b),
    n = tanh(x Wn + b_in + r * (h Un + b_hn)), h' = (1 - z) * n + z * h.
    """

    kind = "gru"

    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator):
        self.input_size = input_size
        self.hidden_size = hidden_size
        h = hidden_size
        self.w_ih = glorot_uniform(rng, (input_size, 3 * h), input_size, h)
        self.w_hh = glorot_uniform(rng, (h, 3 * h), h, h)
        self.b_ih = Parameter(np.zeros(3 * h))
        self.b_hh = Parameter(np.zeros(3 * h))

    def forward(self, x, h0: Tensor | None = None) -> tuple[Tensor, Tensor]:
        """Run over ``x`` of shape (L, n_in) or (batch, L, n_in).

        Returns ``(outputs, h_last)`` with outputs holding every hidden state.
        """
        squeeze = x.ndim == 2
        if squeeze:
            x = x.reshape(1, *x.shape)
            h0 = None if h0 is None else h0.reshape(1, -1)
        steps = self.step_inputs(x)
        states = self.run(steps, h0)
        ys = stack(states, axis=1)
        if squeeze:
            return ys.reshape(ys.shape[1:]), states[-1].reshape(-1)
        return ys, states[-1]

    def step_inputs(self, x: Tensor) -> list[Tensor]:
        if x.ndim != 3 or x.shape[2] != self.input_size:
            raise ShapeError(f"GRU expects (batch, L, {self.input_size}) input, got {x.shape}")
        if x.shape[1] == 0:
            raise ValueError("GRU input has length 0")
        projected = x @ self.w_ih + self.b_ih
        return unbind(projected, axis=1)

    def run(self, projected_steps: list[Tensor], h0: Tensor | None = None) -> list[Tensor]:
        """Recur over per-step input projections; returns all hidden states."""
        h_size = self.hidden_size
        batch = projected_steps[0].shape[0]
        h = h0 if h0 is not None else Tensor(np.zeros((batch, h_size)))
        states = []
        for gi in projected_steps:
            gh = h @ self.w_hh + self.b_hh
            rz = (gi[:, : 2 * h_size] + gh[:, : 2 * h_size]).sigmoid()
            r, z = rz[:, :h_size], rz[:, h_size:]
            n = (gi[:, 2 * h_size :] + r * gh[:, 2 * h_size :]).tanh()
            h = n + z * (h - n)
            states.append(h)
        return states


class LSTM(Module):
    """Single-layer long short-term memory (gate order: input, forget, cell, output)."""

    kind = "lstm"

    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator):
        self.input_size = input_size
        self.hidden_size = hidden_size
        h = hidden_size
        self.w_ih = glorot_uniform(rng, (input_size, 4 * h), input_size, h)
        self.w_hh = glorot_uniform(rng, (h, 4 * h), h, h)
        self.bias = Parameter(np.zeros(4 * h))

    def forward(self, x, state0: tuple[Tensor, Tensor] | None = None) -> tuple[Tensor, Tensor]:
        squeeze = x.ndim == 2
        if squeeze:
            x = x.reshape(1, *x.shape)
            if state0 is not None:
                state0 = (state0[0].reshape(1, -1), state0[1].reshape(1, -1))
        states = self.run(x, state0)
        ys = stack(states, axis=1)
        if squeeze:
            return ys.reshape(ys.shape[1:]), states[-1].reshape(-1)
        return ys, states[-1]

    def run(self, x: Tensor, state0: tuple[Tensor, Tensor] | None = None) -> list[Tensor]:
        if x.ndim != 3 or x.shape[2] != self.input_size:
            raise ShapeError(f"LSTM expects (batch, L, {self.input_size}) input, got {x.shape}")
        if x.shape[1] == 0:
            raise ValueError("LSTM input has length 0")
        hs = self.hidden_size
        batch = x.shape[0]
        if state0 is None:
            h = Tensor(np.zeros((batch, hs)))
            c = Tensor(np.zeros((batch, hs)))
        else:
            h, c = state0
        projected = unbind(x @ self.w_ih + self.bias, axis=1)
        states = []
        for gi in projected:
            gates = gi + h @ self.w_hh
            ifo = concat([gates[:, : 2 * hs], gates[:, 3 * hs :]], axis=1).sigmoid()
            i, f, o = ifo[:, :hs], ifo[:, hs : 2 * hs], ifo[:, 2 * hs :]
            g = gates[:, 2 * hs : 3 * hs].tanh()
            c = f * c + i * g
            h = o * c.tanh()
            states.append(h)
        return states
