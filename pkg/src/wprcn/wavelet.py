"""Streaming wavelet density estimation with radial B-spline scaling functions.

A :class:`DensityState` keeps one weight column per receptive field
(forgetting factor) ``alpha``.  Each update mixes the scaling-function
vector of the new point into every column,

    w[:, g] <- (1 - alpha_g) * w[:, g] + alpha_g * phi(x),

and the density in column ``g`` is ``w[:, g] . phi(x)``.

Columns are stored as ``scale[g] * v[:, g]`` so the decay is a single
multiply on ``scale`` and an update only writes the grid points in the
support of ``phi(x)``.
"""

from __future__ import annotations

import itertools
import math
from typing import Iterable, Sequence

import numpy as np

from .tensor import Tensor

DEFAULT_ALPHAS: tuple[float, ...] = (1.0, 1 / 10, 1 / 100, 1 / 500, 1 / 1000)
ORDERS = (2, 3, 4)
_MARGIN = {2: 1, 3: 1, 4: 2}
# renormalise a lazily-decayed column before its scale underflows
_RESCALE_BELOW = 1e-150


def margin(m: int) -> int:
    """Translation margin u beyond [0, 2**j0]: 1 for linear/quadratic, 2 for cubic."""
    try:
        return _MARGIN[m]
    except KeyError:
        raise ValueError(f"B-spline order must be one of {ORDERS}, got {m}") from None


def bspline_phi(x, m: int) -> np.ndarray:
    """Cardinal B-spline of order ``m`` (support [0, m]) in closed form."""
    margin(m)
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    if m == 2:
        b = (x >= 0) & (x < 1)
        out[b] = x[b]
        b = (x >= 1) & (x < 2)
        out[b] = 2 - x[b]
    elif m == 3:
        b = (x >= 0) & (x < 1)
        out[b] = 0.5 * x[b] ** 2
        b = (x >= 1) & (x < 2)
        out[b] = 0.75 - (x[b] - 1.5) ** 2
        b = (x >= 2) & (x < 3)
        out[b] = 0.5 * (x[b] - 3) ** 2
    else:
        b = (x >= 0) & (x < 1)
        out[b] = x[b] ** 3 / 6
        b = (x >= 1) & (x < 2)
        xb = x[b]
        out[b] = (-3 * xb**3 + 12 * xb**2 - 12 * xb + 4) / 6
        b = (x >= 2) & (x < 3)
        xb = x[b]
        out[b] = (3 * xb**3 - 24 * xb**2 + 60 * xb - 44) / 6
        b = (x >= 3) & (x < 4)
        out[b] = (4 - x[b]) ** 3 / 6
    return out


def bspline_dphi(x, m: int) -> np.ndarray:
    """Derivative of :func:`bspline_phi` (one-sided at knots, from the right)."""
    margin(m)
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    if m == 2:
        out[(x >= 0) & (x < 1)] = 1.0
        out[(x >= 1) & (x < 2)] = -1.0
    elif m == 3:
        b = (x >= 0) & (x < 1)
        out[b] = x[b]
        b = (x >= 1) & (x < 2)
        out[b] = -2 * (x[b] - 1.5)
        b = (x >= 2) & (x < 3)
        out[b] = x[b] - 3
    else:
        b = (x >= 0) & (x < 1)
        out[b] = x[b] ** 2 / 2
        b = (x >= 1) & (x < 2)
        xb = x[b]
        out[b] = (-9 * xb**2 + 24 * xb - 12) / 6
        b = (x >= 2) & (x < 3)
        xb = x[b]
        out[b] = (9 * xb**2 - 48 * xb + 60) / 6
        b = (x >= 3) & (x < 4)
        out[b] = -((4 - x[b]) ** 2) / 2
    return out


def radial_phi(x, j0: int, k, m: int) -> float:
    """Radial scaling function 2^(n j0 / 2) N_m(||2^j0 x - k|| + m/2)."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    k = np.atleast_1d(np.asarray(k, dtype=np.float64))
    n = x.shape[0]
    r = np.linalg.norm(2.0**j0 * x - k)
    return float(2.0 ** (n * j0 / 2) * bspline_phi(r + m / 2, m))


def translation_grid(j0: int, n: int, m: int) -> np.ndarray:
    """All translation vectors k, lexicographically ordered, shape (l, n)."""
    u = margin(m)
    axis = range(-u, 2**j0 + u + 1)
    return np.array(list(itertools.product(axis, repeat=n)), dtype=np.int64).reshape(-1, n)


class DensityState:
    """Multi-receptive-field wavelet density estimate for one (m, j0) pair.

    ``schedule="harmonic"`` replaces every alpha by 1/t at update t, which
    makes each column the running arithmetic mean of phi(X_i).
    """

    def __init__(
        self,
        m: int,
        j0: int,
        n: int,
        alphas: Sequence[float] = DEFAULT_ALPHAS,
        schedule: str = "fixed",
    ):
        if j0 < 0 or int(j0) != j0:
            raise ValueError(f"resolution j0 must be a non-negative integer, got {j0}")
        if not 1 <= n <= 4:
            raise ValueError(f"input dimension must be in 1..4, got {n}")
        alphas = tuple(float(a) for a in alphas)
        if not alphas:
            raise ValueError("at least one receptive field is required")
        if any(not 0.0 < a <= 1.0 for a in alphas):
            raise ValueError("every alpha must lie in (0, 1]")
        if any(b >= a for a, b in zip(alphas, alphas[1:])):
            raise ValueError("alphas must be strictly decreasing")
        if schedule not in ("fixed", "harmonic"):
            raise ValueError(f"unknown schedule {schedule!r}")
        self.m = int(m)
        self.u = margin(self.m)
        self.j0 = int(j0)
        self.n = int(n)
        self.alphas = np.array(alphas)
        self.schedule = schedule
        self.side = 2**self.j0 + 2 * self.u + 1
        self.grid = translation_grid(self.j0, self.n, self.m)
        self.scale_factor = 2.0 ** (self.n * self.j0 / 2)
        self._strides = self.side ** np.arange(self.n - 1, -1, -1)
        self._offsets = np.array(list(itertools.product(range(self.m + 1), repeat=self.n))).reshape(-1, self.n)
        self._v = np.zeros((len(self.grid), len(self.alphas)))
        self._scale = np.ones(len(self.alphas))
        # grid indices written by the last full replacement of each column
        self._support: list[np.ndarray | None] = [np.empty(0, dtype=np.intp)] * len(self.alphas)
        self.update_count = 0
        self.last_update_touched = 0

    # -- geometry --------------------------------------------------------------

    @property
    def n_points(self) -> int:
        return len(self.grid)

    @property
    def gamma(self) -> int:
        return len(self.alphas)

    @property
    def w(self) -> np.ndarray:
        """Materialised weight matrix, shape (l, gamma)."""
        return self._v * self._scale

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1:] != (self.n,):
            raise ValueError(f"expected points of dimension {self.n}, got shape {x.shape}")
        return np.clip(x, 0.0, 1.0)

    def _support_of(self, x: np.ndarray):
        """Candidate grid indices and radii for points ``x`` of shape (N, n).

        Returns ``idx`` (N, C), ``radius`` (N, C), ``diff`` (N, C, n) and a
        validity mask; C = (m + 1)^n is the most the support can hold.
        """
        c = (2.0**self.j0) * x
        base = np.ceil(c - self.m / 2.0).astype(np.int64)
        k = base[:, None, :] + self._offsets[None, :, :]
        diff = c[:, None, :] - k
        radius = np.sqrt((diff * diff).sum(axis=-1))
        inside = np.all((k >= -self.u) & (k <= 2**self.j0 + self.u), axis=-1)
        valid = inside & (radius < self.m / 2.0)
        idx = ((k + self.u) * self._strides).sum(axis=-1)
        idx = np.where(valid, idx, 0)
        return idx, radius, diff, valid

    def phi_sparse(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Nonzero entries of the scaling-function vector: (indices, values)."""
        x = self._check(x).reshape(1, self.n)
        idx, radius, _, valid = self._support_of(x)
        vals = self.scale_factor * bspline_phi(radius + self.m / 2.0, self.m)
        keep = valid[0] & (vals[0] > 0)
        return idx[0][keep], vals[0][keep]

    def phi_vector(self, x) -> np.ndarray:
        """Dense scaling-function vector over the whole grid, shape (l,)."""
        idx, vals = self.phi_sparse(x)
        out = np.zeros(self.n_points)
        out[idx] = vals
        return out

    # -- streaming updates -----------------------------------------------------

    def update(self, x) -> None:
        idx, vals = self.phi_sparse(x)
        self.update_count += 1
        if self.schedule == "harmonic":
            alphas = np.full(self.gamma, 1.0 / self.update_count)
        else:
            alphas = self.alphas
        touched = 0
        for g, a in enumerate(alphas):
            if a == 1.0:
                prev = self._support[g]
                if prev is None:
                    self._v[:, g] = 0.0
                    touched += self.n_points
                else:
                    self._v[prev, g] = 0.0
                    touched += prev.size
                self._scale[g] = 1.0
                self._v[idx, g] = vals
                self._support[g] = idx
            else:
                self._scale[g] *= 1.0 - a
                self._v[idx, g] += (a / self._scale[g]) * vals
                self._support[g] = None
                if self._scale[g] < _RESCALE_BELOW:
                    self._v[:, g] *= self._scale[g]
                    self._scale[g] = 1.0
                    touched += self.n_points
            touched += idx.size
        self.last_update_touched = touched

    def update_many(self, points: Iterable) -> None:
        for x in points:
            self.update(x)

    # -- evaluation --------------------------------------------------------------

    def density(self, x) -> np.ndarray:
        """Density of every receptive-field column at one point, shape (gamma,)."""
        idx, vals = self.phi_sparse(x)
        return (self._v[idx] * vals[:, None]).sum(axis=0) * self._scale

    def density_many(self, points) -> np.ndarray:
        """Vectorised :meth:`density` for points of shape (N, n); returns (N, gamma)."""
        x = self._check(points).reshape(-1, self.n)
        idx, radius, _, valid = self._support_of(x)
        vals = self.scale_factor * bspline_phi(radius + self.m / 2.0, self.m) * valid
        return np.einsum("ncg,nc->ng", self._v[idx], vals) * self._scale

    def density_tensor(self, h: Tensor) -> Tensor:
        """Density at points ``h`` (batch, n) as a graph node.

        The weights are constants; gradients flow to ``h`` only, through the
        B-spline derivative.  Points outside [0, 1]^n are clamped and get
        zero gradient in the clamped coordinates.
        """
        raw = h.data.reshape(-1, self.n)
        x = np.clip(raw, 0.0, 1.0)
        idx, radius, diff, valid = self._support_of(x)
        arg = radius + self.m / 2.0
        vals = self.scale_factor * bspline_phi(arg, self.m) * valid
        w = self._v[idx] * self._scale
        out = np.einsum("ncg,nc->ng", w, vals)
        inside = (raw >= 0.0) & (raw <= 1.0)

        def backward(g):
            dvals = self.scale_factor * bspline_dphi(arg, self.m) * valid
            safe = np.where(radius > 0, radius, 1.0)
            dr_dx = np.where((radius > 0)[..., None], diff / safe[..., None], 0.0) * (2.0**self.j0)
            coeff = np.einsum("ncg,ng->nc", w, g) * dvals
            gx = np.einsum("nc,ncd->nd", coeff, dr_dx) * inside
            h._accum(gx.reshape(h.shape))

        return Tensor._result(out, (h,), backward)

    # -- persistence ---------------------------------------------------------------

    def to_records(self) -> dict[str, np.ndarray]:
        return {
            "m": np.array(float(self.m)),
            "j0": np.array(float(self.j0)),
            "n": np.array(float(self.n)),
            "alphas": self.alphas.copy(),
            "harmonic": np.array(1.0 if self.schedule == "harmonic" else 0.0),
            "update_count": np.array(float(self.update_count)),
            # unscaled weights and per-column scale, so reload is bit-exact
            "v": self._v.copy(),
            "scale": self._scale.copy(),
        }

    @classmethod
    def from_records(cls, records: dict[str, np.ndarray]) -> "DensityState":
        state = cls(
            int(records["m"]),
            int(records["j0"]),
            int(records["n"]),
            tuple(np.atleast_1d(records["alphas"])),
            "harmonic" if float(records["harmonic"]) else "fixed",
        )
        v = np.asarray(records["v"], dtype=np.float64)
        scale = np.atleast_1d(np.asarray(records["scale"], dtype=np.float64))
        if v.shape != state._v.shape or scale.shape != state._scale.shape:
            raise ValueError(f"weight matrix has shape {v.shape}, expected {state._v.shape}")
        state._v = v.copy()
        state._scale = scale.copy()
        state._support = [None] * state.gamma
        state.update_count = int(records["update_count"])
        return state


def batch_estimate(samples, m: int, j0: int) -> DensityState:
    """Single-column state holding the arithmetic mean of phi(X_i) over ``samples``."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim == 1:
        samples = samples[:, None]
    if len(samples) == 0:
        raise ValueError("batch_estimate needs at least one sample")
    state = DensityState(m, j0, samples.shape[1], alphas=(1.0,))
    parts = [state.phi_sparse(x) for x in samples]
    idx = np.concatenate([p[0] for p in parts])
    vals = np.concatenate([p[1] for p in parts])
    order = np.argsort(idx, kind="stable")
    idx, vals = idx[order], vals[order]
    starts = np.flatnonzero(np.r_[True, idx[1:] != idx[:-1]]) if idx.size else np.empty(0, dtype=np.intp)
    ends = np.r_[starts[1:], idx.size]
    # fsum is exactly rounded, so the estimate does not depend on sample order
    for s, e in zip(starts, ends):
        state._v[idx[s], 0] = math.fsum(vals[s:e]) / len(samples)
    state._support = [None]
    state.update_count = len(samples)
    return state
