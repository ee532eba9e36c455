"""Adaptive wavelet probabilistic feature generator (AWPG).

A two-layer GRU encoder maps each series to a latent path in the unit
square; a GRU decoder reconstructs the series from the final latent point.
A streaming wavelet density over final latent points, combined with a
small softmax network that weights its receptive-field columns, adds a
likelihood term to the reconstruction loss.  After training, fifteen more
density states (one per B-spline order and resolution) are fitted to the
latent paths of the training class, and evaluating them along a new latent
path yields the probabilistic feature map.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, replace
from typing import Sequence

import numpy as np

from .tensor import GRU, Adam, Linear, Module, Tensor, l1_loss, no_grad, softmax
from .tensor import checkpoint as ckpt
from .wavelet import DEFAULT_ALPHAS, DensityState

log = logging.getLogger(__name__)

HIDDEN_CHOICES = (128, 64, 32, 16, 8, 4)
FEATURE_ORDERS = (2, 3, 4)
FEATURE_RESOLUTIONS = (1, 2, 3, 4, 5)
LATENT_DIM = 2


@dataclass(frozen=True)
class GedConfig:
    """Hyperparameters of one AWPG candidate.

    ``hidden`` is the outer layer size of encoder and decoder; the inner
    layer is fixed to the two-dimensional latent.
    """

    hidden: int = 16
    lam: float = 0.1
    batch_size: int = 16
    epochs: int = 20
    lr: float = 5e-3
    latent_m: int = 2
    latent_j0: int = 3
    alphas: tuple = DEFAULT_ALPHAS
    orders: tuple = FEATURE_ORDERS
    resolutions: tuple = FEATURE_RESOLUTIONS
    train_class: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.hidden < 1:
            raise ValueError("hidden size must be positive")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size >= 1 and epochs >= 0 are required")

    @property
    def channels(self) -> int:
        return len(self.orders) * len(self.resolutions)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LatentSequence:
    y: Tensor  # (B, L, 2) bounded latent path
    h: Tensor  # (B, 2) final latent point, equal to y[:, -1]


class AwpgModel(Module):
    def __init__(self, n: int, config: GedConfig, rng: np.random.Generator | None = None):
        rng = np.random.default_rng(config.seed) if rng is None else rng
        self.n = n
        self.config = config
        h = config.hidden
        self.enc1 = GRU(n, h, rng)
        self.enc2 = GRU(h, LATENT_DIM, rng)
        self.dec1 = GRU(1, LATENT_DIM, rng)
        self.dec2 = GRU(LATENT_DIM, h, rng)
        self.head = Linear(h, n, rng)
        self.adapt1 = Linear(LATENT_DIM, 10, rng)
        self.adapt2 = Linear(10, len(config.alphas), rng)
        self.latent_state = DensityState(config.latent_m, config.latent_j0, LATENT_DIM, config.alphas)
        self.feature_states: list[DensityState] = []
        self.beta: float | None = None
        self.f1: float | None = None
        self.loss_history: list[float] = []

    @property
    def gamma(self) -> int:
        return len(self.config.alphas)

    @property
    def trained(self) -> bool:
        return len(self.feature_states) == self.config.channels

    # -- networks ------------------------------------------------------------------

    def encode(self, x) -> LatentSequence:
        """``x`` of shape (B, L, n) or (L, n) in time-major-last layout."""
        x = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))
        if x.ndim == 2:
            x = x.reshape(1, *x.shape)
        if x.shape[1] == 0:
            raise ValueError("cannot encode an empty series")
        y1, _ = self.enc1(x)
        y2, _ = self.enc2(y1)
        y = y2.sigmoid()
        return LatentSequence(y=y, h=y[:, -1, :])

    def reconstruct(self, h: Tensor, length: int) -> Tensor:
        """Unroll the decoder ``length`` steps from ``h`` (B, 2); returns (B, L, n)."""
        zeros = Tensor(np.zeros((h.shape[0], length, 1)))
        d1, _ = self.dec1(zeros, h)
        d2, _ = self.dec2(d1)
        return self.head(d2)

    def theta(self, h: Tensor) -> Tensor:
        return softmax(self.adapt2(self.adapt1(h).tanh()), axis=-1)

    def adaptive_select(self, h) -> tuple[np.ndarray, np.ndarray]:
        """Softmax weights (B, gamma) and argmax index (B,); ties go to the lowest index."""
        h = h if isinstance(h, Tensor) else Tensor(np.atleast_2d(np.asarray(h, dtype=np.float64)))
        with no_grad():
            theta = self.theta(h).data
        return theta, np.argmax(theta, axis=1)

    def loss(self, x: Tensor, update: bool = True) -> Tensor:
        """Joint objective on a batch ``x`` (B, L, n).

        The latent density is first updated on the batch's final latent
        points (no gradient reaches its weights), then
        ``mean|x - x_hat| - lam * mean log(p(h) . theta)``.
        """
        if x.shape[0] == 0:
            raise ValueError("empty batch")
        lat = self.encode(x)
        if update:
            self.latent_state.update_many(lat.h.data)
        recon = l1_loss(self.reconstruct(lat.h, x.shape[1]), x)
        if self.config.lam == 0:
            return recon
        p = self.latent_state.density_tensor(lat.h)
        lik = (p * self.theta(lat.h)).sum(axis=1).log()
        return recon - self.config.lam * lik.mean()

    # -- probabilistic features --------------------------------------------------------

    def latent_density(self, x) -> np.ndarray:
        """Density of the selected column at each sample's final latent point."""
        with no_grad():
            lat = self.encode(x)
        _, idx = self.adaptive_select(lat.h.data)
        dens = self.latent_state.density_many(lat.h.data)
        return dens[np.arange(len(idx)), idx]

    def fit_feature_states(self, X: np.ndarray) -> None:
        """Stream the latent paths of ``X`` (N, L, n) through fresh feature states, in order."""
        cfg = self.config
        states = [DensityState(m, j, LATENT_DIM, cfg.alphas) for m in cfg.orders for j in cfg.resolutions]
        with no_grad():
            y = self.encode(X).y.data
        points = y.reshape(-1, LATENT_DIM)
        for s in states:
            s.update_many(points)
        self.feature_states = states

    def generate_features(self, x) -> np.ndarray:
        """Probabilistic feature map, (B, C, L) for batched input or (C, L) for one series."""
        if not self.trained:
            raise RuntimeError("AWPG feature states are not trained")
        single = np.ndim(x) == 2
        with no_grad():
            lat = self.encode(x)
        y = lat.y.data
        _, idx = self.adaptive_select(lat.h.data)
        B, L, _ = y.shape
        out = np.empty((B, len(self.feature_states), L))
        flat = y.reshape(-1, LATENT_DIM)
        rows = np.repeat(idx, L)
        for c, state in enumerate(self.feature_states):
            out[:, c, :] = state.density_many(flat)[np.arange(B * L), rows].reshape(B, L)
        return out[0] if single else out

    # -- persistence ---------------------------------------------------------------------

    def to_records(self) -> dict[str, np.ndarray]:
        cfg = self.config
        rec = {
            "awpg/version": np.array(1.0),
            "awpg/n": np.array(float(self.n)),
            "awpg/hidden": np.array(float(cfg.hidden)),
            "awpg/lam": np.array(cfg.lam),
            "awpg/latent_m": np.array(float(cfg.latent_m)),
            "awpg/latent_j0": np.array(float(cfg.latent_j0)),
            "awpg/alphas": np.array(cfg.alphas, dtype=float),
            "awpg/orders": np.array(cfg.orders, dtype=float),
            "awpg/resolutions": np.array(cfg.resolutions, dtype=float),
            "awpg/train_class": np.array(float(cfg.train_class)),
            "awpg/beta": np.array(np.nan if self.beta is None else self.beta),
        }
        rec.update(ckpt.prefixed("param/", self.state_dict()))
        rec.update(ckpt.prefixed("density/latent/", self.latent_state.to_records()))
        for state in self.feature_states:
            rec.update(ckpt.prefixed(f"density/m{state.m}j{state.j0}/", state.to_records()))
        return rec

    @classmethod
    def from_records(cls, rec: dict[str, np.ndarray]) -> "AwpgModel":
        if "awpg/version" not in rec:
            raise ckpt.CheckpointError("not an AWPG checkpoint")
        config = GedConfig(
            hidden=int(rec["awpg/hidden"]),
            lam=float(rec["awpg/lam"]),
            latent_m=int(rec["awpg/latent_m"]),
            latent_j0=int(rec["awpg/latent_j0"]),
            alphas=tuple(float(a) for a in np.atleast_1d(rec["awpg/alphas"])),
            orders=tuple(int(a) for a in np.atleast_1d(rec["awpg/orders"])),
            resolutions=tuple(int(a) for a in np.atleast_1d(rec["awpg/resolutions"])),
            train_class=int(rec["awpg/train_class"]),
        )
        model = cls(int(rec["awpg/n"]), config)
        model.load_state_dict(ckpt.strip_prefix("param/", rec))
        model.latent_state = DensityState.from_records(ckpt.strip_prefix("density/latent/", rec))
        states = []
        for m in config.orders:
            for j in config.resolutions:
                part = ckpt.strip_prefix(f"density/m{m}j{j}/", rec)
                if part:
                    states.append(DensityState.from_records(part))
        model.feature_states = states
        beta = float(rec["awpg/beta"])
        model.beta = None if np.isnan(beta) else beta
        return model

    def save(self, path) -> None:
        ckpt.save(path, self.to_records())

    @classmethod
    def load(cls, path) -> "AwpgModel":
        return cls.from_records(ckpt.load(path))


def _as_steps(X: np.ndarray) -> np.ndarray:
    """(N, n, L) channel-major arrays to the (N, L, n) layout the GRUs use."""
    return np.ascontiguousarray(np.transpose(np.asarray(X, dtype=np.float64), (0, 2, 1)))


def train_awpg(X: np.ndarray, labels: np.ndarray, config: GedConfig) -> AwpgModel:
    """Fit one AWPG on the samples of ``config.train_class``.

    ``X`` has shape (N, n, L).  Deterministic given ``config.seed``.
    """
    labels = np.asarray(labels)
    own = np.flatnonzero(labels == config.train_class)
    if own.size == 0:
        raise ValueError(f"class {config.train_class} is absent from the training split")
    data = _as_steps(np.asarray(X)[own])
    rng = np.random.default_rng(config.seed)
    model = AwpgModel(data.shape[2], config, rng)
    opt = Adam(model.parameters(), lr=config.lr)
    for epoch in range(config.epochs):
        order = rng.permutation(len(data))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = Tensor(data[order[start : start + config.batch_size]])
            opt.zero_grad()
            loss = model.loss(batch)
            loss.backward()
            opt.step()
            total += loss.item() * batch.shape[0]
        model.loss_history.append(total / len(data))
        log.debug("awpg hidden=%d epoch %d loss %.6f", config.hidden, epoch, model.loss_history[-1])
    model.fit_feature_states(data)
    return model


# -- threshold selection -------------------------------------------------------------------


def f1_score(predicted: np.ndarray, actual: np.ndarray) -> float:
    tp = int(np.sum(predicted & actual))
    fp = int(np.sum(predicted & ~actual))
    fn = int(np.sum(~predicted & actual))
    return 0.0 if tp == 0 else 2 * tp / (2 * tp + fp + fn)


def best_threshold(density: np.ndarray, unseen: np.ndarray) -> tuple[float, float]:
    """Maximise F1 of the rule ``density < beta`` for detecting unseen-class samples.

    Candidates are every distinct density value plus one value just above
    the maximum (which flags everything).  Ties keep the smaller beta.
    """
    density = np.asarray(density, dtype=np.float64)
    unseen = np.asarray(unseen, dtype=bool)
    if unseen.all() or not unseen.any():
        raise ValueError("validation mix must contain both trained-class and unseen-class samples")
    values = np.unique(density)
    candidates = np.append(values, np.nextafter(values[-1], np.inf))
    best_beta, best_f1 = candidates[0], -1.0
    for beta in candidates:
        score = f1_score(density < beta, unseen)
        if score > best_f1:
            best_beta, best_f1 = beta, score
    return float(best_beta), float(best_f1)


def select_config(models: Sequence[AwpgModel], X_val: np.ndarray, y_val: np.ndarray) -> tuple[AwpgModel, float, float]:
    """Pick the candidate and threshold with the best unseen-class F1.

    Returns ``(model, beta, f1)``; ties go to the earlier candidate.
    """
    if not models:
        raise ValueError("no candidate models")
    data = _as_steps(X_val)
    best = None
    for model in models:
        unseen = np.asarray(y_val) != model.config.train_class
        beta, score = best_threshold(model.latent_density(data), unseen)
        log.info("awpg candidate hidden=%d F1=%.4f beta=%.6g", model.config.hidden, score, beta)
        if best is None or score > best[2]:
            best = (model, beta, score)
    model, beta, score = best
    model.beta, model.f1 = beta, score
    return best


def fit_awpg(
    X: np.ndarray,
    labels: np.ndarray,
    X_val: np.ndarray,
    y_val: np.ndarray,
    config: GedConfig,
    search: Sequence[int] = (),
) -> AwpgModel:
    """Train one candidate per hidden size in ``search`` (or just ``config``) and select."""
    sizes = tuple(search) or (config.hidden,)
    bad = [s for s in sizes if s not in HIDDEN_CHOICES]
    if bad:
        raise ValueError(f"hidden sizes {bad} are outside {HIDDEN_CHOICES}")
    candidates = [train_awpg(X, labels, replace(config, hidden=s)) for s in sizes]
    model, _, _ = select_config(candidates, X_val, y_val)
    return model
