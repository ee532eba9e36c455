"""Full classifier: probabilistic branch, LSTM branch and C-FCN branch
joined by a linear fusion layer and a softmax.

Training runs in two stages.  Stage one fits the AWPG on the designated
class and precomputes probabilistic features; stage two trains every other
network end to end with cross-entropy while the AWPG stays frozen.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .aptcn import APTCN, AptcnConfig
from .awpg import AwpgModel, GedConfig, fit_awpg
from .branches import CFCN, CfcnConfig, LSTMBranch
from .data import TsDataset, stratified_split
from .tensor import Adam, Linear, Module, Tensor, concat, cross_entropy, no_grad, softmax
from .tensor import checkpoint as ckpt

log = logging.getLogger(__name__)

ABLATIONS = ("full", "a1", "a2", "a3")
LR_GRID = (1e-2, 1e-3, 1e-4)


@dataclass(frozen=True)
class WprcnConfig:
    """Everything needed to reproduce one training run.

    ``ablation`` is one of ``full``, ``a1`` (no AWPG and no APTCN), ``a2``
    (no AWPG; APTCN reads the raw series) or ``a3`` (no channel attention).
    """

    ablation: str = "full"
    awpg: GedConfig = field(default_factory=GedConfig)
    awpg_search: tuple = ()
    per_class_awpg: bool = False
    aptcn: AptcnConfig = field(default_factory=AptcnConfig)
    cfcn: CfcnConfig = field(default_factory=CfcnConfig)
    lstm_hidden: int = 8
    lstm_dropout: float = 0.2
    epochs: int = 40
    batch_size: int = 16
    lr_grid: tuple = LR_GRID
    patience: int = 10
    val_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.ablation not in ABLATIONS:
            raise ValueError(f"ablation must be one of {ABLATIONS}, got {self.ablation!r}")
        if not self.lr_grid or any(lr <= 0 for lr in self.lr_grid):
            raise ValueError("lr_grid must hold positive learning rates")
        if self.epochs < 1 or self.batch_size < 1 or self.patience < 1:
            raise ValueError("epochs, batch_size and patience must be positive")
        if self.lstm_hidden < 1:
            raise ValueError("lstm_hidden must be positive")

    @property
    def uses_awpg(self) -> bool:
        return self.ablation in ("full", "a3")

    @property
    def uses_aptcn(self) -> bool:
        return self.ablation != "a1"

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


class WPRCN(Module):
    def __init__(self, n: int, n_classes: int, config: WprcnConfig, c_prob: int, rng: np.random.Generator):
        self.config = config
        self.n_classes = n_classes
        self.aptcn = None
        if config.uses_aptcn:
            c_in = c_prob if config.uses_awpg else n
            self.aptcn = APTCN(replace(config.aptcn, c_in=c_in, eca=config.ablation != "a3"), rng)
        self.lstm = LSTMBranch(n, config.lstm_hidden, rng, config.lstm_dropout)
        self.cfcn = CFCN(n, config.cfcn, rng)
        width = self.lstm.out_features + self.cfcn.out_features
        if self.aptcn is not None:
            width += self.aptcn.out_features
        self.fusion = Linear(width, n_classes, rng)

    def forward(self, x: Tensor, P: Tensor | None = None, lengths=None) -> Tensor:
        """Class logits; ``x`` is the raw (B, n, L) batch, ``P`` the (B, C, L) features."""
        parts = []
        if self.aptcn is not None:
            src = P if self.config.uses_awpg else x
            if src is None:
                raise ValueError("this configuration needs probabilistic features")
            parts.append(self.aptcn(src, lengths))
        parts.append(self.lstm(x, lengths))
        parts.append(self.cfcn(x, lengths))
        return self.fusion(concat(parts, axis=1))


def fuse_and_classify(features: Sequence[Tensor], fusion: Linear) -> Tensor:
    """Concatenate branch vectors, apply the fusion layer and a softmax."""
    return softmax(fusion(concat(list(features), axis=1)), axis=-1)


@dataclass
class TrainedWprcn:
    config: WprcnConfig
    net: WPRCN
    awpgs: list[AwpgModel]
    feature_scale: np.ndarray | None
    classes: list[str]
    lr: float
    history: dict

    def features(self, X: np.ndarray) -> np.ndarray | None:
        """Scaled probabilistic features for (N, n, L) input."""
        if not self.awpgs:
            return None
        steps = np.transpose(X, (0, 2, 1))
        P = np.concatenate([a.generate_features(steps) for a in self.awpgs], axis=1)
        return P / self.feature_scale[None, :, None]

    def predict_proba(self, dataset: TsDataset, batch_size: int = 64) -> np.ndarray:
        self.net.eval()
        X = dataset.X
        P = self.features(X)
        out = []
        with no_grad():
            for s in range(0, len(X), batch_size):
                sl = slice(s, s + batch_size)
                logits = self.net(Tensor(X[sl]), None if P is None else Tensor(P[sl]), dataset.lengths[sl])
                out.append(softmax(logits, axis=-1).data)
        return np.concatenate(out)

    def predict(self, dataset: TsDataset) -> np.ndarray:
        return np.argmax(self.predict_proba(dataset), axis=1)

    def accuracy(self, dataset: TsDataset) -> float:
        return float(np.mean(self.predict(dataset) == dataset.labels))

    def to_records(self) -> dict[str, np.ndarray]:
        rec = {"wprcn/version": np.array(1.0), "wprcn/lr": np.array(self.lr)}
        rec.update(ckpt.prefixed("net/", self.net.state_dict()))
        if self.feature_scale is not None:
            rec["wprcn/feature_scale"] = self.feature_scale
        for i, a in enumerate(self.awpgs):
            rec.update(ckpt.prefixed(f"awpg{i}/", a.to_records()))
        return rec

    def save(self, path) -> None:
        ckpt.save(path, self.to_records())


def load_trained(path, config: WprcnConfig, train: TsDataset) -> TrainedWprcn:
    """Rebuild a model written by :meth:`TrainedWprcn.save`.

    ``config`` and the (normalised) training split supply the architecture.
    """
    rec = ckpt.load(path)
    if "wprcn/version" not in rec:
        raise ckpt.CheckpointError(f"{path}: not a WPRCN checkpoint")
    awpgs = []
    i = 0
    while f"awpg{i}/awpg/version" in rec:
        awpgs.append(AwpgModel.from_records(ckpt.strip_prefix(f"awpg{i}/", rec)))
        i += 1
    scale = rec.get("wprcn/feature_scale")
    c_prob = 0 if scale is None else scale.shape[0]
    net = WPRCN(train.n, len(train.classes), config, c_prob, np.random.default_rng(0))
    net.load_state_dict(ckpt.strip_prefix("net/", rec))
    net.eval()
    return TrainedWprcn(config, net, awpgs, scale, list(train.classes), float(rec["wprcn/lr"]), {})


def _seeds(seed: int, count: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(count)]


def stage_one(fit: TsDataset, val: TsDataset, config: WprcnConfig, seed: int) -> list[AwpgModel]:
    """Fit the AWPG(s) for this run; one per class when ``per_class_awpg`` is set."""
    classes = range(len(fit.classes)) if config.per_class_awpg else (config.awpg.train_class,)
    models = []
    for c in classes:
        ged = replace(config.awpg, train_class=c, seed=seed + c)
        models.append(fit_awpg(fit.X, fit.labels, val.X, val.labels, ged, config.awpg_search))
    return models


def _split_for(train: TsDataset, config: WprcnConfig):
    split_seed, awpg_seed, init_seed, shuffle_seed = _seeds(config.seed, 4)
    fit, val = stratified_split(train, config.val_fraction, seed=split_seed)
    return fit, val, (awpg_seed, init_seed, shuffle_seed)


def stage_one_for(train: TsDataset, config: WprcnConfig) -> list[AwpgModel]:
    """The stage-one models :func:`train_wprcn` would fit for this split and config."""
    fit, val, (awpg_seed, _, _) = _split_for(train, config)
    return stage_one(fit, val, config, awpg_seed)


def _train_one_lr(net, data, val, lr, config, rng):
    X, P, y, lengths = data
    opt = Adam(net.parameters(), lr=lr)
    best = (-1.0, np.inf, None, -1)  # val acc, val loss, state, epoch
    losses = []
    stale = 0
    for epoch in range(config.epochs):
        net.train()
        order = rng.permutation(len(X))
        total = 0.0
        for s in range(0, len(order), config.batch_size):
            idx = order[s : s + config.batch_size]
            if len(idx) < 2:
                continue  # batchnorm needs more than one sample
            opt.zero_grad()
            logits = net(Tensor(X[idx]), None if P is None else Tensor(P[idx]), lengths[idx])
            loss = cross_entropy(logits, y[idx])
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        losses.append(total / len(X))
        acc, vloss = _score(net, val)
        if acc > best[0] or (acc == best[0] and vloss < best[1]):
            best = (acc, vloss, copy.deepcopy(net.state_dict()), epoch)
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    return best, losses


def _score(net, val):
    X, P, y, lengths = val
    net.eval()
    with no_grad():
        logits = net(Tensor(X), None if P is None else Tensor(P), lengths)
        loss = cross_entropy(logits, y).item()
    return float(np.mean(np.argmax(logits.data, axis=1) == y)), loss


def train_wprcn(
    train: TsDataset, config: WprcnConfig, awpgs: list[AwpgModel] | None = None
) -> TrainedWprcn:
    """Two-stage training on a normalised, padded training split.

    ``awpgs`` may supply already fitted stage-one models (they are used
    read-only), which lets ablations share one AWPG per seed.
    """
    if len(np.unique(train.labels)) < 2:
        raise ValueError("training split needs at least two classes")
    fit, val, (awpg_seed, init_seed, shuffle_seed) = _split_for(train, config)

    feature_scale = None
    P_fit = P_val = None
    if config.uses_awpg:
        if awpgs is None:
            awpgs = stage_one(fit, val, config, awpg_seed)
        P_fit = np.concatenate([a.generate_features(np.transpose(fit.X, (0, 2, 1))) for a in awpgs], axis=1)
        P_val = np.concatenate([a.generate_features(np.transpose(val.X, (0, 2, 1))) for a in awpgs], axis=1)
        # features span several orders of magnitude across resolutions
        feature_scale = np.maximum(P_fit.max(axis=(0, 2)), 1e-12)
        P_fit = P_fit / feature_scale[None, :, None]
        P_val = P_val / feature_scale[None, :, None]
    else:
        awpgs = []
    c_prob = 0 if P_fit is None else P_fit.shape[1]

    data = (fit.X, P_fit, fit.labels, fit.lengths)
    vdata = (val.X, P_val, val.labels, val.lengths)
    results = []
    for lr in config.lr_grid:
        net = WPRCN(train.n, len(train.classes), config, c_prob, np.random.default_rng(init_seed))
        best, losses = _train_one_lr(net, data, vdata, lr, config, np.random.default_rng(shuffle_seed))
        log.info("lr=%g best val acc %.4f at epoch %d", lr, best[0], best[3])
        results.append((lr, best, losses))
    # best validation accuracy; ties go to lower validation loss, then grid order
    lr, best, losses = max(results, key=lambda r: (r[1][0], -r[1][1]))
    net = WPRCN(train.n, len(train.classes), config, c_prob, np.random.default_rng(init_seed))
    net.load_state_dict(best[2])
    net.eval()
    history = {
        "lr": lr,
        "best_epoch": best[3],
        "val_accuracy": best[0],
        "val_loss": best[1],
        "train_loss": losses,
        "grid": {str(r[0]): r[1][0] for r in results},
    }
    return TrainedWprcn(config, net, awpgs, feature_scale, list(train.classes), lr, history)
