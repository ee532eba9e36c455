"""Accuracy, tie-averaged ranks, win/tie counts and the evaluation report."""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata


def accuracy(predicted, actual) -> float:
    predicted, actual = np.asarray(predicted), np.asarray(actual)
    if predicted.shape != actual.shape or predicted.size == 0:
        raise ValueError("predictions and labels must be non-empty and equally shaped")
    return float(np.mean(predicted == actual))


def _check_table(table) -> np.ndarray:
    table = np.asarray(table, dtype=np.float64)
    if table.ndim != 2 or table.size == 0:
        raise ValueError("result table must be a non-empty (datasets, methods) matrix")
    if np.isnan(table).any():
        raise ValueError("result table contains NaN")
    return table


def rank_matrix(table) -> np.ndarray:
    """Per-dataset ranks, 1 = highest accuracy; tied methods share the mean rank."""
    table = _check_table(table)
    return np.vstack([rankdata(-row, method="average") for row in table])


def average_ranks(table) -> np.ndarray:
    return rank_matrix(table).mean(axis=0)


def win_tie(table) -> np.ndarray:
    """Datasets on which each method reaches the row maximum (ties count for all)."""
    table = _check_table(table)
    return (table == table.max(axis=1, keepdims=True)).sum(axis=0)


@dataclass
class RunResult:
    dataset: str
    method: str
    seed: int
    accuracy: float
    digest: str


@dataclass
class EvalReport:
    runs: list[RunResult] = field(default_factory=list)

    def add(self, dataset: str, method: str, seed: int, acc: float, digest: str) -> None:
        self.runs.append(RunResult(dataset, method, int(seed), float(acc), digest))

    @property
    def datasets(self) -> list[str]:
        return list(dict.fromkeys(r.dataset for r in self.runs))

    @property
    def methods(self) -> list[str]:
        return list(dict.fromkeys(r.method for r in self.runs))

    def table(self) -> np.ndarray:
        """Seed-averaged accuracy, shape (datasets, methods)."""
        out = np.full((len(self.datasets), len(self.methods)), np.nan)
        for i, d in enumerate(self.datasets):
            for j, m in enumerate(self.methods):
                accs = [r.accuracy for r in self.runs if r.dataset == d and r.method == m]
                if accs:
                    out[i, j] = float(np.mean(accs))
        return out

    def summary(self) -> dict:
        table = self.table()
        return {
            "datasets": self.datasets,
            "methods": self.methods,
            "accuracy": {d: dict(zip(self.methods, map(float, row))) for d, row in zip(self.datasets, table)},
            "average_accuracy": dict(zip(self.methods, map(float, table.mean(axis=0)))),
            "average_rank": dict(zip(self.methods, map(float, average_ranks(table)))),
            "win_tie": dict(zip(self.methods, map(int, win_tie(table)))),
            "runs": [vars(r) for r in self.runs],
        }

    def to_tsv(self) -> str:
        table = self.table()
        buf = io.StringIO()
        buf.write("dataset\t" + "\t".join(self.methods) + "\n")
        for d, row in zip(self.datasets, table):
            buf.write(d + "\t" + "\t".join(f"{v:.6f}" for v in row) + "\n")
        buf.write("avg_accuracy\t" + "\t".join(f"{v:.6f}" for v in table.mean(axis=0)) + "\n")
        buf.write("avg_rank\t" + "\t".join(f"{v:.6f}" for v in average_ranks(table)) + "\n")
        buf.write("win_tie\t" + "\t".join(str(int(v)) for v in win_tie(table)) + "\n")
        return buf.getvalue()

    def runs_tsv(self) -> str:
        lines = ["dataset\tmethod\tseed\taccuracy\tconfig_digest"]
        lines += [f"{r.dataset}\t{r.method}\t{r.seed}\t{r.accuracy:.6f}\t{r.digest}" for r in self.runs]
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True) + "\n"
