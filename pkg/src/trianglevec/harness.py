"""Stratified cross-validation, classification metrics and filterbank refinement."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .ebm import EbmConfig, EbmModel, encode_labels, train_ebm
from .gabor import Filterbank, vectorize_gabor
from .imagegrid import BAD, GOOD, InvalidParameterError


class ProtocolError(ValueError):
    pass


@dataclass(frozen=True)
class CvProtocol:
    runs: int = 5
    k: int = 6
    holdout_fraction: float = 0.10
    seed: int = 0

    def __post_init__(self):
        if self.k < 2:
            raise InvalidParameterError("k must be at least 2")
        if self.runs < 1:
            raise InvalidParameterError("runs must be positive")
        if not 0.0 <= self.holdout_fraction < 1.0:
            raise InvalidParameterError("holdout_fraction must be in [0, 1)")


@dataclass(frozen=True, eq=False)
class Dataset:
    ids: tuple[str, ...]
    feature_names: tuple[str, ...]
    X: np.ndarray
    labels: tuple[str, ...]

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2 or X.shape != (len(self.ids), len(self.feature_names)):
            raise ProtocolError("dataset shape does not match ids and feature names")
        if len(self.labels) != len(self.ids):
            raise ProtocolError("one label per row is required")
        bad = [lab for lab in self.labels if lab not in (GOOD, BAD)]
        if bad:
            raise ProtocolError(f"unknown label {bad[0]!r}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "labels", tuple(self.labels))

    def __len__(self) -> int:
        return len(self.ids)

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=int)
        return Dataset(
            tuple(self.ids[i] for i in rows),
            self.feature_names,
            self.X[rows],
            tuple(self.labels[i] for i in rows),
        )

    def columns(self, names) -> "Dataset":
        idx = [self.feature_names.index(n) for n in names]
        return Dataset(self.ids, tuple(names), self.X[:, idx], self.labels)


# ---------------------------------------------------------------------------
# metrics


@dataclass(frozen=True, eq=False)
class RunMetrics:
    """Metrics of one evaluation; confusion rows are real, columns predicted (good, bad)."""

    confusion: np.ndarray

    @property
    def total(self) -> int:
        return int(self.confusion.sum())

    @property
    def accuracy(self) -> float:
        return 100.0 * (self.confusion[0, 0] + self.confusion[1, 1]) / self.total

    @property
    def type1(self) -> float:
        return 100.0 * self.confusion[1, 0] / self.total

    @property
    def type2(self) -> float:
        return 100.0 * self.confusion[0, 1] / self.total


def metrics_from_confusion(good_good: int, good_bad: int, bad_good: int, bad_bad: int) -> RunMetrics:
    """Build metrics from counts given as real->predicted."""
    return RunMetrics(np.array([[good_good, good_bad], [bad_good, bad_bad]], dtype=int))


def compute_metrics(predictions, labels) -> RunMetrics:
    predictions = list(predictions)
    labels = list(labels)
    if len(predictions) != len(labels):
        raise ProtocolError(f"{len(predictions)} predictions for {len(labels)} labels")
    if not labels:
        raise ProtocolError("no predictions to score")
    c = np.zeros((2, 2), dtype=int)
    for p, lab in zip(predictions, labels):
        c[0 if lab == GOOD else 1, 0 if p == GOOD else 1] += 1
    return RunMetrics(c)


def _mean_std(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    return float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0


@dataclass(frozen=True, eq=False)
class Metrics:
    runs: tuple[RunMetrics, ...]
    holdout: tuple[RunMetrics, ...] = field(default=())

    @property
    def accuracy(self) -> tuple[float, float]:
        return _mean_std([r.accuracy for r in self.runs])

    @property
    def type1(self) -> tuple[float, float]:
        return _mean_std([r.type1 for r in self.runs])

    @property
    def type2(self) -> tuple[float, float]:
        return _mean_std([r.type2 for r in self.runs])

    @property
    def confusion(self) -> tuple[np.ndarray, np.ndarray]:
        stack = np.array([r.confusion for r in self.runs], dtype=float)
        std = stack.std(axis=0, ddof=1) if len(stack) > 1 else np.zeros((2, 2))
        return stack.mean(axis=0), std

    def holdout_metrics(self) -> "Metrics | None":
        return Metrics(self.holdout) if self.holdout else None


def format_value(mean: float, std: float, digits: int = 1) -> str:
    """``value(uncertainty)`` notation, e.g. ``92.5(1.2)``."""
    return f"{mean:.{digits}f}({std:.{digits}f})"


def format_report(metrics: Metrics, title: str = "") -> str:
    lines = [title] if title else []
    lines.append(f"accuracy  {format_value(*metrics.accuracy)} %")
    lines.append(f"type I    {format_value(*metrics.type1)} %")
    lines.append(f"type II   {format_value(*metrics.type2)} %")
    mean, std = metrics.confusion
    lines.append("confusion (real x predicted; good, bad)")
    for i, name in enumerate((GOOD, BAD)):
        cells = "  ".join(format_value(mean[i, j], std[i, j]) for j in range(2))
        lines.append(f"  {name:<5} {cells}")
    hold = metrics.holdout_metrics()
    if hold is not None:
        lines.append(f"holdout accuracy {format_value(*hold.accuracy)} %")
    return "\n".join(lines)


METRICS_COLUMNS = (
    "method", "accuracy", "accuracy_std", "type1", "type1_std", "type2", "type2_std",
    "good_good", "good_bad", "bad_good", "bad_bad", "holdout_accuracy", "holdout_accuracy_std",
)


def write_metrics_csv(path: str | Path, rows: dict[str, Metrics]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_COLUMNS)
        for method, m in rows.items():
            mean, _ = m.confusion
            hold = m.holdout_metrics()
            ha = hold.accuracy if hold is not None else (float("nan"), float("nan"))
            w.writerow([method, *m.accuracy, *m.type1, *m.type2, *mean.ravel().tolist(), *ha])


# ---------------------------------------------------------------------------
# protocol


def _rng(*keys: int) -> np.random.Generator:
    return np.random.default_rng([int(k) & (2**63 - 1) for k in keys])


def stratified_kfold(labels, k: int, seed: int = 0) -> np.ndarray:
    """Fold index per sample: each class is shuffled and dealt round-robin."""
    labels = list(labels)
    if k < 2:
        raise InvalidParameterError("k must be at least 2")
    folds = np.empty(len(labels), dtype=int)
    rng = _rng(seed)
    offset = 0
    for cls in (GOOD, BAD):
        idx = np.array([i for i, lab in enumerate(labels) if lab == cls], dtype=int)
        if idx.size < k:
            raise ProtocolError(f"class {cls!r} has {idx.size} samples, fewer than k={k}")
        idx = rng.permutation(idx)
        # continue dealing where the previous class stopped so fold sizes stay balanced
        folds[idx] = (np.arange(idx.size) + offset) % k
        offset = (offset + idx.size) % k
    return folds


def stratified_holdout(labels, fraction: float, seed: int) -> np.ndarray:
    """Boolean mask of held-out rows, ``round(fraction * n_class)`` per class."""
    labels = list(labels)
    mask = np.zeros(len(labels), dtype=bool)
    rng = _rng(seed)
    for cls in (GOOD, BAD):
        idx = rng.permutation(np.array([i for i, lab in enumerate(labels) if lab == cls], dtype=int))
        mask[idx[: int(math.floor(fraction * len(idx) + 0.5))]] = True
    return mask


def _fold_config(cfg: EbmConfig, *keys: int) -> EbmConfig:
    seed = int(np.random.SeedSequence([cfg.seed & (2**63 - 1), *keys]).generate_state(1, np.uint64)[0])
    return replace(cfg, seed=seed)


def fit_model(data: Dataset, cfg: EbmConfig) -> EbmModel:
    return train_ebm(data.X, data.labels, cfg, data.feature_names)


def cross_validate(data: Dataset, proto: CvProtocol = CvProtocol(), cfg: EbmConfig = EbmConfig()) -> Metrics:
    runs, holdouts = [], []
    for run in range(proto.runs):
        hold = stratified_holdout(data.labels, proto.holdout_fraction, _rng(proto.seed, run).integers(2**62))
        rest = np.flatnonzero(~hold)
        cv = data.subset(rest)
        folds = stratified_kfold(cv.labels, proto.k, int(_rng(proto.seed, run, 1).integers(2**62)))
        preds = [None] * len(cv)
        for fold in range(proto.k):
            test = np.flatnonzero(folds == fold)
            train = np.flatnonzero(folds != fold)
            model = fit_model(cv.subset(train), _fold_config(cfg, run, fold))
            for i, p in zip(test, model.predict_classes(cv.X[test])):
                preds[i] = p
        runs.append(compute_metrics(preds, cv.labels))
        if hold.any():
            held = data.subset(np.flatnonzero(hold))
            model = fit_model(cv, _fold_config(cfg, run, proto.k))
            holdouts.append(compute_metrics(model.predict_classes(held.X), held.labels))
    return Metrics(tuple(runs), tuple(holdouts))


def k_sweep(data: Dataset, ks, proto: CvProtocol = CvProtocol(), cfg: EbmConfig = EbmConfig()) -> dict[int, Metrics]:
    return {k: cross_validate(data, replace(proto, k=k), cfg) for k in ks}


# ---------------------------------------------------------------------------
# filterbank refinement


def refine_filterbank(images, bank: Filterbank, cfg: EbmConfig = EbmConfig(), drop_threshold: float = 0.05) -> Filterbank:
    """Repeatedly drop filters whose importance falls below ``drop_threshold`` of the best.

    ``images`` is a sequence of labelled images; each round trains a model on
    the surviving filters' response norms.
    """
    if len(bank) == 0:
        raise ProtocolError("filterbank is empty")
    images = list(images)
    labels = [li.label for li in images]
    encode_labels(labels)
    X = np.array([vectorize_gabor(li.image, bank, edges=False).values for li in images])
    names = list(bank.names)
    while True:
        cols = [bank.names.index(n) for n in names]
        model = train_ebm(X[:, cols], labels, cfg, names)
        imp = dict(model.feature_importance(X[:, cols]))
        top = max(imp[n] for n in names)
        keep = [n for n in names if not imp[n] < drop_threshold * top]
        if not keep:
            raise ProtocolError("every filter fell below the importance threshold")
        if len(keep) == len(names):
            return bank.subset(names)
        names = keep
