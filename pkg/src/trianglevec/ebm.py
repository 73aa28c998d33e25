"""Explainable Boosting Machine for two-class (good/bad) feature tables.

Each feature gets a table of additive log-odds scores over its quantile
bins.  Tables are learned by cyclic gradient boosting of small trees with
Newton leaf values; several bags are trained and averaged, the curves are
smoothed, a few pairwise grids are fitted on the residual, and everything is
centred so the intercept carries the base rate.  Positive scores favour
"good".
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numba
import numpy as np

from .features import FeatureVector
from .imagegrid import BAD, GOOD, InvalidParameterError

MODEL_FORMAT = "trianglevec-ebm"
MODEL_VERSION = 1
PAIR_BINS = 16
PAIR_L2 = 1.0  # hessian-units ridge on pair cells; most cells hold few samples
_EPS_H = 1e-12


class EbmError(ValueError):
    pass


class InvalidDataError(EbmError):
    pass


class MissingFeatureError(EbmError, KeyError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"missing feature {name!r}")

    def __str__(self) -> str:
        return self.args[0]


@dataclass(frozen=True)
class EbmConfig:
    n_bins: int = 256
    learning_rate: float = 0.01
    max_rounds: int = 5000
    greedy_rounds: int = 0
    smoothing_window: int = 3
    outer_bags: int = 8
    early_stop_patience: int = 50
    n_pairs: int = 3
    seed: int = 0
    validation_fraction: float = 0.15  # 0 disables early stopping
    min_samples_leaf: int = 2

    def __post_init__(self):
        if not 0.0 < self.learning_rate <= 1.0:
            raise InvalidParameterError(f"learning_rate {self.learning_rate} not in (0, 1]")
        for name in ("n_bins", "max_rounds", "outer_bags", "early_stop_patience", "min_samples_leaf"):
            if getattr(self, name) < 1:
                raise InvalidParameterError(f"{name} must be positive")
        for name in ("greedy_rounds", "smoothing_window", "n_pairs"):
            if getattr(self, name) < 0:
                raise InvalidParameterError(f"{name} must be non-negative")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise InvalidParameterError("validation_fraction must be in [0, 1)")


# ---------------------------------------------------------------------------
# binning


def bin_edges(values: np.ndarray, n_bins: int) -> np.ndarray:
    """Interior cut points for one feature (strictly increasing, possibly empty).

    With at most ``n_bins`` distinct values every value gets its own bin
    (cuts at midpoints); otherwise cuts sit at the linearly interpolated
    quantiles ``1/n_bins, ..., (n_bins-1)/n_bins`` with duplicates collapsed.
    """
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0 or not np.all(np.isfinite(v)):
        raise InvalidDataError("binning needs a nonempty, finite column")
    uniq = np.unique(v)
    if uniq.size <= n_bins:
        return 0.5 * (uniq[1:] + uniq[:-1])
    q = np.quantile(v, np.arange(1, n_bins) / n_bins)
    edges = np.unique(q)
    # a cut at the column minimum would leave the first bin empty
    return edges[edges > uniq[0]]


def bin_features(X: np.ndarray, n_bins: int) -> list[np.ndarray]:
    X = _as_matrix(X)
    return [bin_edges(X[:, j], n_bins) for j in range(X.shape[1])]


def assign_bins(column: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Bin index of each value; values beyond the outer edges clamp to the end bins."""
    return np.searchsorted(edges, column, side="right")


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] == 0:
        raise InvalidDataError("feature matrix must be 2-D and nonempty")
    if not np.all(np.isfinite(X)):
        raise InvalidDataError("feature matrix contains non-finite values")
    return X


def encode_labels(labels) -> np.ndarray:
    """Map labels to 1.0 (good) / 0.0 (bad); accepts class strings, bools or 0/1."""
    out = []
    for v in labels:
        if isinstance(v, str):
            if v == GOOD:
                out.append(1.0)
            elif v == BAD:
                out.append(0.0)
            else:
                raise InvalidDataError(f"unknown label {v!r}")
        elif v in (0, 1):
            out.append(float(v))
        else:
            raise InvalidDataError(f"unknown label {v!r}")
    return np.array(out)


# ---------------------------------------------------------------------------
# compiled boosting core


@numba.njit(cache=True)
def _best_cut(G, H, C, lo, hi, min_leaf):
    """Best single cut of bins [lo, hi); returns (gain, cut) with cut=-1 if none.

    Ties between cuts separated only by empty bins resolve to the middle of
    the empty run, so unpopulated bins split evenly between the two sides.
    """
    gt = 0.0
    ht = 0.0
    for b in range(lo, hi):
        gt += G[b]
        ht += H[b]
    ct = 0.0
    for b in range(lo, hi):
        ct += C[b]
    base = gt * gt / ht if ht > _EPS_H else 0.0
    best = 0.0
    cut = -1
    last = -1
    gl = 0.0
    hl = 0.0
    cl = 0.0
    for c in range(lo + 1, hi):
        gl += G[c - 1]
        hl += H[c - 1]
        cl += C[c - 1]
        cr = ct - cl
        if cl < min_leaf or cr < min_leaf:
            continue
        hr = ht - hl
        if hl <= _EPS_H or hr <= _EPS_H:
            continue
        gr = gt - gl
        gain = gl * gl / hl + gr * gr / hr - base
        if gain > best:
            best = gain
            cut = c
            last = c
        elif gain == best and cut >= 0 and last == c - 1 and C[c - 1] == 0.0:
            # equal gain across empty bins: keep extending the run
            last = c
    if cut < 0:
        return best, cut
    # place the cut in the middle of a run of empty bins
    return best, (cut + last + 1) // 2


@numba.njit(cache=True)
def _segment_value(G, H, lo, hi):
    g = 0.0
    h = 0.0
    for b in range(lo, hi):
        g += G[b]
        h += H[b]
    return -g / h if h > _EPS_H else 0.0


@numba.njit(cache=True)
def _fit_tree(G, H, C, nb, min_leaf, out):
    """Greedy best-first tree with at most three leaves over contiguous bins.

    Writes the Newton leaf value of every bin into ``out[:nb]`` and returns
    the gain in summed G^2/H over the single-leaf fit.
    """
    gain1, c1 = _best_cut(G, H, C, 0, nb, min_leaf)
    if c1 < 0:
        v = _segment_value(G, H, 0, nb)
        for b in range(nb):
            out[b] = v
        return 0.0
    gl, cl = _best_cut(G, H, C, 0, c1, min_leaf)
    gr, cr = _best_cut(G, H, C, c1, nb, min_leaf)
    # segments [0, a), [a, bb), [bb, nb); a == bb leaves two leaves
    a, bb, gain2 = c1, c1, 0.0
    if cl >= 0 and (cr < 0 or gl >= gr):
        a, gain2 = cl, gl
    elif cr >= 0:
        bb, gain2 = cr, gr
    v0 = _segment_value(G, H, 0, a)
    for b in range(0, a):
        out[b] = v0
    if bb > a:
        v1 = _segment_value(G, H, a, bb)
        for b in range(a, bb):
            out[b] = v1
    v2 = _segment_value(G, H, bb, nb)
    for b in range(bb, nb):
        out[b] = v2
    return gain1 + gain2


@numba.njit(cache=True)
def _histogram(bins, j, rows, f, y, w, G, H, C, nb):
    for b in range(nb):
        G[b] = 0.0
        H[b] = 0.0
        C[b] = 0.0
    for t in range(rows.size):
        i = rows[t]
        p = 1.0 / (1.0 + math.exp(-f[i]))
        b = bins[i, j]
        G[b] += w[i] * (p - y[i])
        H[b] += w[i] * p * (1.0 - p)
        C[b] += w[i]


@numba.njit(cache=True)
def _log_loss(rows, f, y):
    acc = 0.0
    for t in range(rows.size):
        i = rows[t]
        z = f[i]
        # log(1 + exp(-z)) for y=1, log(1 + exp(z)) for y=0, overflow-safe
        s = -z if y[i] > 0.5 else z
        acc += max(s, 0.0) + math.log1p(math.exp(-abs(s)))
    return acc


@numba.njit(cache=True)
def _apply(bins, j, rows, f, table, v, lr, nb):
    for b in range(nb):
        table[j, b] += lr * v[b]
    for t in range(rows.size):
        i = rows[t]
        f[i] += lr * v[bins[i, j]]


@numba.njit(cache=True)
def _boost_bag(bins, nbins, y, w, train_rows, val_rows, alpha0, lr, max_rounds, patience, greedy_rounds, min_leaf):
    n, d = bins.shape
    bmax = 1
    for j in range(d):
        bmax = max(bmax, nbins[j])
    table = np.zeros((d, bmax))
    best_table = table.copy()
    f = np.full(n, alpha0)
    all_rows = np.concatenate((train_rows, val_rows))
    G = np.empty(bmax)
    H = np.empty(bmax)
    C = np.empty(bmax)
    v = np.empty(bmax)
    vbest = np.empty(bmax)
    best_loss = np.inf
    best_round = 0
    rounds = 0
    for r in range(1, max_rounds + 1):
        rounds = r
        for j in range(d):
            _histogram(bins, j, train_rows, f, y, w, G, H, C, nbins[j])
            _fit_tree(G, H, C, nbins[j], min_leaf, v)
            _apply(bins, j, all_rows, f, table, v, lr, nbins[j])
        for _ in range(greedy_rounds):
            best_gain = -1.0
            best_j = -1
            for j in range(d):
                _histogram(bins, j, train_rows, f, y, w, G, H, C, nbins[j])
                gain = _fit_tree(G, H, C, nbins[j], min_leaf, v)
                if gain > best_gain:
                    best_gain = gain
                    best_j = j
                    for b in range(nbins[j]):
                        vbest[b] = v[b]
            if best_j >= 0:
                _apply(bins, best_j, all_rows, f, table, vbest, lr, nbins[best_j])
        if val_rows.size > 0:
            loss = _log_loss(val_rows, f, y)
            if loss < best_loss:
                best_loss = loss
                best_round = r
                best_table[:, :] = table
            elif r - best_round >= patience:
                break
    if val_rows.size > 0:
        return best_table, best_round
    return table, rounds


@numba.njit(cache=True)
def _boost_pairs(cells, ncells, f, y, w, train_rows, val_rows, lr, max_rounds, patience, l2):
    n, P = cells.shape
    table = np.zeros((P, ncells))
    best_table = table.copy()
    all_rows = np.concatenate((train_rows, val_rows))
    G = np.empty(ncells)
    H = np.empty(ncells)
    C = np.empty(ncells)
    v = np.empty(ncells)
    best_loss = np.inf
    best_round = 0
    for r in range(1, max_rounds + 1):
        for q in range(P):
            _histogram(cells, q, train_rows, f, y, w, G, H, C, ncells)
            for c in range(ncells):
                v[c] = -G[c] / (H[c] + l2)
            _apply(cells, q, all_rows, f, table, v, lr, ncells)
        if val_rows.size > 0:
            loss = _log_loss(val_rows, f, y)
            if loss < best_loss:
                best_loss = loss
                best_round = r
                best_table[:, :] = table
            elif r - best_round >= patience:
                break
    if val_rows.size > 0:
        return best_table
    return table


# ---------------------------------------------------------------------------
# model


@dataclass(frozen=True, eq=False)
class Term:
    name: str
    edges: np.ndarray
    scores: np.ndarray
    counts_good: np.ndarray
    counts_bad: np.ndarray
    data_min: float
    data_max: float

    @property
    def n_bins(self) -> int:
        return self.scores.size

    def lookup(self, column: np.ndarray) -> np.ndarray:
        return self.scores[assign_bins(column, self.edges)]


@dataclass(frozen=True, eq=False)
class PairTerm:
    features: tuple[str, str]
    edges: tuple[np.ndarray, np.ndarray]
    scores: np.ndarray  # (len(edges[0]) + 1, len(edges[1]) + 1)

    @property
    def name(self) -> str:
        return f"{self.features[0]} & {self.features[1]}"

    def lookup(self, col_a: np.ndarray, col_b: np.ndarray) -> np.ndarray:
        return self.scores[assign_bins(col_a, self.edges[0]), assign_bins(col_b, self.edges[1])]


@dataclass(frozen=True)
class Explanation:
    per_term_score: tuple[tuple[str, float], ...]
    intercept: float
    total: float
    predicted: str


@dataclass(frozen=True)
class FeatureCurve:
    name: str
    values: np.ndarray
    scores: np.ndarray
    counts_good: np.ndarray
    counts_bad: np.ndarray
    edges: np.ndarray


@dataclass(frozen=True, eq=False)
class EbmModel:
    intercept: float
    terms: tuple[Term, ...]
    pair_terms: tuple[PairTerm, ...] = ()
    config: EbmConfig = field(default_factory=EbmConfig)
    classes: tuple[str, str] = (GOOD, BAD)

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(t.name for t in self.terms)

    @property
    def term_names(self) -> tuple[str, ...]:
        return self.feature_names + tuple(p.name for p in self.pair_terms)

    def term(self, name: str) -> Term:
        for t in self.terms:
            if t.name == name:
                return t
        raise EbmError(f"unknown term {name!r}")

    # -- inputs --------------------------------------------------------------

    def _matrix(self, x) -> np.ndarray:
        """Rows of model-ordered feature values from a vector, mapping or matrix."""
        names = self.feature_names
        if isinstance(x, FeatureVector):
            x = x.as_dict()
        if isinstance(x, dict):
            missing = [n for n in names if n not in x]
            if missing:
                raise MissingFeatureError(missing[0])
            row = np.array([x[n] for n in names], dtype=float)
            return _as_matrix(row[None, :])
        X = np.asarray(x, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != len(names):
            raise EbmError(f"expected {len(names)} feature columns, got shape {X.shape}")
        return _as_matrix(X)

    def contributions(self, x) -> np.ndarray:
        """Per-term contributions, shape (rows, terms); columns follow ``term_names``."""
        X = self._matrix(x)
        index = {n: j for j, n in enumerate(self.feature_names)}
        cols = [t.lookup(X[:, j]) for j, t in enumerate(self.terms)]
        cols += [p.lookup(X[:, index[p.features[0]]], X[:, index[p.features[1]]]) for p in self.pair_terms]
        if not cols:
            return np.zeros((X.shape[0], 0))
        return np.column_stack(cols)

    # -- prediction ----------------------------------------------------------

    def predict_scores(self, X) -> np.ndarray:
        total = np.full(self._matrix(X).shape[0], self.intercept)
        for c in self.contributions(X).T:
            total = total + c
        return total

    def predict_score(self, x) -> float:
        return float(self.predict_scores(x)[0])

    def predict_classes(self, X, threshold: float = 0.0) -> list[str]:
        return [GOOD if s > threshold else BAD for s in self.predict_scores(X)]

    def predict_class(self, x, threshold: float = 0.0) -> str:
        return self.predict_classes(x, threshold)[0]

    # -- explanation ---------------------------------------------------------

    def feature_importance(self, X) -> list[tuple[str, float]]:
        """Mean |contribution| per term, sorted descending."""
        imp = np.abs(self.contributions(X)).mean(axis=0)
        pairs = list(zip(self.term_names, imp.tolist()))
        return sorted(pairs, key=lambda p: -p[1])

    def feature_curve(self, name: str) -> FeatureCurve:
        t = self.term(name)
        e = t.edges
        if e.size == 0:
            values = np.array([0.5 * (t.data_min + t.data_max)])
        else:
            bounds = np.concatenate([[min(t.data_min, e[0])], e, [max(t.data_max, e[-1])]])
            values = 0.5 * (bounds[1:] + bounds[:-1])
        return FeatureCurve(name, values, t.scores.copy(), t.counts_good.copy(), t.counts_bad.copy(), e.copy())

    def explain_local(self, x) -> Explanation:
        contrib = self.contributions(x)[0]
        total = self.intercept
        for c in contrib:
            total = total + c
        order = sorted(range(len(contrib)), key=lambda k: -abs(contrib[k]))
        per_term = tuple((self.term_names[k], float(contrib[k])) for k in order)
        return Explanation(per_term, float(self.intercept), float(total), GOOD if total > 0 else BAD)

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "classes": list(self.classes),
            "intercept": self.intercept,
            "config": asdict(self.config),
            "terms": [
                {
                    "name": t.name,
                    "edges": t.edges.tolist(),
                    "scores": t.scores.tolist(),
                    "counts_good": t.counts_good.tolist(),
                    "counts_bad": t.counts_bad.tolist(),
                    "data_min": t.data_min,
                    "data_max": t.data_max,
                }
                for t in self.terms
            ],
            "pair_terms": [
                {"features": list(p.features), "edges": [p.edges[0].tolist(), p.edges[1].tolist()], "scores": p.scores.tolist()}
                for p in self.pair_terms
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EbmModel":
        if d.get("format") != MODEL_FORMAT or d.get("version") != MODEL_VERSION:
            raise EbmError("unsupported model file")
        terms = tuple(
            Term(
                t["name"],
                np.array(t["edges"], dtype=float),
                np.array(t["scores"], dtype=float),
                np.array(t["counts_good"], dtype=float),
                np.array(t["counts_bad"], dtype=float),
                float(t["data_min"]),
                float(t["data_max"]),
            )
            for t in d["terms"]
        )
        pairs = tuple(
            PairTerm(
                tuple(p["features"]),
                (np.array(p["edges"][0], dtype=float), np.array(p["edges"][1], dtype=float)),
                np.array(p["scores"], dtype=float).reshape(len(p["edges"][0]) + 1, len(p["edges"][1]) + 1),
            )
            for p in d["pair_terms"]
        )
        return cls(float(d["intercept"]), terms, pairs, EbmConfig(**d["config"]), tuple(d["classes"]))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "EbmModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# ---------------------------------------------------------------------------
# training


def smooth_curve(scores: np.ndarray, window: int) -> np.ndarray:
    """Centred moving average; the window shrinks at the ends."""
    if window <= 1 or scores.size <= 1:
        return scores.copy()
    half = window // 2
    c = np.concatenate([[0.0], np.cumsum(scores)])
    i = np.arange(scores.size)
    lo = np.maximum(i - half, 0)
    hi = np.minimum(i + half + 1, scores.size)
    return (c[hi] - c[lo]) / (hi - lo)


def _bag_split(y: np.ndarray, cfg: EbmConfig, bag: int, bootstrap: bool) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(weights, train rows, validation rows) for one bag."""
    rng = np.random.default_rng([cfg.seed & (2**63 - 1), bag])
    n = y.size
    val = []
    train = []
    for cls in (1.0, 0.0):
        idx = rng.permutation(np.flatnonzero(y == cls))
        nv = int(math.floor(cfg.validation_fraction * idx.size + 0.5))
        nv = min(nv, idx.size - 1)
        val.append(idx[:nv])
        train.append(idx[nv:])
    val = np.sort(np.concatenate(val))
    train = np.sort(np.concatenate(train))
    w = np.zeros(n)
    if bootstrap:
        # bootstrap within each class so both classes stay represented
        for part in train_by_class(train, y):
            draw = rng.choice(part, size=part.size, replace=True)
            w += np.bincount(draw, minlength=n)
    else:
        w[train] = 1.0
    rows = np.flatnonzero(w > 0)
    return w, rows.astype(np.int64), val.astype(np.int64)


def train_by_class(rows: np.ndarray, y: np.ndarray) -> list[np.ndarray]:
    return [rows[y[rows] == cls] for cls in (1.0, 0.0)]


def _log_odds(y: np.ndarray, w: np.ndarray) -> float:
    pos = float(np.sum(w * y))
    neg = float(np.sum(w * (1.0 - y)))
    return math.log(pos / neg)


def _rank_pairs(Xb16: np.ndarray, resid: np.ndarray, n_pairs: int) -> list[tuple[int, int]]:
    """Pairs ordered by the between-cell sum of squares of the residual."""
    d = Xb16.shape[1]
    scored = []
    for a in range(d):
        for b in range(a + 1, d):
            cell = Xb16[:, a] * PAIR_BINS + Xb16[:, b]
            s = np.bincount(cell, weights=resid, minlength=PAIR_BINS * PAIR_BINS)
            c = np.bincount(cell, minlength=PAIR_BINS * PAIR_BINS)
            nz = c > 0
            scored.append((float(np.sum(s[nz] ** 2 / c[nz])), a, b))
    scored.sort(key=lambda t: (-t[0], t[1], t[2]))
    return [(a, b) for _, a, b in scored[:n_pairs]]


def train_ebm(X, y, cfg: EbmConfig = EbmConfig(), feature_names=None) -> EbmModel:
    X = _as_matrix(X)
    yv = encode_labels(y)
    n, d = X.shape
    if yv.size != n:
        raise InvalidDataError(f"{yv.size} labels for {n} rows")
    n_good = int(yv.sum())
    if n_good < 2 or n - n_good < 2:
        raise InvalidDataError("training needs at least two samples of each class")
    names = tuple(feature_names) if feature_names is not None else tuple(f"x{j}" for j in range(d))
    if len(names) != d or len(set(names)) != d:
        raise InvalidDataError("feature names must be unique, one per column")

    edges = bin_features(X, cfg.n_bins)
    nbins = np.array([e.size + 1 for e in edges], dtype=np.int64)
    bins = np.column_stack([assign_bins(X[:, j], edges[j]) for j in range(d)]).astype(np.int64)
    bins = np.ascontiguousarray(bins)

    tables = []
    for bag in range(cfg.outer_bags):
        w, rows, val = _bag_split(yv, cfg, bag, bootstrap=cfg.outer_bags > 1)
        alpha0 = _log_odds(yv[rows], w[rows])
        table, _ = _boost_bag(
            bins, nbins, yv, w, rows, val, alpha0, cfg.learning_rate, cfg.max_rounds,
            cfg.early_stop_patience, cfg.greedy_rounds, float(cfg.min_samples_leaf),
        )
        tables.append((alpha0, table))
    alpha = float(np.mean([a for a, _ in tables]))
    mean_table = np.mean([t for _, t in tables], axis=0)
    scores = [smooth_curve(mean_table[j, : nbins[j]], cfg.smoothing_window) for j in range(d)]

    f = np.full(n, alpha)
    for j in range(d):
        f += scores[j][bins[:, j]]

    pair_terms = []
    n_pairs = min(cfg.n_pairs, d * (d - 1) // 2)
    if n_pairs > 0:
        edges16 = bin_features(X, PAIR_BINS)
        Xb16 = np.column_stack([assign_bins(X[:, j], edges16[j]) for j in range(d)])
        resid = yv - 1.0 / (1.0 + np.exp(-f))
        chosen = _rank_pairs(Xb16, resid, n_pairs)
        cells = np.ascontiguousarray(np.column_stack([Xb16[:, a] * PAIR_BINS + Xb16[:, b] for a, b in chosen]), dtype=np.int64)
        w, rows, val = _bag_split(yv, cfg, cfg.outer_bags, bootstrap=False)
        ptable = _boost_pairs(
            cells, PAIR_BINS * PAIR_BINS, f.copy(), yv, w, rows, val, cfg.learning_rate,
            cfg.max_rounds, cfg.early_stop_patience, PAIR_L2,
        )
        for q, (a, b) in enumerate(chosen):
            na, nb = edges16[a].size + 1, edges16[b].size + 1
            grid = ptable[q].reshape(PAIR_BINS, PAIR_BINS)[:na, :nb].copy()
            pair_cells = Xb16[:, a] * nb + Xb16[:, b]
            shift = float(np.mean(grid.ravel()[pair_cells]))
            grid -= shift
            alpha += shift
            pair_terms.append(PairTerm((names[a], names[b]), (edges16[a], edges16[b]), grid))

    terms = []
    for j in range(d):
        s = scores[j]
        counts = np.bincount(bins[:, j], minlength=nbins[j]).astype(float)
        shift = float(np.dot(counts, s) / n)
        s = s - shift
        alpha += shift
        good = np.bincount(bins[:, j], weights=yv, minlength=nbins[j])
        terms.append(Term(names[j], edges[j], s, good, counts - good, float(X[:, j].min()), float(X[:, j].max())))
    return EbmModel(float(alpha), tuple(terms), tuple(pair_terms), cfg)
