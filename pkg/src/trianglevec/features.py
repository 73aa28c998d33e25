"""Named feature vectors and their CSV form."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SYNTH_FEATURES = ("sigma", "H_B", "H_M", "H_R", "V_B", "V_M", "V_R", "D_B", "D_M", "D_R", "D_theta", "F")


@dataclass(frozen=True, eq=False)
class FeatureVector:
    names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).ravel()
        names = tuple(self.names)
        if len(names) != vals.size:
            raise ValueError(f"{len(names)} names for {vals.size} values")
        if not np.all(np.isfinite(vals)):
            bad = [n for n, v in zip(names, vals) if not np.isfinite(v)]
            raise ValueError(f"non-finite feature values: {bad}")
        vals.setflags(write=False)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return len(self.names)

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.values.tolist()))

    def extend(self, names, values) -> "FeatureVector":
        return FeatureVector(self.names + tuple(names), np.concatenate([self.values, np.asarray(values, float)]))


def write_feature_csv(path, ids, vectors, labels=None, extra: dict | None = None) -> None:
    """Write one row per image: ``id``, the features, then ``label`` (and extra columns)."""
    if not vectors:
        raise ValueError("no feature vectors to write")
    names = vectors[0].names
    extra = extra or {}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = ["id", *names]
        if labels is not None:
            header.append("label")
        header += list(extra)
        w.writerow(header)
        for i, (image_id, fv) in enumerate(zip(ids, vectors)):
            if fv.names != names:
                raise ValueError(f"feature layout mismatch for {image_id}")
            row = [image_id, *(repr(float(v)) for v in fv.values)]
            if labels is not None:
                row.append(labels[i])
            row += [str(col[i]) for col in extra.values()]
            w.writerow(row)


class SchemaError(ValueError):
    pass


def read_feature_csv(path, require_label: bool = True, exclude=("evals",)):
    """Return ``(ids, feature_names, X, labels)``; labels is None if absent and not required."""
    with open(Path(path), newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaError(f"{path}: empty feature file")
    header = rows[0]
    if not header or header[0] != "id":
        raise SchemaError(f"{path}: first column must be 'id'")
    has_label = "label" in header
    if require_label and not has_label:
        raise SchemaError(f"{path}: missing 'label' column")
    skip = {"id", "label", *exclude}
    cols = [i for i, h in enumerate(header) if h not in skip]
    names = tuple(header[i] for i in cols)
    li = header.index("label") if has_label else None
    ids, X, labels = [], [], []
    for n, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise SchemaError(f"{path}:{n}: expected {len(header)} fields, got {len(row)}")
        ids.append(row[0])
        try:
            X.append([float(row[i]) for i in cols])
        except ValueError as exc:
            raise SchemaError(f"{path}:{n}: non-numeric feature") from exc
        if li is not None:
            labels.append(row[li])
    X = np.array(X, dtype=float).reshape(len(ids), len(names))
    return ids, names, X, (labels if has_label else None)
