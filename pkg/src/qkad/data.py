"""Credit-card CSV ingest and the scale -> PCA -> eta preprocessing chain.

Every transform returns a new :class:`Dataset` with one record appended to
``provenance``; :func:`replay` rebuilds a processed dataset from the raw
input and that record list alone.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

__all__ = [
    "FEATURE_COLUMNS",
    "LABEL_COLUMN",
    "SchemaError",
    "Dataset",
    "ScalerParams",
    "PcaParams",
    "load_csv",
    "subsample",
    "fit_scaler",
    "apply_scaler",
    "fit_pca",
    "apply_pca",
    "apply_eta",
    "replay",
    "save_dataset",
    "load_dataset",
]

FEATURE_COLUMNS = [f"V{i}" for i in range(1, 29)]
LABEL_COLUMN = "Class"


class SchemaError(ValueError):
    pass


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray | None = None
    feature_names: list[str] = field(default_factory=list)
    provenance: list[dict[str, Any]] = field(default_factory=list)
    row_ids: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=float)
        if self.features.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {self.features.shape}")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features contain NaN or Inf")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=int)
            if self.labels.shape != (self.features.shape[0],):
                raise ValueError(f"{self.labels.shape[0]} labels for {self.features.shape[0]} rows")
        if not self.feature_names:
            self.feature_names = [f"f{i}" for i in range(self.features.shape[1])]
        if not self.row_ids:
            self.row_ids = [str(i) for i in range(self.features.shape[0])]

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def take(self, idx) -> Dataset:
        """Row subset, provenance unchanged."""
        idx = np.asarray(idx, dtype=int)
        return Dataset(
            self.features[idx],
            None if self.labels is None else self.labels[idx],
            list(self.feature_names),
            list(self.provenance),
            [self.row_ids[i] for i in idx],
        )

    def _derive(self, features: np.ndarray, record: dict[str, Any], names: list[str] | None = None) -> Dataset:
        return replace(
            self,
            features=features,
            feature_names=names if names is not None else list(self.feature_names),
            provenance=[*self.provenance, record],
            row_ids=list(self.row_ids),
        )


@dataclass(frozen=True)
class ScalerParams:
    means: np.ndarray
    stds: np.ndarray


@dataclass(frozen=True)
class PcaParams:
    mean: np.ndarray
    components: np.ndarray  # (F, N), orthonormal columns
    explained_variance: np.ndarray


def load_csv(path) -> Dataset:
    """Read the Kaggle credit-card CSV, keeping ``V1..V28`` and ``Class``.

    ``Time`` and ``Amount`` are dropped. Unparsable cells raise a
    ``ValueError`` naming the file line.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip().strip('"') for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        missing = [c for c in [*FEATURE_COLUMNS, LABEL_COLUMN] if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
        cols = [header.index(c) for c in FEATURE_COLUMNS]
        lab = header.index(LABEL_COLUMN)
        feats, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                vals = [float(row[c]) for c in cols]
                y = int(float(row[lab].strip().strip('"')))
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}: line {lineno}: cannot parse row ({exc})") from None
            if not all(math.isfinite(v) for v in vals) or y not in (0, 1):
                raise ValueError(f"{path}: line {lineno}: non-finite feature or label not in {{0, 1}}")
            feats.append(vals)
            labels.append(y)
    X = np.array(feats, dtype=float).reshape(-1, len(FEATURE_COLUMNS))
    return Dataset(
        X,
        np.array(labels, dtype=int),
        list(FEATURE_COLUMNS),
        [{"op": "load_csv", "path": str(path), "rows": len(labels)}],
    )


def subsample(d: Dataset, n_nominal: int, n_fraud: int, seed: int) -> Dataset:
    """Per-class uniform sampling without replacement; rows keep their input order."""
    if d.labels is None:
        raise ValueError("subsample needs labels")
    rng = np.random.default_rng(seed)
    picked = []
    for cls, count in ((0, n_nominal), (1, n_fraud)):
        pool = np.flatnonzero(d.labels == cls)
        if count < 0 or count > pool.size:
            raise ValueError(f"requested {count} rows of class {cls}, only {pool.size} available")
        picked.append(rng.choice(pool, size=count, replace=False))
    idx = np.sort(np.concatenate(picked))
    out = d.take(idx)
    out.provenance.append(
        {"op": "subsample", "n_nominal": n_nominal, "n_fraud": n_fraud, "seed": seed}
    )
    return out


def fit_scaler(d: Dataset) -> ScalerParams:
    if d.n_rows < 2:
        raise ValueError("scaler needs at least two rows")
    means = d.features.mean(axis=0)
    stds = d.features.std(axis=0)
    const = [d.feature_names[i] for i in np.flatnonzero(stds <= 0)]
    if const:
        raise ValueError(f"constant feature(s) cannot be standardized: {', '.join(const)}")
    return ScalerParams(means, stds)


def apply_scaler(d: Dataset, p: ScalerParams) -> Dataset:
    if p.means.shape != (d.n_features,):
        raise ValueError(f"scaler fit on {p.means.size} features, data has {d.n_features}")
    X = (d.features - p.means) / p.stds
    return d._derive(X, {"op": "scale", "means": p.means.tolist(), "stds": p.stds.tolist()})


def _is_scaled(d: Dataset) -> bool:
    return any(r.get("op") == "scale" for r in d.provenance)


def fit_pca(d: Dataset, n_components: int, strict: bool = True) -> PcaParams:
    """Leading eigenvectors of the population covariance.

    Each component is sign-fixed so its largest-magnitude entry is positive.
    With ``strict`` a component of (numerically) zero variance is an error.
    """
    if not _is_scaled(d):
        raise ValueError("fit_pca expects standard-scaled input; apply_scaler first")
    limit = min(d.n_features, d.n_rows - 1)
    if not 1 <= n_components <= limit:
        raise ValueError(f"n_components must lie in [1, {limit}], got {n_components}")
    mean = d.features.mean(axis=0)
    Xc = d.features - mean
    cov = Xc.T @ Xc / d.n_rows
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    rank = int(np.sum(evals > 1e-10 * max(evals[0], 1e-300)))
    if strict and rank < n_components:
        raise ValueError(
            f"data has rank {rank}, cannot keep {n_components} components; at most {rank} achievable"
        )
    comps = evecs[:, :n_components]
    big = np.argmax(np.abs(comps), axis=0)
    comps = comps * np.sign(comps[big, np.arange(n_components)])
    return PcaParams(mean, comps, evals[:n_components].copy())


def apply_pca(d: Dataset, p: PcaParams) -> Dataset:
    if p.components.shape[0] != d.n_features:
        raise ValueError(f"PCA fit on {p.components.shape[0]} features, data has {d.n_features}")
    # fixed memory layout keeps the BLAS path, and so the bits, identical on replay
    X = np.ascontiguousarray(d.features - p.mean) @ np.ascontiguousarray(p.components)
    names = [f"PC{i + 1}" for i in range(p.components.shape[1])]
    rec = {
        "op": "pca",
        "mean": p.mean.tolist(),
        "components": p.components.tolist(),
        "explained_variance": p.explained_variance.tolist(),
    }
    return d._derive(X, rec, names)


def apply_eta(d: Dataset, eta: float) -> Dataset:
    if not (eta > 0 and math.isfinite(eta)):
        raise ValueError(f"eta must be positive and finite, got {eta}")
    return d._derive(d.features * eta, {"op": "eta", "eta": eta})


def replay(raw: Dataset, provenance: list[dict[str, Any]]) -> Dataset:
    """Re-apply recorded transforms to ``raw``.

    Records already present in ``raw.provenance`` are skipped.
    """
    d = raw
    for rec in provenance[len(raw.provenance):]:
        op = rec["op"]
        if op == "subsample":
            d = subsample(d, rec["n_nominal"], rec["n_fraud"], rec["seed"])
        elif op == "scale":
            d = apply_scaler(d, ScalerParams(np.array(rec["means"]), np.array(rec["stds"])))
        elif op == "pca":
            d = apply_pca(d, PcaParams(np.array(rec["mean"]), np.array(rec["components"]),
                                       np.array(rec["explained_variance"])))
        elif op == "eta":
            d = apply_eta(d, rec["eta"])
        else:
            raise ValueError(f"cannot replay provenance op {op!r}")
    return d


def save_dataset(d: Dataset, path) -> None:
    """CSV with header plus a ``<path>.provenance.json`` sidecar."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row_id", *d.feature_names, *([LABEL_COLUMN] if d.labels is not None else [])])
        for i, row in enumerate(d.features):
            tail = [int(d.labels[i])] if d.labels is not None else []
            w.writerow([d.row_ids[i], *(repr(float(v)) for v in row), *tail])
    with open(str(path) + ".provenance.json", "w") as fh:
        json.dump(d.provenance, fh, indent=2)


def load_dataset(path) -> Dataset:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    has_labels = header[-1] == LABEL_COLUMN
    names = header[1:-1] if has_labels else header[1:]
    body = rows[1:]
    X = np.array([[float(v) for v in r[1 : 1 + len(names)]] for r in body]).reshape(len(body), len(names))
    y = np.array([int(r[-1]) for r in body]) if has_labels else None
    side = Path(str(path) + ".provenance.json")
    prov = json.loads(side.read_text()) if side.exists() else []
    return Dataset(X, y, names, prov, [r[0] for r in body])
