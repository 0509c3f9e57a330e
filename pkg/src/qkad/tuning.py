"""Random-search hyperparameter tuning scored by cross-validated average precision.

OC-SVM trials fit on the nominal rows of the training folds and are scored
on the full held-out fold, labels included.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .feature_maps import FeatureMapConfig
from .kernels import FIDELITY, PROJECTED, RBF, KernelConfig, _sq_dists, gram, pauli_features
from .metrics import average_precision
from .models import predict_scores, train_logreg, train_ocsvm, train_svc

__all__ = [
    "MODEL_KINDS",
    "SearchSpace",
    "TrialResult",
    "SearchResult",
    "KernelTable",
    "default_gamma",
    "default_space",
    "stratified_folds",
    "fit_and_score",
    "cv_score",
    "random_search",
    "save_trials_csv",
]

# model kind -> (learner, kernel kind or None)
MODEL_KINDS: dict[str, tuple[str, str | None]] = {
    "logreg": ("logreg", None),
    "svc-rbf": ("svc", RBF),
    "svc-fidelity": ("svc", FIDELITY),
    "svc-projected": ("svc", PROJECTED),
    "ocsvm-rbf": ("ocsvm", RBF),
    "ocsvm-fidelity": ("ocsvm", FIDELITY),
    "ocsvm-projected": ("ocsvm", PROJECTED),
}

NU_GRID = tuple(round(0.05 * k, 2) for k in range(1, 11))


def default_gamma(X) -> float:
    """1 / (F * Var[X]) with the variance pooled over every entry."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    var = float(X.var())
    if not var > 0:
        raise ValueError("default gamma is undefined for zero-variance data")
    return 1.0 / (X.shape[1] * var)


@dataclass
class SearchSpace:
    """Per-parameter distributions.

    Each entry is ``("loguniform", lo, hi)``, ``("uniform", lo, hi)`` or
    ``("choice", [values...])``.
    """

    params: dict[str, tuple]
    n_trials: int = 20
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_trials < 1:
            raise ValueError(f"n_trials must be >= 1, got {self.n_trials}")
        for name, spec in self.params.items():
            kind = spec[0]
            if kind in ("loguniform", "uniform"):
                lo, hi = spec[1], spec[2]
                if not lo < hi:
                    raise ValueError(f"{name}: need lo < hi, got {lo}, {hi}")
                if kind == "loguniform" and lo <= 0:
                    raise ValueError(f"{name}: log-uniform bounds must be positive")
            elif kind == "choice":
                if len(spec[1]) == 0:
                    raise ValueError(f"{name}: empty choice set")
            else:
                raise ValueError(f"{name}: unknown distribution {kind!r}")

    def sample(self) -> list[dict[str, Any]]:
        rng = np.random.default_rng(self.seed)
        out = []
        for _ in range(self.n_trials):
            trial = {}
            for name in sorted(self.params):
                spec = self.params[name]
                if spec[0] == "loguniform":
                    trial[name] = float(math.exp(rng.uniform(math.log(spec[1]), math.log(spec[2]))))
                elif spec[0] == "uniform":
                    trial[name] = float(rng.uniform(spec[1], spec[2]))
                else:
                    choices = list(spec[1])
                    trial[name] = choices[int(rng.integers(len(choices)))]
            out.append(trial)
        return out

    def to_dict(self) -> dict[str, Any]:
        return {"params": {k: list(v) for k, v in self.params.items()},
                "n_trials": self.n_trials, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> SearchSpace:
        return cls({k: tuple(v) for k, v in d["params"].items()}, d.get("n_trials", 20), d.get("seed", 0))


def default_space(model_kind: str, n_trials: int = 20, seed: int = 0) -> SearchSpace:
    learner, kernel = MODEL_KINDS[model_kind]
    params: dict[str, tuple] = {}
    if learner in ("logreg", "svc"):
        params["C"] = ("loguniform", 1e-2, 1e2)
    else:
        params["nu"] = ("choice", list(NU_GRID))
    if kernel in (RBF, PROJECTED):
        params["gamma"] = ("loguniform", 1e-4, 1e1)
    return SearchSpace(params, n_trials, seed)


@dataclass
class TrialResult:
    params: dict[str, Any]
    fold_scores: list[float]

    @property
    def mean_score(self) -> float:
        return float(np.mean(self.fold_scores))


@dataclass
class SearchResult:
    best: TrialResult
    trials: list[TrialResult] = field(default_factory=list)

    @property
    def best_index(self) -> int:
        return next(i for i, t in enumerate(self.trials) if t is self.best)


class KernelTable:
    """Kernel values over a fixed row set, reusable across hyperparameters.

    RBF and projected kernels keep squared distances (in feature space or
    in Pauli-expectation space) so any ``gamma`` is one exponential away;
    the fidelity kernel has no hyperparameter and is stored directly.
    """

    def __init__(self, X, kernel: str, feature_map: FeatureMapConfig | None = None,
                 shots: int | None = None, shot_seed: int = 0):
        self.X = np.asarray(X, dtype=float)
        self.kernel = kernel
        self.feature_map = feature_map
        if kernel == RBF:
            self._dist = _sq_dists(self.X, self.X)
        elif kernel == PROJECTED:
            p = pauli_features(self.X, feature_map)
            self._dist = _sq_dists(p, p)
        elif kernel == FIDELITY:
            cfg = KernelConfig(FIDELITY, feature_map=feature_map, shots=shots, shot_seed=shot_seed)
            self._K = gram(self.X, cfg).values
        else:
            raise ValueError(f"unknown kernel {kernel!r}")

    def matrix(self, gamma: float | None = None) -> np.ndarray:
        if self.kernel == FIDELITY:
            return self._K
        if gamma is None:
            gamma = (default_gamma(self.X) if self.kernel == RBF
                     else 1.0 / (3 * self.feature_map.n_qubits))
        K = np.exp(-gamma * self._dist)
        np.fill_diagonal(K, 1.0)
        return K


def stratified_folds(labels, k: int, seed: int) -> np.ndarray:
    """Fold index per row; each class is shuffled and dealt round-robin."""
    labels = np.asarray(labels)
    if k < 2:
        raise ValueError(f"k_folds must be >= 2, got {k}")
    n_pos = int(np.sum(labels == 1))
    if n_pos < k:
        raise ValueError(f"{n_pos} positive rows cannot populate {k} folds; every fold needs a positive")
    rng = np.random.default_rng(seed)
    fold = np.empty(labels.shape[0], dtype=int)
    offset = 0
    for cls in (1, 0):
        idx = rng.permutation(np.flatnonzero(labels == cls))
        fold[idx] = (np.arange(idx.size) + offset) % k
        offset += idx.size
    return fold


def fit_and_score(model_kind: str, params: dict[str, Any], table: KernelTable | None,
                  X: np.ndarray, y: np.ndarray, train: np.ndarray, test: np.ndarray) -> np.ndarray:
    """Train on rows ``train`` and return anomaly scores for rows ``test``."""
    learner, _ = MODEL_KINDS[model_kind]
    if learner == "logreg":
        model = train_logreg(X[train], y[train], C=params.get("C", 1.0))
        return predict_scores(model, X[test])
    K = table.matrix(params.get("gamma"))
    if learner == "svc":
        model = train_svc(K[np.ix_(train, train)], y[train], C=params.get("C", 1.0))
        return predict_scores(model, K[np.ix_(test, train)])
    nominal = train[y[train] == 0]
    model = train_ocsvm(K[np.ix_(nominal, nominal)], nu=params.get("nu", 0.1))
    return predict_scores(model, K[np.ix_(test, nominal)])


def cv_score(model_kind: str, params: dict[str, Any], table: KernelTable | None,
             X, y, folds: np.ndarray) -> TrialResult:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    scores = []
    for f in range(int(folds.max()) + 1):
        test = np.flatnonzero(folds == f)
        train = np.flatnonzero(folds != f)
        s = fit_and_score(model_kind, params, table, X, y, train, test)
        scores.append(average_precision(s, y[test]))
    return TrialResult(dict(params), scores)


def random_search(X, y, model_kind: str, space: SearchSpace, k_folds: int = 5,
                  feature_map: FeatureMapConfig | None = None, fold_seed: int | None = None,
                  table: KernelTable | None = None) -> SearchResult:
    """Evaluate ``space.n_trials`` random configurations; best is the first maximum."""
    if model_kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {model_kind!r}; expected one of {sorted(MODEL_KINDS)}")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    folds = stratified_folds(y, k_folds, space.seed if fold_seed is None else fold_seed)
    _, kernel = MODEL_KINDS[model_kind]
    if table is None and kernel is not None:
        table = KernelTable(X, kernel, feature_map)
    trials = [cv_score(model_kind, p, table, X, y, folds) for p in space.sample()]
    best = trials[0]
    for t in trials[1:]:
        if t.mean_score > best.mean_score:
            best = t
    return SearchResult(best, trials)


def save_trials_csv(result: SearchResult, path) -> None:
    names = sorted({k for t in result.trials for k in t.params})
    k = max(len(t.fold_scores) for t in result.trials)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", *names, *(f"fold_{i + 1}" for i in range(k)), "mean"])
        for i, t in enumerate(result.trials):
            w.writerow([i, *(repr(t.params.get(n)) for n in names),
                        *(repr(s) for s in t.fold_scores), repr(t.mean_score)])
