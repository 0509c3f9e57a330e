"""Kernel learners trained from precomputed Gram matrices, plus a logistic baseline.

Both SVMs share one pairwise coordinate solver for the box- and
equality-constrained dual

    minimize  1/2 a^T Q a + p^T a
    s.t.      y^T a = const,  0 <= a_i <= ub

with second-order working-set selection. Convergence is declared when the
maximal KKT violation ``m(a) - M(a)`` drops below ``tol``.

Score conventions (higher = more anomalous, fraud is the positive class):

* SVC is trained with fraud as ``+1``; its score is the decision value.
* OC-SVM decision ``f = sum_i a_i k_i - rho`` is negative for outliers; its
  score is ``-f``.
* Logistic regression scores are ``sigmoid(w.x + b)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Union

import numpy as np

from .kernels import GramMatrix

__all__ = [
    "ConvergenceError",
    "SvcModel",
    "OcSvmModel",
    "LogRegModel",
    "train_svc",
    "train_ocsvm",
    "train_logreg",
    "training_outliers",
    "decision",
    "predict_scores",
    "save_model",
    "load_model",
]

TAU = 1e-12
DEFAULT_TOL = 1e-3
MAX_ITER = 1_000_000


class ConvergenceError(RuntimeError):
    pass


@dataclass
class SvcModel:
    alpha: np.ndarray
    y: np.ndarray
    b: float
    C: float
    support_idx: np.ndarray
    kkt_gap: float = 0.0
    train_ids: list[str] = field(default_factory=list)
    kernel: dict[str, Any] | None = None


@dataclass
class OcSvmModel:
    alpha: np.ndarray
    rho: float
    nu: float
    support_idx: np.ndarray
    kkt_gap: float = 0.0
    train_ids: list[str] = field(default_factory=list)
    kernel: dict[str, Any] | None = None
    tol: float = DEFAULT_TOL


@dataclass
class LogRegModel:
    w: np.ndarray
    b: float
    C: float
    grad_norm: float = 0.0


Model = Union[SvcModel, OcSvmModel, LogRegModel]


def _square(K) -> tuple[np.ndarray, list[str], dict | None]:
    if isinstance(K, GramMatrix):
        cfg = None if K.config is None else K.config.to_dict()
        return K.values, list(K.row_ids), cfg
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValueError(f"Gram matrix must be square, got shape {K.shape}")
    return K, [], None


def _solve_dual(Q: np.ndarray, p: np.ndarray, y: np.ndarray, ub: float,
                alpha: np.ndarray, tol: float, max_iter: int) -> tuple[np.ndarray, np.ndarray, float]:
    """Pairwise coordinate descent on the dual; returns (alpha, gradient, final gap)."""
    n = len(y)
    alpha = alpha.astype(float).copy()
    G = Q @ alpha + p
    QD = np.diag(Q).copy()
    pos = y > 0
    for it in range(max_iter):
        at_ub = alpha >= ub
        at_lb = alpha <= 0
        up = np.where(pos, ~at_ub, ~at_lb)
        low = np.where(pos, ~at_lb, ~at_ub)
        yG = -y * G
        if not up.any() or not low.any():
            return alpha, G, 0.0
        cand = np.where(up, yG, -np.inf)
        i = int(np.argmax(cand))
        gmax = cand[i]
        gmin = np.min(np.where(low, yG, np.inf))
        gap = gmax - gmin
        if gap < tol:
            return alpha, G, float(gap)
        # second-order choice of j among violating partners
        b_it = gmax - yG
        a_it = QD[i] + QD - 2.0 * y[i] * y * Q[i]
        a_it = np.where(a_it > 0, a_it, TAU)
        score = np.where(low & (yG < gmax), -(b_it * b_it) / a_it, np.inf)
        j = int(np.argmin(score))

        ai_old, aj_old = alpha[i], alpha[j]
        Qij = Q[i, j]
        if y[i] != y[j]:
            quad = QD[i] + QD[j] + 2.0 * Qij
            quad = quad if quad > 0 else TAU
            delta = (-G[i] - G[j]) / quad
            diff = ai_old - aj_old
            ai, aj = ai_old + delta, aj_old + delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > ub:
                    ai, aj = ub, ub - diff
            elif aj > ub:
                aj, ai = ub, ub + diff
        else:
            quad = QD[i] + QD[j] - 2.0 * Qij
            quad = quad if quad > 0 else TAU
            delta = (G[i] - G[j]) / quad
            total = ai_old + aj_old
            ai, aj = ai_old - delta, aj_old + delta
            if total > ub:
                if ai > ub:
                    ai, aj = ub, total - ub
            elif aj < 0:
                aj, ai = 0.0, total
            if total > ub:
                if aj > ub:
                    aj, ai = ub, total - ub
            elif ai < 0:
                ai, aj = 0.0, total
        alpha[i], alpha[j] = ai, aj
        G += Q[i] * (ai - ai_old) + Q[j] * (aj - aj_old)
    raise ConvergenceError(f"dual solver did not converge in {max_iter} iterations")


def _canonical_order(K: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Row order determined by content alone, so relabeled inputs solve identically."""
    keys = np.sort(K, axis=1)
    return np.lexsort((*keys.T[::-1], np.diag(K), y))


def _offset(alpha: np.ndarray, G: np.ndarray, y: np.ndarray, ub: float) -> float:
    """Average y_i G_i over free variables; bound-interval midpoint otherwise."""
    yG = y * G
    free = (alpha > 0) & (alpha < ub)
    if free.any():
        return float(np.mean(yG[free]))
    at_ub = alpha >= ub
    upper_side = (at_ub & (y < 0)) | (~at_ub & (y > 0))
    hi = np.min(yG[upper_side]) if upper_side.any() else math.inf
    lo = np.max(yG[~upper_side]) if (~upper_side).any() else -math.inf
    if math.isinf(hi):
        return float(lo)
    if math.isinf(lo):
        return float(hi)
    return float(0.5 * (hi + lo))


def train_svc(K, y, C: float, tol: float = DEFAULT_TOL, diag_reg: float = 0.0,
              max_iter: int = MAX_ITER) -> SvcModel:
    """Soft-margin SVC dual on a precomputed Gram matrix.

    Args:
        K: Square Gram matrix (array or :class:`GramMatrix`).
        y: Labels in ``{-1, +1}`` (``{0, 1}`` is accepted and mapped).
        C: Box bound on the dual coefficients.
        tol: Stopping threshold on the maximal KKT violation.
        diag_reg: Added to the Gram diagonal; useful for shot-noisy matrices.
    """
    Kv, ids, cfg = _square(K)
    y = np.asarray(y, dtype=float)
    if set(np.unique(y)) <= {0.0, 1.0}:
        y = 2.0 * y - 1.0
    if y.shape != (Kv.shape[0],):
        raise ValueError(f"{y.shape[0]} labels for a {Kv.shape[0]}x{Kv.shape[0]} Gram matrix")
    if not set(np.unique(y)) <= {-1.0, 1.0}:
        raise ValueError("labels must be +-1 or 0/1")
    if len(np.unique(y)) < 2:
        raise ValueError("SVC needs both classes in the training labels")
    if not C > 0:
        raise ValueError(f"C must be positive, got {C}")
    Kr = Kv + diag_reg * np.eye(len(y)) if diag_reg else Kv
    o = _canonical_order(Kr, y)
    yo = y[o]
    Q = np.outer(yo, yo) * Kr[np.ix_(o, o)]
    ao, G, gap = _solve_dual(Q, -np.ones(len(y)), yo, float(C), np.zeros(len(y)), tol, max_iter)
    b = -_offset(ao, G, yo, float(C))
    alpha = np.empty_like(ao)
    alpha[o] = ao
    support = np.flatnonzero(alpha > 0)
    return SvcModel(alpha, y, b, float(C), support, gap, ids, cfg)


def train_ocsvm(K, nu: float = 0.1, tol: float = DEFAULT_TOL, diag_reg: float = 0.0,
                max_iter: int = MAX_ITER) -> OcSvmModel:
    """One-class SVM on a Gram matrix of nominal rows.

    Solves ``min 1/2 a^T K a`` with ``0 <= a_i <= 1/(nu N)`` and ``sum a = 1``.
    """
    Kv, ids, cfg = _square(K)
    n = Kv.shape[0]
    if not 0 < nu <= 1:
        raise ValueError(f"nu must lie in (0, 1], got {nu}")
    if nu * n < 1:
        raise ValueError(f"nu * N = {nu * n:g} < 1: box bound 1/(nu N) leaves no feasible point")
    ub = 1.0 / (nu * n)
    k = int(nu * n)
    a0 = np.zeros(n)
    a0[:k] = ub
    if k < n:
        a0[k] = 1.0 - k * ub
    Kr = Kv + diag_reg * np.eye(n) if diag_reg else Kv
    ones = np.ones(n)
    o = _canonical_order(Kr, ones)
    ao, G, gap = _solve_dual(Kr[np.ix_(o, o)], np.zeros(n), ones, ub, a0, tol, max_iter)
    rho = _offset(ao, G, ones, ub)
    alpha = np.empty_like(ao)
    alpha[o] = ao
    support = np.flatnonzero(alpha > 0)
    return OcSvmModel(alpha, rho, float(nu), support, gap, ids, cfg, tol)


def training_outliers(model: OcSvmModel, K) -> np.ndarray:
    """Mask of training rows strictly outside the learned boundary.

    Free support vectors sit on the boundary only up to solver precision, so
    a row counts as an outlier when ``f < -tol`` rather than ``f < 0``.
    """
    Kv, _, _ = _square(K)
    f = Kv @ model.alpha - model.rho
    return f < -model.tol


def _weighted(rows: np.ndarray, coef: np.ndarray) -> np.ndarray:
    # correctly rounded row sums: independent of batch shape and column order
    prod = np.atleast_2d(rows * coef)
    out = np.fromiter((math.fsum(r) for r in prod), float, count=prod.shape[0])
    return out if rows.ndim > 1 else out[0]


def decision(model: SvcModel | OcSvmModel, k_row) -> float:
    """Decision value for one query given its kernel values against the training rows."""
    k_row = np.asarray(k_row, dtype=float)
    if k_row.shape != model.alpha.shape:
        raise ValueError(f"kernel row has length {k_row.size}, model has {model.alpha.size} training rows")
    if isinstance(model, SvcModel):
        return float(_weighted(k_row, model.alpha * model.y) + model.b)
    return float(_weighted(k_row, model.alpha) - model.rho)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -z))


def predict_scores(model: Model, data) -> np.ndarray:
    """Vectorized scores, higher meaning more likely fraud.

    ``data`` is the cross kernel matrix ``(N_d, N_s)`` for SVM models and the
    raw feature matrix for logistic regression.
    """
    data = np.asarray(data, dtype=float)
    if isinstance(model, LogRegModel):
        if data.size == 0:
            return np.zeros(0)
        data = np.atleast_2d(data)
        if data.shape[1] != model.w.size:
            raise ValueError(f"expected {model.w.size} features, got {data.shape[1]}")
        return _sigmoid(data @ model.w + model.b)
    if data.size == 0:
        return np.zeros(0)
    data = np.atleast_2d(data)
    if data.shape[1] != model.alpha.size:
        raise ValueError(f"cross kernel has {data.shape[1]} columns, model has {model.alpha.size} training rows")
    if isinstance(model, SvcModel):
        return _weighted(data, model.alpha * model.y) + model.b
    return -(_weighted(data, model.alpha) - model.rho)


def _logreg_parts(w: np.ndarray, b: float, X: np.ndarray, ys: np.ndarray, C: float):
    z = X @ w + b
    m = ys * z
    obj = 0.5 * w @ w + C * np.sum(np.logaddexp(0.0, -m))
    r = -C * ys * _sigmoid(-m)
    grad = np.concatenate([w + X.T @ r, [np.sum(r)]])
    s = _sigmoid(z)
    d = C * s * (1.0 - s)
    Xa = np.hstack([X, np.ones((X.shape[0], 1))])
    H = Xa.T @ (Xa * d[:, None])
    H[:-1, :-1] += np.eye(X.shape[1])
    return obj, grad, H


def logreg_objective(w, b, X, y, C) -> float:
    X = np.asarray(X, dtype=float)
    ys = 2.0 * np.asarray(y, dtype=float) - 1.0
    return float(_logreg_parts(np.asarray(w, float), float(b), X, ys, C)[0])


def train_logreg(X, y, C: float = 1.0, tol: float = 1e-10, max_iter: int = 200) -> LogRegModel:
    """L2-regularized logistic regression by damped Newton iterations.

    Minimizes ``1/2 |w|^2 + C sum log(1 + exp(-t_i (w.x_i + b)))`` with
    ``t = 2y - 1``; the bias is not regularized.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError(f"feature matrix {X.shape} does not match {y.shape[0]} labels")
    if not np.all(np.isfinite(X)):
        raise ValueError("features must be finite")
    if not set(np.unique(y)) <= {0, 1} or len(np.unique(y)) < 2:
        raise ValueError("logistic regression needs 0/1 labels with both classes present")
    if not C > 0:
        raise ValueError(f"C must be positive, got {C}")
    ys = 2.0 * y.astype(float) - 1.0
    f = X.shape[1]
    theta = np.zeros(f + 1)
    obj, grad, H = _logreg_parts(theta[:f], theta[f], X, ys, C)
    for _ in range(max_iter):
        if np.max(np.abs(grad)) <= tol:
            break
        H[np.diag_indices_from(H)] += 1e-12
        step = np.linalg.solve(H, grad)
        t = 1.0
        while True:
            cand = theta - t * step
            new_obj, new_grad, new_H = _logreg_parts(cand[:f], cand[f], X, ys, C)
            if new_obj <= obj - 1e-4 * t * grad @ step or t < 1e-10:
                break
            t *= 0.5
        theta, obj, grad, H = cand, new_obj, new_grad, new_H
    gnorm = float(np.max(np.abs(grad)))
    if gnorm > 1e-6 * max(1.0, C * X.shape[0]):
        raise ConvergenceError(f"logistic regression stalled with gradient norm {gnorm:.3g}")
    return LogRegModel(theta[:f].copy(), float(theta[f]), float(C), gnorm)


def save_model(model: Model, path) -> None:
    if isinstance(model, SvcModel):
        d = {"type": "svc", "alpha": model.alpha.tolist(), "y": model.y.tolist(), "b": model.b,
             "C": model.C, "kkt_gap": model.kkt_gap}
    elif isinstance(model, OcSvmModel):
        d = {"type": "ocsvm", "alpha": model.alpha.tolist(), "rho": model.rho, "nu": model.nu,
             "kkt_gap": model.kkt_gap, "tol": model.tol}
    else:
        d = {"type": "logreg", "w": model.w.tolist(), "b": model.b, "C": model.C,
             "grad_norm": model.grad_norm}
    if not isinstance(model, LogRegModel):
        d["train_ids"] = model.train_ids
        d["kernel"] = model.kernel
    with open(path, "w") as fh:
        json.dump(d, fh, indent=2)


def load_model(path) -> Model:
    with open(path) as fh:
        d = json.load(fh)
    kind = d.get("type")
    if kind == "svc":
        alpha = np.array(d["alpha"])
        return SvcModel(alpha, np.array(d["y"]), d["b"], d["C"], np.flatnonzero(alpha > 0),
                        d["kkt_gap"], d["train_ids"], d["kernel"])
    if kind == "ocsvm":
        alpha = np.array(d["alpha"])
        return OcSvmModel(alpha, d["rho"], d["nu"], np.flatnonzero(alpha > 0),
                          d["kkt_gap"], d["train_ids"], d["kernel"], d.get("tol", DEFAULT_TOL))
    if kind == "logreg":
        return LogRegModel(np.array(d["w"]), d["b"], d["C"], d["grad_norm"])
    raise ValueError(f"{path}: unknown model type {kind!r}")
