"""Command-line entry point: ``qkad {ingest,benchmark,tune,estimate,gram}``.

Exit codes: 0 success, 1 user error (bad config, missing file, bad input),
2 internal failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import data as dp
from .feature_maps import FeatureMapConfig
from .kernels import (
    FIDELITY,
    RBF,
    GramMatrix,
    KernelConfig,
    gram,
    gram_cross,
    load_gram_binary,
    save_gram_binary,
    save_gram_csv,
)
from .metrics import average_precision, best_f1
from .models import predict_scores, train_logreg, train_ocsvm, train_svc
from .resources import (
    CONVENTIONS,
    PROFILES,
    TRIANGLE,
    WorkloadSpec,
    format_duration,
    get_profile,
    inference_evals,
    training_evals,
    wall_time,
)
from .tuning import MODEL_KINDS, SearchSpace, default_gamma, default_space, random_search, save_trials_csv

log = logging.getLogger("qkad")

RESULTS_HEADER = ["n_features", "model", "kernel", "ap", "f1", "seconds"]
MAX_FEATURES = 28


class UserError(Exception):
    pass


@dataclass
class RunConfig:
    dataset: str = "creditcard.csv"
    n_nominal: int = 500
    n_fraud: int = 25
    subsample_seed: int = 0
    n_components: list[int] = field(default_factory=lambda: [2, 5, 10, 15, 20])
    models: list[str] = field(default_factory=lambda: ["ocsvm-rbf"])
    gamma: float | None = None
    C: float = 1.0
    nu: float = 0.1
    eta: float = 0.1
    depth: int = 3
    interleave_layers: int = 2
    interleave_seed: int = 0
    shots: int | None = None
    shot_seed: int = 0
    split_seed: int = 0
    test_fraction: float = 0.3
    evaluation: str = "held-out"
    pca_fit: str = "subsample"
    tune: bool = False
    space: dict[str, Any] | None = None
    n_trials: int = 20
    k_folds: int = 5
    tune_seed: int = 0
    output_dir: str = "results"
    cache: bool = True
    record_timing: bool = False

    def __post_init__(self) -> None:
        if isinstance(self.models, str):
            self.models = [self.models]
        bad = [m for m in self.models if m not in MODEL_KINDS]
        if bad:
            raise UserError(f"unknown model kind(s) {bad}; expected one of {sorted(MODEL_KINDS)}")
        for n in self.n_components:
            if not 1 <= n <= MAX_FEATURES:
                raise UserError(f"n_components entries must lie in [1, {MAX_FEATURES}], got {n}")
        if self.evaluation not in ("held-out", "train"):
            raise UserError(f"evaluation must be 'held-out' or 'train', got {self.evaluation!r}")
        if self.pca_fit not in ("subsample", "full"):
            raise UserError(f"pca_fit must be 'subsample' or 'full', got {self.pca_fit!r}")
        if not 0 < self.test_fraction < 1:
            raise UserError(f"test_fraction must lie in (0, 1), got {self.test_fraction}")

    @classmethod
    def load(cls, path) -> RunConfig:
        with open(path) as fh:
            raw = json.load(fh)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise UserError(f"{path}: unknown config key(s) {unknown}")
        return cls(**raw)

    def with_seed(self, seed: int) -> RunConfig:
        return dataclasses.replace(self, subsample_seed=seed, interleave_seed=seed, shot_seed=seed,
                                   split_seed=seed, tune_seed=seed)


def stratified_split(labels: np.ndarray, test_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded per-class split; returns sorted (train, test) row indices."""
    rng = np.random.default_rng(seed)
    train, test = [], []
    for cls in (0, 1):
        idx = rng.permutation(np.flatnonzero(labels == cls))
        n_test = int(round(test_fraction * idx.size))
        test.append(idx[:n_test])
        train.append(idx[n_test:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def preprocess(raw: dp.Dataset, sub: dp.Dataset, n_components: int, pca_fit: str) -> dp.Dataset:
    """Scale and project ``sub``; statistics come from ``sub`` or the full ``raw`` set."""
    fit_on = raw if pca_fit == "full" else sub
    sp = dp.fit_scaler(fit_on)
    pca = dp.fit_pca(dp.apply_scaler(fit_on, sp), n_components)
    return dp.apply_pca(dp.apply_scaler(sub, sp), pca)


class GramCache:
    """On-disk cache of Gram and cross matrices keyed by content hash."""

    def __init__(self, root: Path | None):
        self.root = root
        if root is not None:
            root.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def key(config: KernelConfig, *blocks: np.ndarray) -> str:
        h = hashlib.sha256(json.dumps(config.to_dict(), sort_keys=True).encode())
        for b in blocks:
            h.update(np.ascontiguousarray(b, dtype="<f8").tobytes())
            h.update(str(b.shape).encode())
        return h.hexdigest()[:24]

    def gram(self, X: np.ndarray, config: KernelConfig) -> np.ndarray:
        if self.root is None:
            return gram(X, config).values
        path = self.root / f"{self.key(config, X)}.qkgm"
        if path.exists():
            return load_gram_binary(path).values
        values = gram(X, config).values
        save_gram_binary(GramMatrix(values, config), path)
        return values

    def cross(self, T: np.ndarray, S: np.ndarray, config: KernelConfig) -> np.ndarray:
        if self.root is None:
            return gram_cross(T, S, config)
        path = self.root / f"{self.key(config, T, S)}.npy"
        if path.exists():
            return np.load(path)
        values = gram_cross(T, S, config)
        np.save(path, values)
        return values


def _kernel_config(cfg: RunConfig, kernel: str, n: int, X_fit: np.ndarray, params: dict) -> KernelConfig:
    if kernel == RBF:
        gamma = params.get("gamma", cfg.gamma)
        return KernelConfig(RBF, gamma=gamma if gamma is not None else default_gamma(X_fit))
    # eta is applied to the data by the pipeline, so the circuit itself uses 1
    fm = FeatureMapConfig(n, cfg.depth, 1.0, cfg.interleave_seed, cfg.interleave_layers)
    if kernel == FIDELITY:
        return KernelConfig(FIDELITY, feature_map=fm, shots=cfg.shots, shot_seed=cfg.shot_seed)
    return KernelConfig(kernel, gamma=params.get("gamma", cfg.gamma), feature_map=fm)


def evaluate_model(cfg: RunConfig, model_kind: str, X: np.ndarray, y: np.ndarray,
                   train: np.ndarray, test: np.ndarray, cache: GramCache) -> tuple[float, float]:
    """Train one model kind on ``train`` rows and return (AP, best F1) on the evaluation rows."""
    learner, kernel = MODEL_KINDS[model_kind]
    evaluate = test if cfg.evaluation == "held-out" else train
    params: dict[str, Any] = {}
    if cfg.tune:
        space = (SearchSpace.from_dict(cfg.space) if cfg.space
                 else default_space(model_kind, cfg.n_trials, cfg.tune_seed))
        fm = None if kernel in (None, RBF) else _kernel_config(cfg, kernel, X.shape[1], X, {}).feature_map
        res = random_search(X[train], y[train], model_kind, space, cfg.k_folds, feature_map=fm)
        params = dict(res.best.params)
    if learner == "logreg":
        model = train_logreg(X[train], y[train], C=params.get("C", cfg.C))
        scores = predict_scores(model, X[evaluate])
    else:
        fit_rows = train if learner == "svc" else train[y[train] == 0]
        kc = _kernel_config(cfg, kernel, X.shape[1], X[fit_rows], params)
        K = cache.gram(X[fit_rows], kc)
        Kx = cache.cross(X[evaluate], X[fit_rows], kc)
        if learner == "svc":
            model = train_svc(K, y[fit_rows], C=params.get("C", cfg.C))
        else:
            model = train_ocsvm(K, nu=params.get("nu", cfg.nu))
        scores = predict_scores(model, Kx)
    return average_precision(scores, y[evaluate]), best_f1(scores, y[evaluate])


def cmd_benchmark(cfg: RunConfig) -> Path:
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    raw = dp.load_csv(cfg.dataset)
    sub = dp.subsample(raw, cfg.n_nominal, cfg.n_fraud, cfg.subsample_seed)
    y = sub.labels
    train, test = stratified_split(y, cfg.test_fraction, cfg.split_seed)
    cache = GramCache(out_dir / "cache" if cfg.cache else None)
    results = out_dir / "results.csv"
    with results.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULTS_HEADER)
        for n in cfg.n_components:
            base = preprocess(raw, sub, n, cfg.pca_fit)
            quantum = dp.apply_eta(base, cfg.eta)
            for kind in cfg.models:
                _, kernel = MODEL_KINDS[kind]
                X = base.features if kernel in (None, RBF) else quantum.features
                t0 = time.perf_counter()
                ap, f1 = evaluate_model(cfg, kind, X, y, train, test, cache)
                secs = time.perf_counter() - t0
                w.writerow([n, kind, kernel or "linear", repr(ap), repr(f1),
                            f"{secs:.3f}" if cfg.record_timing else ""])
                fh.flush()
                log.info("N=%d %s AP=%.4f F1=%.4f (%.1fs)", n, kind, ap, f1, secs)
    with (out_dir / "config.json").open("w") as fh:
        json.dump(dataclasses.asdict(cfg), fh, indent=2, sort_keys=True)
    return results


def cmd_estimate(profile: str, n_samples: int, n_queries: int, shots: int,
                 convention: str = TRIANGLE, evals_override: int | None = None) -> str:
    prof = get_profile(profile)
    spec = WorkloadSpec(n_samples, n_queries, shots, convention)
    te = evals_override if evals_override is not None else training_evals(spec)
    ie = inference_evals(n_queries, n_samples)
    rows = [("training", te, wall_time(te, shots, prof)), ("inference", ie, wall_time(ie, shots, prof))]
    lines = [f"profile {prof.name}: {prof.rate:g} shots/s ({prof.notes})",
             f"{'stage':<10} {'evals':>16} {'shots':>10} {'seconds':>14}  human"]
    for stage, ev, secs in rows:
        lines.append(f"{stage:<10} {ev:>16,d} {shots:>10,d} {secs:>14.6g}  ~{format_duration(secs)}")
    return "\n".join(lines)


def cmd_tune(cfg: RunConfig, model_kind: str, n_components: int) -> dict[str, Any]:
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    raw = dp.load_csv(cfg.dataset)
    sub = dp.subsample(raw, cfg.n_nominal, cfg.n_fraud, cfg.subsample_seed)
    base = preprocess(raw, sub, n_components, cfg.pca_fit)
    _, kernel = MODEL_KINDS[model_kind]
    fm = None
    X = base.features
    if kernel not in (None, RBF):
        X = dp.apply_eta(base, cfg.eta).features
        fm = FeatureMapConfig(n_components, cfg.depth, 1.0, cfg.interleave_seed, cfg.interleave_layers)
    space = (SearchSpace.from_dict(cfg.space) if cfg.space
             else default_space(model_kind, cfg.n_trials, cfg.tune_seed))
    res = random_search(X, sub.labels, model_kind, space, cfg.k_folds, feature_map=fm)
    save_trials_csv(res, out_dir / "trials.csv")
    report = {"model": model_kind, "n_components": n_components, "best_trial": res.best_index,
              "params": res.best.params, "fold_scores": res.best.fold_scores,
              "mean_score": res.best.mean_score}
    with (out_dir / "best_params.json").open("w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    return report


class _Parser(argparse.ArgumentParser):
    """Usage mistakes are user errors, so they exit with 1 rather than argparse's 2."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qkad", description="Quantum-kernel anomaly detection toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def run_flags(sp):
        sp.add_argument("--config", help="JSON run config")
        sp.add_argument("--dataset")
        sp.add_argument("--output-dir")
        sp.add_argument("--seed", type=int, help="override every seed in the config")
        sp.add_argument("--n-nominal", type=int)
        sp.add_argument("--n-fraud", type=int)

    b = sub.add_parser("benchmark", help="feature sweep: preprocess, train, score")
    run_flags(b)
    b.add_argument("--n-components", type=int, nargs="+")
    b.add_argument("--models", nargs="+", choices=sorted(MODEL_KINDS))
    b.add_argument("--depth", type=int)
    b.add_argument("--eta", type=float)
    b.add_argument("--shots", type=int)
    b.add_argument("--tune", action="store_true", default=None)

    t = sub.add_parser("tune", help="random search with cross-validated AP")
    run_flags(t)
    t.add_argument("--model", required=True, choices=sorted(MODEL_KINDS))
    t.add_argument("--n-components", type=int, default=None)
    t.add_argument("--n-trials", type=int)
    t.add_argument("--k-folds", type=int)

    e = sub.add_parser("estimate", help="hardware wall-time estimates")
    e.add_argument("--profile", required=True)
    e.add_argument("--n-samples", type=int, required=True)
    e.add_argument("--n-queries", type=int, default=1)
    e.add_argument("--shots", type=int, default=1000)
    e.add_argument("--convention", choices=CONVENTIONS, default=TRIANGLE)
    e.add_argument("--evals", type=int, help="override the training evaluation count")

    i = sub.add_parser("ingest", help="subsample and preprocess the CSV")
    i.add_argument("--dataset", required=True)
    i.add_argument("--out", required=True)
    i.add_argument("--n-nominal", type=int, default=500)
    i.add_argument("--n-fraud", type=int, default=25)
    i.add_argument("--seed", type=int, default=0)
    i.add_argument("--n-components", type=int)
    i.add_argument("--eta", type=float)
    i.add_argument("--pca-fit", choices=("subsample", "full"), default="subsample")

    g = sub.add_parser("gram", help="Gram matrix of a processed dataset")
    g.add_argument("--data", required=True, help="processed dataset CSV")
    g.add_argument("--kernel", choices=("rbf", "fidelity", "projected"), required=True)
    g.add_argument("--gamma", type=float)
    g.add_argument("--depth", type=int, default=3)
    g.add_argument("--eta", type=float, default=1.0, help="feature prefactor inside the circuit")
    g.add_argument("--interleave-seed", type=int, default=0)
    g.add_argument("--shots", type=int)
    g.add_argument("--shot-seed", type=int, default=0)
    g.add_argument("--out", required=True, help=".csv or .qkgm")
    return p


def _run_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    overrides = {
        "dataset": args.dataset, "output_dir": args.output_dir,
        "n_nominal": args.n_nominal, "n_fraud": args.n_fraud,
    }
    for name in ("models", "depth", "eta", "shots", "tune", "n_trials", "k_folds"):
        overrides[name] = getattr(args, name, None)
    if args.command == "benchmark":
        # tune takes a single --n-components, handled by the caller
        overrides["n_components"] = args.n_components
    cfg = dataclasses.replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _dispatch(args) -> int:
    if args.command == "estimate":
        if args.profile not in PROFILES:
            raise UserError(f"unknown hardware profile {args.profile!r}; available: {', '.join(sorted(PROFILES))}")
        print(cmd_estimate(args.profile, args.n_samples, args.n_queries, args.shots,
                           args.convention, args.evals))
        return 0
    if args.command == "benchmark":
        path = cmd_benchmark(_run_config(args))
        print(path.read_text(), end="")
        return 0
    if args.command == "tune":
        cfg = _run_config(args)
        n = args.n_components or cfg.n_components[0]
        print(json.dumps(cmd_tune(cfg, args.model, n), indent=2, sort_keys=True))
        return 0
    if args.command == "ingest":
        raw = dp.load_csv(args.dataset)
        d = dp.subsample(raw, args.n_nominal, args.n_fraud, args.seed)
        if args.n_components:
            d = preprocess(raw, d, args.n_components, args.pca_fit)
        if args.eta is not None:
            d = dp.apply_eta(d, args.eta)
        dp.save_dataset(d, args.out)
        print(f"wrote {d.n_rows} rows x {d.n_features} features to {args.out}")
        return 0
    if args.command == "gram":
        d = dp.load_dataset(args.data)
        fm = None
        if args.kernel != "rbf":
            fm = FeatureMapConfig(d.n_features, args.depth, args.eta, args.interleave_seed)
        gamma = args.gamma if args.gamma is not None or args.kernel != "rbf" else default_gamma(d.features)
        kc = KernelConfig(args.kernel, gamma=gamma, feature_map=fm, shots=args.shots, shot_seed=args.shot_seed)
        g = gram(d.features, kc, d.row_ids)
        if str(args.out).endswith(".qkgm"):
            save_gram_binary(g, args.out)
        else:
            save_gram_csv(g, args.out)
        print(f"wrote {g.n}x{g.n} {args.kernel} Gram matrix to {args.out}")
        return 0
    raise UserError(f"unknown command {args.command!r}")


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return _dispatch(args)
    except (UserError, ValueError, KeyError, FileNotFoundError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
