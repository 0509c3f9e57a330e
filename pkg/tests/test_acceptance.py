"""Acceptance criteria, each run at its stated tolerance.

Every test records PASS, FAIL or SKIP in ``RESULTS``; the conftest summary
hook prints one line per criterion after the run.

Criterion 7 needs the Kaggle credit-card file. Point ``QKAD_CREDITCARD_CSV``
at it (default ``data/creditcard.csv``); set ``QKAD_EXTENDED=1`` to run the
full N <= 20 sweep instead of the N <= 10 chain.
"""
import csv
import functools
import math
import os
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from conftest import random_state, write_kaggle_like
from oracles import all_label_placements, ap_fraction, circuit_unitary
from qkad.cli import RunConfig, cmd_benchmark
from qkad.feature_maps import FeatureMapConfig
from qkad.kernels import FIDELITY, RBF, KernelConfig, fidelity_kernel, gram, sample_kernel
from qkad.metrics import average_precision
from qkad.models import train_ocsvm, training_outliers
from qkad.resources import YEAR, get_profile, wall_time
from qkad.statevector import Circuit, Gate, Statevector, run_circuit

RESULTS: dict[int, tuple[str, str]] = {}

KAGGLE = Path(os.environ.get("QKAD_CREDITCARD_CSV", "data/creditcard.csv"))
EXTENDED = os.environ.get("QKAD_EXTENDED") == "1"


def criterion(number: int, title: str):
    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            try:
                fn(*args, **kwargs)
            except pytest.skip.Exception as exc:
                RESULTS[number] = ("SKIP", f"{title} ({exc})")
                raise
            except BaseException:
                RESULTS[number] = ("FAIL", title)
                raise
            RESULTS[number] = ("PASS", title)

        return run

    return wrap


@criterion(1, "resource estimator reproduces the eight published wall-time estimates within 15%")
def test_criterion_1_resource_figures():
    hour, week, minute = 3600.0, 7 * 86400.0, 60.0
    cases = [
        (10**5, 10**3, "sc-optimistic", 100.0),
        (10**5, 10**6, "sc-optimistic", 28 * hour),
        (10**5, 10**3, "trapped-ion", 3 * hour),
        (10**10, 10**3, "trapped-ion", 30 * YEAR),
        (10**10, 10**3, "sc-optimistic", 16 * week),
        (10**5, 10**3, "photonic", 10e-3),
        (10**10, 10**3, "photonic", 17 * minute),
        (500, 10**3, "sc-optimistic", 0.5),
    ]
    for evals, shots, name, quoted in cases:
        got = wall_time(evals, shots, get_profile(name))
        assert abs(got - quoted) / quoted <= 0.15, (evals, shots, name, got, quoted)


@criterion(2, "200 random circuits on n <= 3 match the dense unitary oracle within 1e-10")
def test_criterion_2_simulator_oracle():
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    for _ in range(200):
        n = int(rng.integers(1, 4))
        gates = []
        for _ in range(int(rng.integers(1, 25))):
            kinds = ("H", "RZ", "RY", "ZZ", "CZ") if n > 1 else ("H", "RZ", "RY")
            kind = kinds[int(rng.integers(len(kinds)))]
            if kind in ("ZZ", "CZ"):
                targets = tuple(int(t) for t in rng.choice(n, size=2, replace=False))
            else:
                targets = (int(rng.integers(n)),)
            angle = float(rng.uniform(-2 * math.pi, 2 * math.pi)) if kind in ("RZ", "RY", "ZZ") else None
            gates.append(Gate(kind, targets, angle))
        psi = random_state(rng, n)
        out = run_circuit(Statevector(n, psi.copy()), Circuit(n, gates)).amplitudes
        assert np.max(np.abs(out - circuit_unitary(gates, n) @ psi)) <= 1e-10
    assert time.perf_counter() - t0 < 10


@criterion(3, "fidelity Gram on 50 vectors (n=4, d=3, eta=0.1) is symmetric, unit-diagonal and PSD")
def test_criterion_3_kernel_properties():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(50, 4))
    cfg = KernelConfig(FIDELITY, feature_map=FeatureMapConfig(4, depth=3, eta=0.1))
    t0 = time.perf_counter()
    K = gram(X, cfg).values
    assert np.max(np.abs(K - K.T)) <= 1e-12
    assert np.max(np.abs(np.diag(K) - 1)) <= 1e-10
    # the unit diagonal also holds for the kernel itself, not only the stored matrix
    assert max(abs(fidelity_kernel(x, x, cfg) - 1) for x in X) <= 1e-10
    w = np.linalg.eigvalsh(K)
    assert w.min() >= -1e-8 * w.max()
    assert time.perf_counter() - t0 < 30


@criterion(4, "shot-noise standard deviation within 10% of sqrt(p(1-p)/shots)")
def test_criterion_4_shot_noise():
    t0 = time.perf_counter()
    for p in (0.1, 0.5, 0.9):
        for shots in (10**3, 10**4):
            est = np.array([sample_kernel(p, shots, np.random.default_rng(s)) for s in range(10**4)])
            target = math.sqrt(p * (1 - p) / shots)
            assert abs(est.std() - target) <= 0.1 * target, (p, shots, est.std(), target)
    assert time.perf_counter() - t0 < 10


@criterion(5, "OC-SVM nu-property and KKT residual on 20 Gaussian blobs")
def test_criterion_5_nu_property():
    nu, n = 0.1, 100
    t0 = time.perf_counter()
    for seed in range(20):
        X = np.random.default_rng(seed).normal(size=(n, 2))
        K = gram(X, KernelConfig(RBF, gamma=0.5)).values
        m = train_ocsvm(K, nu=nu)
        assert training_outliers(m, K).mean() <= nu + 1 / n
        assert m.support_idx.size / n >= nu - 1 / n
        # residual of the optimality conditions, measured from the returned solution
        f = K @ m.alpha - m.rho
        ub = 1 / (nu * n)
        at_lb, at_ub = m.alpha <= 0, m.alpha >= ub
        free = ~at_lb & ~at_ub
        resid = np.concatenate([np.maximum(0, -f[at_lb]), np.maximum(0, f[at_ub]), np.abs(f[free])])
        assert resid.max() <= 1e-3
    assert time.perf_counter() - t0 < 30


@criterion(6, "average precision exact on every label placement of size <= 8 and 5/6 on the 3-point case")
def test_criterion_6_metric_correctness():
    for n in range(1, 9):
        for labels in all_label_placements(n):
            scores = list(range(n, 0, -1))
            assert average_precision(scores, labels) == float(ap_fraction(scores, labels))
    assert ap_fraction([0.9, 0.8, 0.7], [1, 0, 1]) == Fraction(5, 6)
    assert average_precision([0.9, 0.8, 0.7], [1, 0, 1]) == 5 / 6


@criterion(7, "benchmark sweep: OC-SVM AP rises with N and the fidelity kernel beats RBF")
def test_criterion_7_feature_sweep(tmp_path_factory):
    if not KAGGLE.exists():
        pytest.skip(f"dataset not found at {KAGGLE}")
    sweep = [2, 5, 10, 15, 20] if EXTENDED else [2, 5, 10]
    out = Path(os.environ.get("QKAD_ACCEPTANCE_OUT", tmp_path_factory.mktemp("c7")))
    cfg = RunConfig(dataset=str(KAGGLE), n_components=sweep, models=["ocsvm-rbf", "ocsvm-fidelity"],
                    output_dir=str(out))
    with open(cmd_benchmark(cfg)) as fh:
        rows = list(csv.DictReader(fh))
    ap = {(int(r["n_features"]), r["model"]): float(r["ap"]) for r in rows}
    rbf = [ap[(n, "ocsvm-rbf")] for n in sweep]
    assert rbf[-1] > rbf[0], rbf
    top = sweep[-1]
    margin = ap[(top, "ocsvm-fidelity")] - ap[(top, "ocsvm-rbf")]
    assert margin > 0, margin
    if EXTENDED:
        plateau = [ap[(n, "ocsvm-rbf")] for n in sweep if n >= 15]
        assert all(0.45 <= a <= 0.65 for a in plateau), plateau
        assert abs(margin - 0.15) <= 0.10, margin


@criterion(8, "cmd_benchmark run twice gives byte-identical CSVs")
def test_criterion_8_determinism(tmp_path):
    data = write_kaggle_like(tmp_path / "cc.csv", n_nominal=120, n_fraud=20, seed=8)
    outs = []
    for run in ("a", "b"):
        cfg = RunConfig(dataset=str(data), n_nominal=100, n_fraud=20, n_components=[2, 4],
                        models=["ocsvm-rbf", "ocsvm-fidelity", "svc-projected", "logreg"],
                        shots=1000, output_dir=str(tmp_path / run), cache=False)
        outs.append(cmd_benchmark(cfg).read_bytes())
    assert outs[0] == outs[1]
