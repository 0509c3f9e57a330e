"""Classical and quantum kernels, Gram matrix assembly and shot-noise modelling."""
from __future__ import annotations

import csv
import math
import os
import struct
import tempfile
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .feature_maps import FeatureMapConfig, embed, embed_batch
from .statevector import inner_product, local_paulis

__all__ = [
    "RBF",
    "FIDELITY",
    "PROJECTED",
    "KernelConfig",
    "GramMatrix",
    "rbf_kernel",
    "fidelity_kernel",
    "projected_kernel",
    "sample_kernel",
    "gram",
    "gram_cross",
    "pauli_features",
    "save_gram_csv",
    "load_gram_csv",
    "save_gram_binary",
    "load_gram_binary",
]

RBF = "rbf"
FIDELITY = "fidelity"
PROJECTED = "projected"
KINDS = (RBF, FIDELITY, PROJECTED)

GRAM_MAGIC = b"QKGM"

# Embeddings beyond this many bytes are spilled to a temporary memmap.
DEFAULT_MAX_BYTES = 1 << 30


@dataclass(frozen=True)
class KernelConfig:
    """Which kernel to evaluate and how.

    ``shots=None`` means exact evaluation. ``gamma=None`` for the projected
    kernel selects ``1 / (3 * n_qubits)``.
    """

    kind: str
    gamma: float | None = None
    feature_map: FeatureMapConfig | None = None
    shots: int | None = None
    shot_seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}; expected one of {KINDS}")
        quantum = self.kind != RBF
        if quantum and self.feature_map is None:
            raise ValueError(f"{self.kind} kernel needs a feature_map")
        if not quantum and self.feature_map is not None:
            raise ValueError("rbf kernel takes no feature_map")
        if self.kind == FIDELITY and self.gamma is not None:
            raise ValueError("fidelity kernel takes no gamma")
        if self.kind == RBF and self.gamma is None:
            raise ValueError("rbf kernel needs gamma")
        if self.gamma is not None and not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.shots is not None:
            if self.kind != FIDELITY:
                raise ValueError("shot sampling is only modelled for the fidelity kernel")
            if self.shots < 1:
                raise ValueError(f"shots must be >= 1, got {self.shots}")

    @property
    def effective_gamma(self) -> float | None:
        if self.kind == PROJECTED and self.gamma is None:
            return 1.0 / (3 * self.feature_map.n_qubits)
        return self.gamma

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "gamma": self.gamma,
            "feature_map": None if self.feature_map is None else self.feature_map.to_dict(),
            "shots": self.shots,
            "shot_seed": self.shot_seed,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> KernelConfig:
        d = dict(d)
        fm = d.get("feature_map")
        d["feature_map"] = None if fm is None else FeatureMapConfig.from_dict(fm)
        return cls(**d)


@dataclass
class GramMatrix:
    values: np.ndarray
    config: KernelConfig | None = None
    row_ids: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if not self.row_ids:
            self.row_ids = [str(i) for i in range(self.values.shape[0])]

    @property
    def n(self) -> int:
        return self.values.shape[0]


def _sq_dists(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    # explicit differences rather than |a|^2 + |b|^2 - 2ab, so entries agree
    # bit-for-bit with the pairwise formula
    return np.sum((A[..., :, None, :] - B[..., None, :, :]) ** 2, axis=-1)


def rbf_kernel(x, x_prime, gamma: float) -> float:
    """exp(-gamma * |x - x'|^2)."""
    x = np.asarray(x, dtype=float)
    x_prime = np.asarray(x_prime, dtype=float)
    if x.shape != x_prime.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {x_prime.shape}")
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    return float(np.exp(-gamma * np.sum((x - x_prime) ** 2)))


def fidelity_kernel(x, x_prime, config: KernelConfig, method: str = "overlap") -> float:
    """|<phi(x)|phi(x')>|^2 for the configured feature map.

    ``method="overlap"`` embeds both points and takes the inner product;
    ``method="return"`` runs ``U(x')^dagger U(x)`` on ``|0...0>`` and reads
    the probability of returning to the all-zero state.
    """
    if config.kind != FIDELITY:
        raise ValueError(f"expected a fidelity kernel config, got {config.kind!r}")
    fm = config.feature_map
    if method == "overlap":
        ov = inner_product(embed(x, fm), embed(x_prime, fm))
        return float(min(1.0, abs(ov) ** 2))
    if method == "return":
        from .feature_maps import feature_map_circuit
        from .statevector import inverse_circuit, run_circuit

        state = embed(x, fm, fast=False)
        run_circuit(state, inverse_circuit(feature_map_circuit(x_prime, fm)))
        return float(min(1.0, abs(state.amplitudes[0]) ** 2))
    raise ValueError(f"unknown method {method!r}")


def projected_kernel(x, x_prime, config: KernelConfig) -> float:
    """Gaussian kernel over single-qubit X, Y, Z expectations of the embeddings."""
    if config.kind != PROJECTED:
        raise ValueError(f"expected a projected kernel config, got {config.kind!r}")
    fm = config.feature_map
    pa = local_paulis(embed(x, fm))
    pb = local_paulis(embed(x_prime, fm))
    return float(np.exp(-config.effective_gamma * np.sum((pa - pb) ** 2)))


def sample_kernel(exact_value: float, shots: int, rng: np.random.Generator) -> float:
    """Finite-shot estimate of a return probability: Binomial(shots, p) / shots."""
    if shots < 1:
        raise ValueError(f"shots must be >= 1, got {shots}")
    p = min(1.0, max(0.0, float(exact_value)))
    return rng.binomial(shots, p) / shots


def _pair_rng(seed: int, tag: int, i: int, j: int) -> np.random.Generator:
    return np.random.default_rng([seed, tag, i, j])


def _as_rows(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D sample matrix, got shape {X.shape}")
    return X


def pauli_features(X, fm: FeatureMapConfig, chunk: int | None = None) -> np.ndarray:
    """Local Pauli expectations of every embedded row, shape ``(rows, 3 * n)``."""
    X = _as_rows(X)
    n = fm.n_qubits
    chunk = chunk or _chunk_rows(n)
    out = np.empty((X.shape[0], 3 * n))
    for start in range(0, X.shape[0], chunk):
        amps = embed_batch(X[start : start + chunk], fm)
        b = amps.shape[0]
        for q in range(n):
            v = amps.reshape(b, -1, 2, 1 << q)
            a0, a1 = v[:, :, 0, :], v[:, :, 1, :]
            cross = np.einsum("bij,bij->b", a0.conj(), a1)
            out[start : start + b, 3 * q] = 2.0 * cross.real
            out[start : start + b, 3 * q + 1] = 2.0 * cross.imag
            out[start : start + b, 3 * q + 2] = (
                np.einsum("bij,bij->b", a0.conj(), a0).real
                - np.einsum("bij,bij->b", a1.conj(), a1).real
            )
    return out


def _chunk_rows(n_qubits: int, max_bytes: int = 1 << 28) -> int:
    return max(1, max_bytes // (16 << n_qubits))


def _embeddings(X: np.ndarray, fm: FeatureMapConfig, max_bytes: int, tmpdir: str | None):
    """Embed all rows; spill to a memmap when they do not fit ``max_bytes``."""
    dim = 1 << fm.n_qubits
    nbytes = X.shape[0] * dim * 16
    chunk = _chunk_rows(fm.n_qubits)
    if nbytes <= max_bytes:
        store = np.empty((X.shape[0], dim), dtype=np.complex128)
        handle = None
    else:
        handle = tempfile.NamedTemporaryFile(dir=tmpdir, suffix=".amps", delete=False)
        handle.close()
        store = np.memmap(handle.name, dtype=np.complex128, mode="w+", shape=(X.shape[0], dim))
    for start in range(0, X.shape[0], chunk):
        store[start : start + chunk] = embed_batch(X[start : start + chunk], fm)
    return store, handle


def _release(store, handle) -> None:
    if handle is not None:
        del store
        os.unlink(handle.name)


def _overlap_sq(A: np.ndarray, B: np.ndarray, block: int) -> np.ndarray:
    out = np.empty((A.shape[0], B.shape[0]))
    for i in range(0, A.shape[0], block):
        a = np.asarray(A[i : i + block])
        for j in range(0, B.shape[0], block):
            b = np.asarray(B[j : j + block])
            out[i : i + block, j : j + block] = np.abs(a.conj() @ b.T) ** 2
    return np.minimum(out, 1.0)


def _exact_block(A: np.ndarray, B: np.ndarray | None, config: KernelConfig,
                 max_bytes: int, tmpdir: str | None) -> np.ndarray:
    """Exact kernel values between rows of A and B (B=None means A vs A)."""
    same = B is None
    if config.kind == RBF:
        Bm = A if same else B
        out = np.empty((A.shape[0], Bm.shape[0]))
        step = max(1, (1 << 24) // max(1, Bm.shape[0] * A.shape[1]))
        for i in range(0, A.shape[0], step):
            out[i : i + step] = np.exp(-config.gamma * _sq_dists(A[i : i + step], Bm))
        return out
    fm = config.feature_map
    if config.kind == PROJECTED:
        pa = pauli_features(A, fm)
        pb = pa if same else pauli_features(B, fm)
        return np.exp(-config.effective_gamma * _sq_dists(pa, pb))
    block = _chunk_rows(fm.n_qubits)
    ea, ha = _embeddings(A, fm, max_bytes, tmpdir)
    try:
        if same:
            return _overlap_sq(ea, ea, block)
        eb, hb = _embeddings(B, fm, max_bytes, tmpdir)
        try:
            return _overlap_sq(ea, eb, block)
        finally:
            _release(eb, hb)
    finally:
        _release(ea, ha)


def gram(samples, config: KernelConfig, row_ids: Sequence[str] | None = None,
         max_bytes: int = DEFAULT_MAX_BYTES, tmpdir: str | None = None) -> GramMatrix:
    """Symmetric Gram matrix over ``samples``.

    Only the upper triangle is used; it is mirrored to the lower triangle and
    the diagonal is set to the exact self-kernel (1 for every supported
    kind). With ``config.shots`` set, every off-diagonal pair ``(i, j)`` is
    sampled once from a stream keyed by ``(shot_seed, i, j)``.
    """
    X = _as_rows(samples)
    if X.shape[0] < 1:
        raise ValueError("gram needs at least one sample")
    K = _exact_block(X, None, config, max_bytes, tmpdir)
    iu = np.triu_indices(X.shape[0], k=1)
    upper = K[iu]
    if config.shots is not None:
        upper = np.array([
            sample_kernel(p, config.shots, _pair_rng(config.shot_seed, 0, i, j))
            for p, i, j in zip(upper, *iu)
        ])
    K = np.zeros_like(K)
    K[iu] = upper
    K = K + K.T
    np.fill_diagonal(K, 1.0)
    ids = list(row_ids) if row_ids is not None else None
    if ids is not None and len(ids) != X.shape[0]:
        raise ValueError(f"{len(ids)} row ids for {X.shape[0]} samples")
    return GramMatrix(K, config, ids or [])


def gram_cross(test_rows, train_rows, config: KernelConfig,
               max_bytes: int = DEFAULT_MAX_BYTES, tmpdir: str | None = None) -> np.ndarray:
    """Kernel values between every test row and every train row, ``(N_d, N_s)``.

    Shot sampling keys each entry by ``(shot_seed, i, j)`` in a stream
    separate from the one used by :func:`gram`.
    """
    T = _as_rows(test_rows)
    S = _as_rows(train_rows)
    if T.shape[0] == 0:
        return np.zeros((0, S.shape[0]))
    if T.shape[1] != S.shape[1]:
        raise ValueError(f"feature mismatch: {T.shape[1]} vs {S.shape[1]}")
    K = _exact_block(T, S, config, max_bytes, tmpdir)
    if config.shots is not None:
        for i in range(K.shape[0]):
            for j in range(K.shape[1]):
                K[i, j] = sample_kernel(K[i, j], config.shots, _pair_rng(config.shot_seed, 1, i, j))
    return K


def save_gram_csv(g: GramMatrix, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row_id", *g.row_ids])
        for rid, row in zip(g.row_ids, g.values):
            w.writerow([rid, *(repr(float(v)) for v in row)])


def load_gram_csv(path, config: KernelConfig | None = None) -> GramMatrix:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "row_id":
        raise ValueError(f"{path}: missing row_id header")
    ids = rows[0][1:]
    values = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    if values.shape != (len(ids), len(ids)):
        raise ValueError(f"{path}: expected a {len(ids)}x{len(ids)} matrix, got {values.shape}")
    return GramMatrix(values, config, ids)


def save_gram_binary(g: GramMatrix, path) -> None:
    """Write ``QKGM`` + u32 size + little-endian f64 upper triangle (row-major, with diagonal)."""
    n = g.n
    iu = np.triu_indices(n)
    with open(path, "wb") as fh:
        fh.write(GRAM_MAGIC)
        fh.write(struct.pack("<I", n))
        fh.write(g.values[iu].astype("<f8").tobytes())


def load_gram_binary(path, config: KernelConfig | None = None,
                     row_ids: Sequence[str] | None = None) -> GramMatrix:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != GRAM_MAGIC:
        raise ValueError(f"{path}: not a QKGM file")
    (n,) = struct.unpack("<I", data[4:8])
    tri = np.frombuffer(data[8:], dtype="<f8")
    if tri.size != n * (n + 1) // 2:
        raise ValueError(f"{path}: truncated triangle ({tri.size} values for n={n})")
    K = np.zeros((n, n))
    K[np.triu_indices(n)] = tri
    K = K + np.triu(K, 1).T
    return GramMatrix(K, config, list(row_ids) if row_ids is not None else [])
