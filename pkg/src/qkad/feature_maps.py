"""IQP feature map with data re-uploading and seeded interleave circuits.

One feature is loaded per qubit. A single IQP block is::

    [H on all qubits; RZ(2 eta x_i) on qubit i; ZZ(eta^2 x_i x_j) for i < j] x 2

and the embedding uploads that block ``depth`` times with fixed,
data-independent interleave circuits between consecutive uploads.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Any

import numpy as np

from .statevector import (
    MAX_QUBITS,
    CapacityError,
    Circuit,
    Gate,
    Statevector,
    run_circuit,
    zero_state,
)

__all__ = [
    "FeatureMapConfig",
    "build_iqp_layer",
    "build_interleave",
    "feature_map_circuit",
    "embed",
    "embed_batch",
]

_SQRT1_2 = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class FeatureMapConfig:
    """Parameters of the re-uploading IQP embedding.

    Attributes:
        n_qubits: Number of qubits, equal to the feature dimension.
        depth: How many times the IQP block is uploaded.
        eta: Prefactor applied to every feature before encoding.
        interleave_seed: Seed for the random RY angles of the interleaves.
        interleave_layers: RY + CZ-ring layers per interleave circuit.
    """

    n_qubits: int
    depth: int = 3
    eta: float = 0.1
    interleave_seed: int = 0
    interleave_layers: int = 2

    def __post_init__(self) -> None:
        if self.n_qubits < 1:
            raise ValueError(f"n_qubits must be >= 1, got {self.n_qubits}")
        if self.n_qubits > MAX_QUBITS:
            raise CapacityError(f"{self.n_qubits} qubits exceeds the cap of {MAX_QUBITS} qubits")
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        if not (self.eta > 0 and math.isfinite(self.eta)):
            raise ValueError(f"eta must be a positive finite number, got {self.eta}")
        if self.interleave_layers < 1:
            raise ValueError(f"interleave_layers must be >= 1, got {self.interleave_layers}")
        if self.interleave_seed < 0:
            raise ValueError("interleave_seed must be non-negative")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> FeatureMapConfig:
        return cls(**d)


def _check_features(x, n_qubits: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != n_qubits:
        raise ValueError(f"expected {n_qubits} features (one per qubit), got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("features must be finite")
    return x


def build_iqp_layer(x, config: FeatureMapConfig) -> Circuit:
    """Gate list of one IQP block for feature vector ``x``."""
    n = config.n_qubits
    xs = config.eta * _check_features(x, n)
    circ = Circuit(n)
    for _ in range(2):
        circ.extend(Gate("H", (q,)) for q in range(n))
        circ.extend(Gate("RZ", (q,), 2.0 * xs[q]) for q in range(n))
        circ.extend(
            Gate("ZZ", (i, j), xs[i] * xs[j]) for i in range(n) for j in range(i + 1, n)
        )
    return circ


def _ring(n: int) -> list[tuple[int, int]]:
    if n == 1:
        return []
    if n == 2:
        # (0, 1) and (1, 0) are the same CZ; applying it twice would cancel
        return [(0, 1)]
    return [(q, (q + 1) % n) for q in range(n)]


def _interleave_angles(config: FeatureMapConfig, slot: int) -> np.ndarray:
    n = config.n_qubits
    angles = np.empty((config.interleave_layers, n))
    for layer in range(config.interleave_layers):
        for q in range(n):
            rng = np.random.default_rng([config.interleave_seed, slot, layer, q])
            angles[layer, q] = rng.uniform(0.0, 2.0 * math.pi)
    return angles


def build_interleave(config: FeatureMapConfig, slot: int) -> Circuit:
    """Data-independent circuit placed between uploads ``slot`` and ``slot + 1``.

    Slots run from 1 to ``depth - 1``. Each layer is an RY rotation on every
    qubit followed by CZ gates on the ring ``(q, q + 1 mod n)``. The angles
    are drawn from a stream keyed by ``(interleave_seed, slot, layer, qubit)``
    so the circuit is a pure function of the config and the slot.
    """
    if not 1 <= slot <= config.depth - 1:
        raise ValueError(f"interleave slot must lie in [1, {config.depth - 1}], got {slot}")
    n = config.n_qubits
    angles = _interleave_angles(config, slot)
    circ = Circuit(n)
    for layer in range(config.interleave_layers):
        circ.extend(Gate("RY", (q,), angles[layer, q]) for q in range(n))
        circ.extend(Gate("CZ", pair) for pair in _ring(n))
    return circ


def feature_map_circuit(x, config: FeatureMapConfig) -> Circuit:
    """Full embedding circuit ``[IQP(x), W_1, IQP(x), ..., IQP(x)]``."""
    layer = build_iqp_layer(x, config)
    circ = Circuit(config.n_qubits)
    for upload in range(config.depth):
        if upload > 0:
            circ.extend(build_interleave(config, upload).gates)
        circ.extend(layer.gates)
    return circ


# Batched fast path. Amplitudes are (batch, 2^n); every helper works in place.


def _diagonal_phases(xs: np.ndarray) -> np.ndarray:
    """exp(-i phi) for the diagonal part of one IQP repetition, per sample.

    With s(k) = sum_q xs_q z_q(k) and z_q = +-1 the Z eigenvalue of bit q,
    the RZ and all-pairs ZZ phases sum to s + (s^2 - sum_q xs_q^2) / 2.
    """
    b, n = xs.shape
    s = np.zeros((b, 1))
    for q in range(n):
        col = xs[:, q : q + 1]
        s = np.concatenate([s + col, s - col], axis=1)
    phi = s + 0.5 * (s * s - np.sum(xs * xs, axis=1, keepdims=True))
    return np.exp(-1j * phi)


def _hadamard_all(amps: np.ndarray, n: int) -> None:
    b = amps.shape[0]
    for q in range(n):
        v = amps.reshape(b, -1, 2, 1 << q)
        a0, a1 = v[:, :, 0, :], v[:, :, 1, :]
        t0 = a0.copy()
        a0 += a1
        a0 *= _SQRT1_2
        a1 -= t0
        a1 *= -_SQRT1_2


def _ry(amps: np.ndarray, q: int, angle: float) -> None:
    c, s = math.cos(0.5 * angle), math.sin(0.5 * angle)
    v = amps.reshape(amps.shape[0], -1, 2, 1 << q)
    a0, a1 = v[:, :, 0, :], v[:, :, 1, :]
    t0 = a0.copy()
    a0 *= c
    a0 -= s * a1
    a1 *= c
    a1 += s * t0


def _cz_signs(n: int) -> np.ndarray | None:
    pairs = _ring(n)
    if not pairs:
        return None
    k = np.arange(1 << n)
    signs = np.ones(1 << n)
    for i, j in pairs:
        both = ((k >> i) & 1) & ((k >> j) & 1)
        signs[both == 1] *= -1.0
    return signs


def embed_batch(X, config: FeatureMapConfig) -> np.ndarray:
    """Embed every row of ``X``; returns amplitudes of shape ``(rows, 2^n)``.

    Equivalent to running :func:`feature_map_circuit` on ``|0...0>`` per row,
    but the diagonal part of each IQP repetition is applied as one phase
    vector and the batch dimension is vectorized.
    """
    n = config.n_qubits
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != n:
        raise ValueError(f"expected {n} features (one per qubit), got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise ValueError("features must be finite")
    b = X.shape[0]
    diag = _diagonal_phases(config.eta * X)
    amps = np.zeros((b, 1 << n), dtype=np.complex128)
    amps[:, 0] = 1.0
    cz = _cz_signs(n)
    for upload in range(config.depth):
        if upload > 0:
            angles = _interleave_angles(config, upload)
            for layer in range(config.interleave_layers):
                for q in range(n):
                    _ry(amps, q, angles[layer, q])
                if cz is not None:
                    amps *= cz
        for _ in range(2):
            _hadamard_all(amps, n)
            amps *= diag
    return amps


def embed(x, config: FeatureMapConfig, fast: bool = True) -> Statevector:
    """Embedded state ``U(x)|0...0>``.

    Args:
        x: Feature vector of length ``config.n_qubits``.
        config: Feature map parameters.
        fast: Use the batched diagonal-phase path; ``False`` runs the
            explicit gate list through the simulator.
    """
    n = config.n_qubits
    x = _check_features(x, n)
    if fast:
        return Statevector(n, embed_batch(x[None, :], config)[0])
    return run_circuit(zero_state(n), feature_map_circuit(x, config))
