"""Dense statevector simulation for the gate set used by the feature maps.

Basis ordering is little-endian: qubit ``q`` addresses bit ``q`` of the
basis index, so qubit 0 is the least significant bit.

Gate conventions::

    H      = (1/sqrt 2) [[1, 1], [1, -1]]
    RZ(t)  = exp(-i t Z / 2)
    RY(t)  = exp(-i t Y / 2)
    ZZ(t)  = exp(-i t Z(x)Z)
    CZ     = diag(1, 1, 1, -1)
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

__all__ = [
    "MAX_QUBITS",
    "CapacityError",
    "DimensionError",
    "Gate",
    "Circuit",
    "Statevector",
    "zero_state",
    "apply_gate",
    "run_circuit",
    "inner_product",
    "pauli_expectation",
    "inverse_circuit",
    "local_paulis",
]

MAX_QUBITS = 24

GATE_KINDS = ("H", "RZ", "RY", "ZZ", "CZ")
_ARITY = {"H": 1, "RZ": 1, "RY": 1, "ZZ": 2, "CZ": 2}
_PARAMETRIC = {"RZ", "RY", "ZZ"}

_SQRT1_2 = 1.0 / math.sqrt(2.0)


class CapacityError(ValueError):
    """Requested register exceeds the configured qubit cap."""


class DimensionError(ValueError):
    """Operands disagree on the number of qubits."""


@dataclass(frozen=True)
class Gate:
    kind: str
    targets: tuple[int, ...]
    angle: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in _ARITY:
            raise ValueError(f"unknown gate kind {self.kind!r}; expected one of {GATE_KINDS}")
        targets = tuple(int(t) for t in self.targets)
        object.__setattr__(self, "targets", targets)
        if len(targets) != _ARITY[self.kind]:
            raise ValueError(f"{self.kind} acts on {_ARITY[self.kind]} qubit(s), got targets {targets}")
        if len(set(targets)) != len(targets):
            raise ValueError(f"gate targets must be distinct, got {targets}")
        if any(t < 0 for t in targets):
            raise IndexError(f"negative qubit index in {targets}")
        if self.kind in _PARAMETRIC:
            if self.angle is None or not math.isfinite(self.angle):
                raise ValueError(f"{self.kind} needs a finite angle, got {self.angle!r}")
            object.__setattr__(self, "angle", float(self.angle))
        elif self.angle is not None:
            raise ValueError(f"{self.kind} takes no angle")

    def inverse(self) -> Gate:
        if self.kind in _PARAMETRIC:
            return Gate(self.kind, self.targets, -self.angle)
        return self


@dataclass
class Circuit:
    n_qubits: int
    gates: list[Gate] = field(default_factory=list)

    def __post_init__(self) -> None:
        for g in self.gates:
            _check_targets(g, self.n_qubits)

    def append(self, gate: Gate) -> None:
        _check_targets(gate, self.n_qubits)
        self.gates.append(gate)

    def extend(self, gates: Iterable[Gate]) -> None:
        for g in gates:
            self.append(g)

    def __len__(self) -> int:
        return len(self.gates)

    def count(self, kind: str) -> int:
        return sum(1 for g in self.gates if g.kind == kind)


def inverse_circuit(circuit: Circuit) -> Circuit:
    """Return the adjoint circuit (reversed order, negated angles)."""
    return Circuit(circuit.n_qubits, [g.inverse() for g in reversed(circuit.gates)])


@dataclass
class Statevector:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        if amps.ndim != 1 or amps.shape[0] != 1 << self.n_qubits:
            raise DimensionError(
                f"expected {1 << self.n_qubits} amplitudes for {self.n_qubits} qubits, got shape {amps.shape}"
            )
        self.amplitudes = amps

    def copy(self) -> Statevector:
        return Statevector(self.n_qubits, self.amplitudes.copy())

    def norm_squared(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)


def _check_targets(gate: Gate, n_qubits: int) -> None:
    for t in gate.targets:
        if t >= n_qubits:
            raise IndexError(f"{gate.kind} target {t} out of range for {n_qubits} qubit(s)")


def zero_state(n: int, max_qubits: int = MAX_QUBITS) -> Statevector:
    """Return |0...0> on ``n`` qubits."""
    if n < 1:
        raise ValueError(f"need at least one qubit, got {n}")
    if n > max_qubits:
        raise CapacityError(f"{n} qubits exceeds the cap of {max_qubits} qubits")
    amps = np.zeros(1 << n, dtype=np.complex128)
    amps[0] = 1.0
    return Statevector(n, amps)


def _split_one(amps: np.ndarray, q: int) -> tuple[np.ndarray, np.ndarray]:
    # view as (high, bit q, low); both halves are views into amps
    v = amps.reshape(-1, 2, 1 << q)
    return v[:, 0, :], v[:, 1, :]


def _split_two(amps: np.ndarray, i: int, j: int) -> np.ndarray:
    lo, hi = (i, j) if i < j else (j, i)
    v = amps.reshape(-1, 2, 1 << (hi - lo - 1), 2, 1 << lo)
    return v


def _apply_1q_matrix(amps: np.ndarray, q: int, m: np.ndarray) -> None:
    a0, a1 = _split_one(amps, q)
    t0 = a0.copy()
    a0 *= m[0, 0]
    a0 += m[0, 1] * a1
    a1 *= m[1, 1]
    a1 += m[1, 0] * t0


def apply_gate(state: Statevector, gate: Gate) -> Statevector:
    """Apply ``gate`` to ``state`` in place and return it."""
    _check_targets(gate, state.n_qubits)
    amps = state.amplitudes
    kind = gate.kind
    if kind == "H":
        a0, a1 = _split_one(amps, gate.targets[0])
        t0 = a0.copy()
        a0 += a1
        a0 *= _SQRT1_2
        a1 -= t0
        a1 *= -_SQRT1_2
    elif kind == "RZ":
        a0, a1 = _split_one(amps, gate.targets[0])
        half = 0.5 * gate.angle
        a0 *= complex(math.cos(half), -math.sin(half))
        a1 *= complex(math.cos(half), math.sin(half))
    elif kind == "RY":
        half = 0.5 * gate.angle
        c, s = math.cos(half), math.sin(half)
        _apply_1q_matrix(amps, gate.targets[0], np.array([[c, -s], [s, c]]))
    elif kind == "ZZ":
        v = _split_two(amps, *gate.targets)
        same = complex(math.cos(gate.angle), -math.sin(gate.angle))
        diff = same.conjugate()
        v[:, 0, :, 0, :] *= same
        v[:, 1, :, 1, :] *= same
        v[:, 0, :, 1, :] *= diff
        v[:, 1, :, 0, :] *= diff
    elif kind == "CZ":
        v = _split_two(amps, *gate.targets)
        v[:, 1, :, 1, :] *= -1.0
    return state


def run_circuit(state: Statevector, circuit: Circuit) -> Statevector:
    """Apply every gate of ``circuit`` in order, in place."""
    if circuit.n_qubits != state.n_qubits:
        raise DimensionError(
            f"circuit acts on {circuit.n_qubits} qubits but state has {state.n_qubits}"
        )
    for g in circuit.gates:
        apply_gate(state, g)
    return state


def inner_product(a: Statevector, b: Statevector) -> complex:
    """<a|b>, conjugating the first argument."""
    if a.n_qubits != b.n_qubits:
        raise DimensionError(f"inner product of {a.n_qubits}- and {b.n_qubits}-qubit states")
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def pauli_expectation(state: Statevector, pauli: str, qubit: int) -> float:
    """Expectation of a single-qubit Pauli ``X``, ``Y`` or ``Z`` on ``qubit``."""
    if not 0 <= qubit < state.n_qubits:
        raise IndexError(f"qubit {qubit} out of range for {state.n_qubits} qubit(s)")
    a0, a1 = _split_one(state.amplitudes, qubit)
    if pauli == "Z":
        return float(np.vdot(a0, a0).real - np.vdot(a1, a1).real)
    cross = np.vdot(a0, a1)
    if pauli == "X":
        return float(2.0 * cross.real)
    if pauli == "Y":
        return float(2.0 * cross.imag)
    raise ValueError(f"unknown Pauli {pauli!r}; expected 'X', 'Y' or 'Z'")


def local_paulis(state: Statevector) -> np.ndarray:
    """All single-qubit expectations as an ``(n_qubits, 3)`` array ordered X, Y, Z."""
    out = np.empty((state.n_qubits, 3))
    for q in range(state.n_qubits):
        a0, a1 = _split_one(state.amplitudes, q)
        cross = np.vdot(a0, a1)
        out[q, 0] = 2.0 * cross.real
        out[q, 1] = 2.0 * cross.imag
        out[q, 2] = np.vdot(a0, a0).real - np.vdot(a1, a1).real
    return out
