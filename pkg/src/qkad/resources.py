"""Wall-clock estimates for kernel training and inference on quantum hardware.

A kernel evaluation costs ``n_shots`` circuit repetitions, so the runtime of
``evals`` evaluations on a device repeating at ``rate`` shots per second is
``evals * n_shots / rate``.
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from typing import Iterable

__all__ = [
    "FULL",
    "TRIANGLE",
    "LINEAR",
    "HardwareProfile",
    "WorkloadSpec",
    "PROFILES",
    "get_profile",
    "training_evals",
    "inference_evals",
    "wall_time",
    "format_duration",
    "sweep_csv",
]

FULL = "full"
TRIANGLE = "triangle"
LINEAR = "linear"
CONVENTIONS = (FULL, TRIANGLE, LINEAR)

MINUTE = 60.0
HOUR = 3600.0
DAY = 86400.0
WEEK = 7 * DAY
YEAR = 3.156e7


@dataclass(frozen=True)
class HardwareProfile:
    name: str
    rate: float
    notes: str = ""

    def __post_init__(self) -> None:
        if not self.rate > 0:
            raise ValueError(f"{self.name}: rate must be positive, got {self.rate}")


PROFILES: dict[str, HardwareProfile] = {
    p.name: p
    for p in (
        HardwareProfile("sc-optimistic", 1e6, "superconducting, ~1 us circuits, MHz repetition"),
        HardwareProfile("sc-pessimistic", 1e3, "superconducting, passive reset, kHz repetition"),
        HardwareProfile("trapped-ion", 1e4, "~100 us per shot including readout, 10 kHz"),
        HardwareProfile("photonic", 1e10, "photon lifetime ~100 ps"),
    )
}


def get_profile(name: str) -> HardwareProfile:
    try:
        return PROFILES[name]
    except KeyError:
        raise KeyError(
            f"unknown hardware profile {name!r}; available: {', '.join(sorted(PROFILES))}"
        ) from None


@dataclass(frozen=True)
class WorkloadSpec:
    n_samples: int
    n_queries: int = 0
    n_shots: int = 1000
    convention: str = TRIANGLE

    def __post_init__(self) -> None:
        if self.n_samples < 1 or self.n_queries < 0 or self.n_shots < 1:
            raise ValueError("n_samples and n_shots must be >= 1, n_queries >= 0")
        if self.convention not in CONVENTIONS:
            raise ValueError(f"unknown convention {self.convention!r}; expected one of {CONVENTIONS}")


def training_evals(spec: WorkloadSpec) -> int:
    n = spec.n_samples
    if spec.convention == FULL:
        return n * n
    if spec.convention == TRIANGLE:
        return n * (n - 1) // 2
    return n


def inference_evals(n_queries: int, n_samples: int) -> int:
    if n_queries < 0 or n_samples < 0:
        raise ValueError("counts must be non-negative")
    return n_queries * n_samples


def wall_time(evals: int, n_shots: int, profile: HardwareProfile) -> float:
    """Seconds needed for ``evals`` kernel evaluations of ``n_shots`` shots each."""
    return evals * n_shots / profile.rate


def format_duration(seconds: float) -> str:
    """Render in the largest unit that keeps the value >= 1."""
    if seconds < 1.0:
        if seconds >= 1e-3:
            return f"{seconds * 1e3:.3g} ms"
        if seconds >= 1e-6:
            return f"{seconds * 1e6:.3g} us"
        return f"{seconds:.3g} s"
    for unit, size in (("years", YEAR), ("weeks", WEEK), ("hours", HOUR), ("minutes", MINUTE)):
        if seconds >= size:
            return f"{seconds / size:.3g} {unit}"
    return f"{seconds:.3g} s"


def sweep_csv(path, n_samples: Iterable[int], n_shots: Iterable[int],
              profiles: Iterable[HardwareProfile], convention: str = TRIANGLE,
              n_queries: int = 1) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["profile", "rate", "n_samples", "n_shots", "convention",
                    "training_evals", "training_seconds", "inference_evals", "inference_seconds"])
        for prof, ns, shots in itertools.product(list(profiles), list(n_samples), list(n_shots)):
            spec = WorkloadSpec(ns, n_queries, shots, convention)
            te = training_evals(spec)
            ie = inference_evals(n_queries, ns)
            w.writerow([prof.name, prof.rate, ns, shots, convention,
                        te, wall_time(te, shots, prof), ie, wall_time(ie, shots, prof)])
