"""Quantum-kernel anomaly detection: IQP feature maps on a statevector simulator,
kernel SVMs, average-precision evaluation and hardware cost estimates."""

__version__ = "0.1.0"
