import numpy as np


def rse(predictions, targets) -> float:
    """Relative squared error sum |y_hat - y|^2 / sum |y|^2 (complex-aware)."""
    yh = np.asarray(predictions)
    y = np.asarray(targets)
    if yh.shape != y.shape:
        raise ValueError(f"shape mismatch {yh.shape} vs {y.shape}")
    denom = float(np.sum(np.abs(y) ** 2))
    if denom == 0.0:
        raise ValueError("relative error undefined for an all-zero target")
    return float(np.sum(np.abs(yh - y) ** 2)) / denom
