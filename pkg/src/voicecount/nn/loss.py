"""Mean-squared-error loss for the two-output regression head."""

from __future__ import annotations

import numpy as np

from ..errors import PipelineError


def mse_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean of squared differences over every element."""
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise PipelineError(
            f"MSE shape mismatch: pred {pred.shape} vs target {target.shape}"
        )
    diff = pred - target
    return float(np.mean(np.square(diff), dtype=np.float64))


def mse_with_grad(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Loss plus its gradient wrt pred: 2 * (pred - target) / n_elements."""
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise PipelineError(
            f"MSE shape mismatch: pred {pred.shape} vs target {target.shape}"
        )
    diff = pred - target
    loss = float(np.mean(np.square(diff), dtype=np.float64))
    grad = (2.0 / diff.size) * diff
    return loss, grad.astype(pred.dtype, copy=False)
