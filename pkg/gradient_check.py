"""
Finite-Difference Gradient Oracle
Central differences against the reverse-mode engine, usually under float64_shadow()
"""

import logging
from typing import Callable, Dict

import numpy as np

from tensor_core import Tensor, backward, mul, tensor_sum

logger = logging.getLogger(__name__)


def numerical_gradient(fn: Callable[[], Tensor], tensor: Tensor, h: float = 1e-5) -> np.ndarray:
    """Central-difference estimate of d fn() / d tensor, perturbing in place"""
    estimate = np.zeros(tensor.data.shape, dtype=np.float64)
    flat = tensor.data.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        plus = fn().item()
        flat[i] = original - h
        minus = fn().item()
        flat[i] = original
        estimate.flat[i] = (plus - minus) / (2 * h)
    return estimate


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """Largest absolute deviation scaled by the largest gradient magnitude"""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    magnitude = max(float(np.max(np.abs(analytic), initial=0.0)),
                    float(np.max(np.abs(numeric), initial=0.0)),
                    floor)
    return float(np.max(np.abs(analytic - numeric), initial=0.0)) / magnitude


def check_gradients(fn: Callable[[], Tensor], inputs: Dict[str, Tensor], h: float = 1e-5) -> Dict[str, float]:
    """Compare backward() against finite differences for every named input"""
    for tensor in inputs.values():
        tensor.zero_grad()
    backward(fn())

    errors = {}
    for name, tensor in inputs.items():
        analytic = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        analytic = analytic.copy()
        numeric = numerical_gradient(fn, tensor, h)
        errors[name] = relative_error(analytic, numeric)
        logger.debug(f"gradient check {name}: relative error {errors[name]:.3e}")
    return errors


def probe_loss(out: Tensor, seed: int = 0) -> Tensor:
    """Scalar sum(out * R) with R fixed by seed, exercising the full Jacobian"""
    weights = Tensor(np.random.default_rng(seed).standard_normal(out.shape))
    return tensor_sum(mul(out, weights))
