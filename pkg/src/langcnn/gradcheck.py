"""Central finite-difference verification of backward-computed gradients.

The numeric side never touches the recorded backward rules: it re-runs the
forward computation with recording disabled, one perturbed coordinate at a
time, so agreement is evidence rather than tautology.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .autograd import no_grad

DEFAULT_EPS = 1e-5
# Denominator floor for whole-model checks. Central differences at eps=1e-5
# on a loss of magnitude ~10 carry ~1e-9..1e-8 of absolute noise, so entries
# far below this floor are compared absolutely (|a-n| < tol * floor).
MODEL_REL_FLOOR = 1e-3


def numeric_gradient(
    f: Callable[[], float], x: np.ndarray, eps: float = DEFAULT_EPS
) -> np.ndarray:
    """d f / d x by central differences, perturbing ``x`` in place.

    ``f`` must re-evaluate the quantity of interest from current array
    contents. ``x`` is restored exactly before returning.
    """
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = f()
            flat[i] = orig - eps
            f_minus = f()
            flat[i] = orig
            gflat[i] = (f_plus - f_minus) / (2.0 * eps)
    return grad


def max_rel_error(
    analytic: np.ndarray, numeric: np.ndarray, floor: float = MODEL_REL_FLOOR
) -> float:
    """max over entries of |a - n| / max(|a|, |n|, floor)."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.shape != n.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {n.shape}")
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - n) / denom))


def check_model(model, record, features, eps: float = DEFAULT_EPS) -> dict[str, float]:
    """Compare backward gradients of the sequence loss against central
    differences for every parameter block; returns name -> max rel error.

    Dropout must be off (the model is forced into eval mode) so repeated
    forward passes are deterministic.
    """
    from . import autograd as ag
    from .model import sequence_loss

    was_training = model.training
    model.training = False
    try:
        model.zero_grads()
        loss = sequence_loss(model, record, features)
        ag.backward(loss)
        analytic = {name: p.grad.copy() for name, p in model.params.items()}

        def reevaluate() -> float:
            return sequence_loss(model, record, features).item()

        errors = {}
        for name, p in model.params.items():
            numeric = numeric_gradient(reevaluate, p.data, eps=eps)
            errors[name] = max_rel_error(analytic[name], numeric)
        return errors
    finally:
        model.training = was_training
        model.zero_grads()
