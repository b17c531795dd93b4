"""Finite-difference gradient checking utilities (test oracle)."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, backward


def finite_diff_check(fn, point, h=1e-5):
    """Max relative error between analytic and central-difference gradients.

    ``fn`` maps a Tensor to a scalar Tensor. The relative error per coordinate
    is ``|analytic - central| / (|analytic| + |central| + 1e-12)``.
    """
    point = np.asarray(point, dtype=np.float64)
    x = Tensor(point, requires_grad=True)
    backward(fn(x))
    analytic = np.zeros_like(point) if x.grad is None else x.grad

    flat = point.ravel()
    numeric = np.zeros_like(flat)
    for i in range(flat.size):
        bumped = flat.copy()
        bumped[i] = flat[i] + h
        up = fn(Tensor(bumped.reshape(point.shape))).item()
        bumped[i] = flat[i] - h
        down = fn(Tensor(bumped.reshape(point.shape))).item()
        numeric[i] = (up - down) / (2.0 * h)
    numeric = numeric.reshape(point.shape)

    denom = np.abs(analytic) + np.abs(numeric) + 1e-12
    return float(np.max(np.abs(analytic - numeric) / denom))


def leaf_grad_errors(loss_fn, leaves, h=1e-5):
    """Finite-difference check of ``loss_fn()`` against every leaf tensor.

    ``loss_fn`` re-evaluates the computation from the leaves' current values;
    each leaf's values are perturbed in place for the central differences.
    Returns the max relative error per leaf.
    """
    loss = loss_fn()
    backward(loss)
    errors = []
    for leaf in leaves:
        analytic = np.zeros_like(leaf.values) if leaf.grad is None else leaf.grad.copy()
        flat = leaf.values.ravel()
        numeric = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn().item()
            flat[i] = orig - h
            down = loss_fn().item()
            flat[i] = orig
            numeric[i] = (up - down) / (2.0 * h)
        numeric = numeric.reshape(leaf.values.shape)
        denom = np.abs(analytic) + np.abs(numeric) + 1e-12
        errors.append(float(np.max(np.abs(analytic - numeric) / denom)))
        leaf.zero_grad()
    return errors
