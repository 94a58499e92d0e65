"""Finite-difference harness shared by the op and model gradient tests."""

from __future__ import annotations

import numpy as np

from sourcelm import tensor


def check_gradients(params: tensor.Params, build, epsilon: float = 1e-6) -> float:
    """Worst relative error across all parameters of a scalar graph.

    build(leaves) must construct the loss Var afresh from the given
    leaf map; it is called once for the analytic pass and twice per
    parameter element for the numeric one.
    """
    assert params.dtype == np.float64, "gradient checks need float64"
    loss = build(params.begin())
    loss.backward()
    grads = {name: g.copy() for name, g in params.grads().items()}

    def loss_fn():
        return float(build(params.begin()).value)

    errors = tensor.finite_difference_check(loss_fn, params.arrays, grads, epsilon)
    return max(errors.values())
