"""Dispatch layer over coefficient backends.

Jet coefficients are plain ndarrays during evaluation, `Var` nodes during
training (reverse pass) and `DualArray`s during Jacobian seeding.  These
helpers let the jet rules, constrained expressions and residual operators
be written once against a single vocabulary.
"""

from __future__ import annotations

import numpy as np

from .dual import DualArray, dual_matmul
from .reverse import Var, stack_cols_var


def tanh(x):
    return x.tanh() if isinstance(x, (Var, DualArray)) else np.tanh(x)


def sin(x):
    return x.sin() if isinstance(x, (Var, DualArray)) else np.sin(x)


def cos(x):
    return x.cos() if isinstance(x, (Var, DualArray)) else np.cos(x)


def exp(x):
    return x.exp() if isinstance(x, (Var, DualArray)) else np.exp(x)


def power(x, p):
    return x**p if isinstance(x, (Var, DualArray)) else np.power(x, p)


def matmul(a, b):
    if isinstance(a, Var) or isinstance(b, Var):
        return a @ b
    if isinstance(a, DualArray) or isinstance(b, DualArray):
        return dual_matmul(a, b)
    return a @ b


def take_col(x, k: int):
    if isinstance(x, (Var, DualArray)):
        return x.take_col(k)
    return x[:, k]


def stack_cols(cols, n_rows: int):
    """Stack broadcastable 1-d columns into an (n_rows, F) matrix."""
    if any(isinstance(c, Var) for c in cols):
        return stack_cols_var(cols, n_rows)
    if any(isinstance(c, DualArray) for c in cols):
        width = next(c.width for c in cols if isinstance(c, DualArray))
        prim = np.empty((n_rows, len(cols)))
        tang = np.zeros((n_rows, len(cols), width))
        for j, c in enumerate(cols):
            if isinstance(c, DualArray):
                prim[:, j] = np.broadcast_to(c.primal, (n_rows,))
                tang[:, j, :] = np.broadcast_to(c.tangent, (n_rows, width))
            else:
                prim[:, j] = np.broadcast_to(np.asarray(c, dtype=np.float64), (n_rows,))
        return DualArray(prim, tang)
    out = np.empty((n_rows, len(cols)))
    for j, c in enumerate(cols):
        out[:, j] = np.broadcast_to(np.asarray(c, dtype=np.float64), (n_rows,))
    return out


def value_of(x) -> np.ndarray:
    """Primal value of a coefficient as a plain ndarray."""
    if isinstance(x, Var):
        return x.value
    if isinstance(x, DualArray):
        return x.primal
    return np.asarray(x, dtype=np.float64)


def n_rows(x) -> int:
    v = value_of(x)
    return 1 if v.ndim == 0 else v.shape[0]
