"""Minimal reverse accumulation over numpy arrays.

Training needs the gradient of the mean-squared-residual with respect to
every network parameter at once; forward seeding would cost one pass per
parameter, which is unusable for ~10^4 parameters.  This engine records
the handful of array operations in one residual evaluation and replays
them backwards.  It supports exactly the operations the jet pipeline and
the residual operators use; it is not a general autodiff framework.
"""

from __future__ import annotations

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Var:
    """Array node in the backward graph."""

    __slots__ = ("value", "_parents", "_bw", "grad")

    def __init__(self, value, parents=(), bw=None):
        self.value = np.asarray(value, dtype=np.float64)
        self._parents = parents
        self._bw = bw
        self.grad = None

    @property
    def shape(self):
        return self.value.shape

    # -- graph construction helpers ------------------------------------

    def _acc(self, g):
        # Accumulated grads are only ever rebound (never mutated in place),
        # so aliasing the incoming array is safe.
        if self.grad is None:
            self.grad = g if isinstance(g, np.ndarray) else np.asarray(g, dtype=np.float64)
        else:
            self.grad = self.grad + g

    def __add__(self, other):
        if isinstance(other, Var):
            out = Var(self.value + other.value, (self, other))
            out._bw = lambda g: (
                self._acc(_unbroadcast(g, self.value.shape)),
                other._acc(_unbroadcast(g, other.value.shape)),
            )
            return out
        other = np.asarray(other, dtype=np.float64)
        out = Var(self.value + other, (self,))
        out._bw = lambda g: self._acc(_unbroadcast(g, self.value.shape))
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Var(-self.value, (self,))
        out._bw = lambda g: self._acc(-g)
        return out

    def __sub__(self, other):
        return self + (-other if isinstance(other, Var) else -np.asarray(other, dtype=np.float64))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Var):
            out = Var(self.value * other.value, (self, other))
            out._bw = lambda g: (
                self._acc(_unbroadcast(g * other.value, self.value.shape)),
                other._acc(_unbroadcast(g * self.value, other.value.shape)),
            )
            return out
        other = np.asarray(other, dtype=np.float64)
        out = Var(self.value * other, (self,))
        out._bw = lambda g: self._acc(_unbroadcast(g * other, self.value.shape))
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Var):
            return self * other.reciprocal()
        return self * (1.0 / np.asarray(other, dtype=np.float64))

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def reciprocal(self):
        inv = 1.0 / self.value
        out = Var(inv, (self,))
        out._bw = lambda g: self._acc(-g * inv * inv)
        return out

    def __pow__(self, p):
        p = float(p)
        out = Var(self.value**p, (self,))
        dv = p * self.value ** (p - 1.0)
        out._bw = lambda g: self._acc(g * dv)
        return out

    def __matmul__(self, other):
        a = self.value
        if isinstance(other, Var):
            b = other.value
            out = Var(a @ b, (self, other))

            def bw(g):
                self._acc(np.outer(g, b) if b.ndim == 1 else g @ b.T)
                other._acc(a.T @ g)

            out._bw = bw
            return out
        b = np.asarray(other, dtype=np.float64)
        out = Var(a @ b, (self,))
        out._bw = lambda g: self._acc(np.outer(g, b) if b.ndim == 1 else g @ b.T)
        return out

    def __rmatmul__(self, other):
        a = np.asarray(other, dtype=np.float64)
        out = Var(a @ self.value, (self,))
        out._bw = lambda g: self._acc(a.T @ g)
        return out

    def tanh(self):
        t = np.tanh(self.value)
        out = Var(t, (self,))
        out._bw = lambda g: self._acc(g * (1.0 - t * t))
        return out

    def sin(self):
        out = Var(np.sin(self.value), (self,))
        out._bw = lambda g: self._acc(g * np.cos(self.value))
        return out

    def cos(self):
        out = Var(np.cos(self.value), (self,))
        out._bw = lambda g: self._acc(-g * np.sin(self.value))
        return out

    def exp(self):
        e = np.exp(self.value)
        out = Var(e, (self,))
        out._bw = lambda g: self._acc(g * e)
        return out

    def take_col(self, k: int):
        out = Var(self.value[:, k], (self,))

        def bw(g):
            full = np.zeros_like(self.value)
            full[:, k] = g
            self._acc(full)

        out._bw = bw
        return out

    def take_row(self, k: int):
        out = Var(self.value[k], (self,))

        def bw(g):
            full = np.zeros_like(self.value)
            full[k] = g
            self._acc(full)

        out._bw = bw
        return out

    def vsum(self):
        out = Var(self.value.sum(), (self,))
        out._bw = lambda g: self._acc(np.broadcast_to(g, self.value.shape))
        return out

    def backward(self):
        """Accumulate d(self)/d(leaf) into .grad of every reachable node."""
        topo: list[Var] = []
        seen: set[int] = set()
        stack: list[tuple[Var, bool]] = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        for node in topo:
            node.grad = None
        self.grad = np.ones_like(self.value)
        for node in reversed(topo):
            if node._bw is not None and node.grad is not None:
                node._bw(node.grad)


def stack_cols_var(cols, n_rows: int):
    """Stack 1-d columns (Var or array, broadcastable) into an (N, F) Var."""
    vals = np.empty((n_rows, len(cols)))
    var_idx = []
    for j, c in enumerate(cols):
        if isinstance(c, Var):
            vals[:, j] = np.broadcast_to(c.value, (n_rows,))
            var_idx.append((j, c))
        else:
            vals[:, j] = np.broadcast_to(np.asarray(c, dtype=np.float64), (n_rows,))
    parents = tuple(c for _, c in var_idx)
    out = Var(vals, parents)

    def bw(g):
        for j, c in var_idx:
            c._acc(_unbroadcast(g[:, j], c.value.shape))

    out._bw = bw
    return out
