"""Forward-mode tangent arrays for residual Jacobians.

A `DualArray` carries a primal array of shape S plus a tangent block of
shape S + (P,), one slot per seeded parameter direction.  Propagating a
batch of seeds through the residual in one sweep yields P Jacobian columns
at once; the Gauss-Newton path seeds the final-layer weights this way.
"""

from __future__ import annotations

import numpy as np


def _tan(x):
    return x.tangent if isinstance(x, DualArray) else None


class DualArray:
    __slots__ = ("primal", "tangent")

    def __init__(self, primal, tangent):
        self.primal = np.asarray(primal, dtype=np.float64)
        self.tangent = np.asarray(tangent, dtype=np.float64)

    @property
    def width(self) -> int:
        return self.tangent.shape[-1]

    def __add__(self, other):
        if isinstance(other, DualArray):
            return DualArray(self.primal + other.primal, self.tangent + other.tangent)
        return DualArray(self.primal + other, self.tangent)

    __radd__ = __add__

    def __neg__(self):
        return DualArray(-self.primal, -self.tangent)

    def __sub__(self, other):
        if isinstance(other, DualArray):
            return DualArray(self.primal - other.primal, self.tangent - other.tangent)
        return DualArray(self.primal - other, self.tangent)

    def __rsub__(self, other):
        return DualArray(other - self.primal, -self.tangent)

    def __mul__(self, other):
        if isinstance(other, DualArray):
            return DualArray(
                self.primal * other.primal,
                self.tangent * other.primal[..., None] + other.tangent * self.primal[..., None],
            )
        other = np.asarray(other, dtype=np.float64)
        return DualArray(self.primal * other, self.tangent * other[..., None])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, DualArray):
            return self * other.reciprocal()
        return self * (1.0 / np.asarray(other, dtype=np.float64))

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def reciprocal(self):
        inv = 1.0 / self.primal
        return DualArray(inv, -self.tangent * (inv * inv)[..., None])

    def __pow__(self, p):
        p = float(p)
        return DualArray(self.primal**p, self.tangent * (p * self.primal ** (p - 1.0))[..., None])

    def tanh(self):
        t = np.tanh(self.primal)
        return DualArray(t, self.tangent * (1.0 - t * t)[..., None])

    def sin(self):
        return DualArray(np.sin(self.primal), self.tangent * np.cos(self.primal)[..., None])

    def cos(self):
        return DualArray(np.cos(self.primal), -self.tangent * np.sin(self.primal)[..., None])

    def exp(self):
        e = np.exp(self.primal)
        return DualArray(e, self.tangent * e[..., None])

    def take_col(self, k: int):
        return DualArray(self.primal[:, k], self.tangent[:, k, :])

    def take_row(self, k: int):
        return DualArray(self.primal[k], self.tangent[k])

    def __matmul__(self, other):
        # (N, F) dual @ (F, H) plain
        w = np.asarray(other, dtype=np.float64)
        return DualArray(self.primal @ w, np.einsum("nfp,fh->nhp", self.tangent, w))

    def __rmatmul__(self, other):
        # (N, F) plain @ (F, H) dual
        a = np.asarray(other, dtype=np.float64)
        return DualArray(a @ self.primal, np.einsum("nf,fhp->nhp", a, self.tangent))


def dual_matmul(a, b):
    if isinstance(a, DualArray) and isinstance(b, DualArray):
        return DualArray(
            a.primal @ b.primal,
            np.einsum("nfp,fh->nhp", a.tangent, b.primal)
            + np.einsum("nf,fhp->nhp", a.primal, b.tangent),
        )
    return a @ b


def seed_duals(blocks: dict[str, np.ndarray], subset: list[tuple[str, int]]):
    """Replace selected flat indices of named blocks with seeded duals.

    `subset` lists (block name, flat index within block) pairs; the returned
    dict maps each touched block to a DualArray whose tangent has one slot
    per subset entry, in order.
    """
    width = len(subset)
    out: dict[str, object] = dict(blocks)
    by_block: dict[str, list[tuple[int, int]]] = {}
    for slot, (name, idx) in enumerate(subset):
        by_block.setdefault(name, []).append((slot, idx))
    for name, entries in by_block.items():
        prim = np.asarray(blocks[name], dtype=np.float64)
        tang = np.zeros(prim.shape + (width,))
        flat = tang.reshape(prim.size, width)
        for slot, idx in entries:
            flat[idx, slot] = 1.0
        out[name] = DualArray(prim, tang)
    return out
