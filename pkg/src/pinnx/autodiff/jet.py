"""Truncated Taylor jets for exact input derivatives.

A `Jet` carries the value of a quantity together with its partial
derivatives with respect to a set of tracked input dimensions: first
partials in `g`, symmetric second partials in `h` (one stored entry per
unordered pair) and, when needed, symmetric third partials in `t3`.
Coefficients are stored sparsely: an absent key is structurally zero,
which is what makes constrained-expression evaluations at projected
boundary points cheap (derivatives along a fixed coordinate vanish and
are never materialized).

Third order exists because a derivative boundary condition inside a
constrained expression raises the derivative order demanded of the free
function by one: the second derivatives of a wrapper containing
d/dy N(x, 1) involve third derivatives of N.

Optional masks (`m2`, `m3`) restrict which second/third-order keys are
computed; residual operators declare the partials they actually consume
and everything else is skipped.  Masked-out components are *unknown*,
not zero, so readers must stay within the mask (enforced in `d2`).

Coefficients may be ndarrays, reverse-mode `Var`s or forward `DualArray`s;
all arithmetic goes through the ops dispatch layer.
"""

from __future__ import annotations

from itertools import combinations_with_replacement

from . import ops

_COEFF_TYPES = (int, float)


def _isect(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return a & b


def _allowed(key, mask):
    return mask is None or key in mask


class Jet:
    __slots__ = ("order", "v", "g", "h", "t3", "m2", "m3")

    def __init__(self, order, v, g=None, h=None, t3=None, m2=None, m3=None):
        self.order = order
        self.v = v
        self.g = g or {}
        self.h = h or {}
        self.t3 = t3 or {}
        self.m2 = m2
        self.m3 = m3

    # -- constructors ----------------------------------------------------

    @classmethod
    def const(cls, value, order, m2=None, m3=None):
        return cls(order, value, m2=m2, m3=m3)

    @classmethod
    def variable(cls, dim, values, order, m2=None, m3=None):
        g = {dim: 1.0} if order >= 1 else None
        return cls(order, values, g=g, m2=m2, m3=m3)

    # -- accessors -------------------------------------------------------

    @property
    def value(self):
        return self.v

    def d(self, i):
        return self.g.get(i, 0.0)

    def d2(self, i, j):
        key = (i, j) if i <= j else (j, i)
        if key in self.h:
            return self.h[key]
        if self.m2 is not None and key not in self.m2:
            raise KeyError(f"second partial {key} was masked out of this evaluation")
        return 0.0

    def d3(self, i, j, k):
        key = tuple(sorted((i, j, k)))
        if key in self.t3:
            return self.t3[key]
        if self.m3 is not None and key not in self.m3:
            raise KeyError(f"third partial {key} was masked out of this evaluation")
        return 0.0

    # -- arithmetic -------------------------------------------------------

    def _lift(self, other):
        if isinstance(other, Jet):
            return other
        return Jet.const(other, self.order, self.m2, self.m3)

    def __add__(self, other):
        o = self._lift(other)
        order = min(self.order, o.order)
        g = dict(self.g)
        for k, c in o.g.items():
            g[k] = g[k] + c if k in g else c
        h = dict(self.h)
        for k, c in o.h.items():
            h[k] = h[k] + c if k in h else c
        t3 = dict(self.t3)
        for k, c in o.t3.items():
            t3[k] = t3[k] + c if k in t3 else c
        return Jet(order, self.v + o.v, g, h, t3, _isect(self.m2, o.m2), _isect(self.m3, o.m3))

    __radd__ = __add__

    def __neg__(self):
        return Jet(
            self.order,
            -self.v,
            {k: -c for k, c in self.g.items()},
            {k: -c for k, c in self.h.items()},
            {k: -c for k, c in self.t3.items()},
            self.m2,
            self.m3,
        )

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return (-self) + other

    def _scale(self, c):
        return Jet(
            self.order,
            self.v * c,
            {k: x * c for k, x in self.g.items()},
            {k: x * c for k, x in self.h.items()},
            {k: x * c for k, x in self.t3.items()},
            self.m2,
            self.m3,
        )

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return self._scale(other)
        a, b = self, other
        order = min(a.order, b.order)
        m2 = _isect(a.m2, b.m2)
        m3 = _isect(a.m3, b.m3)
        v = a.v * b.v
        g = {}
        if order >= 1:
            for i in set(a.g) | set(b.g):
                terms = []
                if i in a.g:
                    terms.append(a.g[i] * b.v)
                if i in b.g:
                    terms.append(a.v * b.g[i])
                g[i] = terms[0] + terms[1] if len(terms) == 2 else terms[0]
        h = {}
        if order >= 2:
            keys = set(a.h) | set(b.h)
            for i in a.g:
                for j in b.g:
                    keys.add((i, j) if i <= j else (j, i))
            for key in keys:
                if not _allowed(key, m2):
                    continue
                i, j = key
                acc = None
                if key in a.h:
                    acc = a.h[key] * b.v
                if key in b.h:
                    t = a.v * b.h[key]
                    acc = t if acc is None else acc + t
                if i in a.g and j in b.g:
                    t = a.g[i] * b.g[j]
                    acc = t if acc is None else acc + t
                if i != j and j in a.g and i in b.g:
                    t = a.g[j] * b.g[i]
                    acc = t if acc is None else acc + t
                elif i == j and i in a.g and i in b.g:
                    acc = acc + a.g[i] * b.g[i]
                if acc is not None:
                    h[key] = acc
        t3 = {}
        if order >= 3:
            keys = set(a.t3) | set(b.t3)
            for hk in a.h:
                for i in b.g:
                    keys.add(tuple(sorted(hk + (i,))))
            for hk in b.h:
                for i in a.g:
                    keys.add(tuple(sorted(hk + (i,))))
            for key in keys:
                if not _allowed(key, m3):
                    continue
                acc = None
                for split in _TRIPLE_SPLITS:
                    da = tuple(sorted(key[p] for p in split))
                    db = tuple(sorted(key[p] for p in range(3) if p not in split))
                    ca = _deriv(a, da)
                    cb = _deriv(b, db)
                    if ca is None or cb is None:
                        continue
                    t = ca * cb
                    acc = t if acc is None else acc + t
                if acc is not None:
                    t3[key] = acc
        return Jet(order, v, g, h, t3, m2, m3)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * _reciprocal(other)
        return self._scale(1.0 / other)

    def __rtruediv__(self, other):
        return _reciprocal(self) * other

    def __pow__(self, p):
        return jpow(self, p)


_TRIPLE_SPLITS = [(), (0,), (1,), (2,), (0, 1), (0, 2), (1, 2), (0, 1, 2)]


def _deriv(jet, key):
    n = len(key)
    if n == 0:
        return jet.v
    if n == 1:
        return jet.g.get(key[0])
    if n == 2:
        return jet.h.get(key)
    return jet.t3.get(key)


def apply_unary(u: Jet, f0, f1, f2=None, f3=None) -> Jet:
    """Chain rule for w = f(u) given derivative values of f at u.v."""
    g = {}
    h = {}
    t3 = {}
    if u.order >= 1:
        for i, c in u.g.items():
            g[i] = f1 * c
    if u.order >= 2:
        keys = set(u.h)
        for i in u.g:
            for j in u.g:
                keys.add((i, j) if i <= j else (j, i))
        for key in keys:
            if not _allowed(key, u.m2):
                continue
            i, j = key
            acc = f1 * u.h[key] if key in u.h else None
            if i in u.g and j in u.g:
                t = f2 * (u.g[i] * u.g[j])
                acc = t if acc is None else acc + t
            if acc is not None:
                h[key] = acc
    if u.order >= 3:
        keys = set(u.t3)
        for hk in u.h:
            for i in u.g:
                keys.add(tuple(sorted(hk + (i,))))
        for key in combinations_with_replacement(sorted(u.g), 3):
            keys.add(key)
        for key in keys:
            if not _allowed(key, u.m3):
                continue
            acc = f1 * u.t3[key] if key in u.t3 else None
            for split in [(0, 1), (0, 2), (1, 2)]:
                pk = tuple(sorted((key[split[0]], key[split[1]])))
                gk = key[3 - split[0] - split[1]]
                if pk in u.h and gk in u.g:
                    t = f2 * (u.h[pk] * u.g[gk])
                    acc = t if acc is None else acc + t
            if key[0] in u.g and key[1] in u.g and key[2] in u.g:
                t = f3 * (u.g[key[0]] * u.g[key[1]] * u.g[key[2]])
                acc = t if acc is None else acc + t
            if acc is not None:
                t3[key] = acc
    return Jet(u.order, f0, g, h, t3, u.m2, u.m3)


def jtanh(u: Jet) -> Jet:
    t = ops.tanh(u.v)
    d1 = 1.0 - t * t
    d2 = -2.0 * (t * d1) if u.order >= 2 else None
    d3 = -2.0 * (d1 * d1 + t * d2) if u.order >= 3 else None
    return apply_unary(u, t, d1, d2, d3)


def jsin(u: Jet) -> Jet:
    s = ops.sin(u.v)
    c = ops.cos(u.v)
    return apply_unary(u, s, c, -s if u.order >= 2 else None, -c if u.order >= 3 else None)


def jcos(u: Jet) -> Jet:
    s = ops.sin(u.v)
    c = ops.cos(u.v)
    return apply_unary(u, c, -s, -c if u.order >= 2 else None, s if u.order >= 3 else None)


def jexp(u: Jet) -> Jet:
    e = ops.exp(u.v)
    return apply_unary(u, e, e, e if u.order >= 2 else None, e if u.order >= 3 else None)


def jpow(u: Jet, p) -> Jet:
    p = float(p)
    f0 = ops.power(u.v, p)
    f1 = p * ops.power(u.v, p - 1.0)
    f2 = p * (p - 1.0) * ops.power(u.v, p - 2.0) if u.order >= 2 else None
    f3 = p * (p - 1.0) * (p - 2.0) * ops.power(u.v, p - 3.0) if u.order >= 3 else None
    return apply_unary(u, f0, f1, f2, f3)


def _reciprocal(u: Jet) -> Jet:
    inv = 1.0 / u.v if not hasattr(u.v, "reciprocal") else u.v.reciprocal()
    i2 = inv * inv
    f2 = 2.0 * (i2 * inv) if u.order >= 2 else None
    f3 = -6.0 * (i2 * i2) if u.order >= 3 else None
    return apply_unary(u, inv, -i2, f2, f3)


def reduce_dim(jet: Jet, dim: int, dims) -> Jet:
    """Jet of d/d(dim) at a fixed location, as a function of the other dims.

    Used for derivative constraints inside constrained expressions: the
    input jet must have been evaluated with the `dim` slot still seeded
    (g[dim] = 1) at the constraint location and carried one extra order.
    The result is constant along `dim`, so every component touching `dim`
    is structurally zero and stays inside the result's mask.
    """
    v = jet.g.get(dim, 0.0)
    g = {}
    for key, c in jet.h.items():
        if key.count(dim) == 1:
            g[key[0] if key[1] == dim else key[1]] = c
    h = {}
    for key, c in jet.t3.items():
        if key.count(dim) == 1:
            rest = tuple(x for x in key if x != dim)
            h[rest] = c
    if jet.m3 is None:
        m2 = None
    else:
        m2 = {tuple(x for x in key if x != dim) for key in jet.m3 if key.count(dim) == 1}
        for i in dims:
            m2.add((i, dim) if i <= dim else (dim, i))
        m2 = frozenset(m2)
    return Jet(jet.order - 1, v, g, h, {}, m2, frozenset())


def mask_for_reduce(outer_m2, dims, dim: int):
    """Masks an order-(n+1) evaluation needs so reduce_dim can serve outer_m2.

    Returns (m2, m3) for the inner evaluation: m3 holds the third-order keys
    that become the outer second partials, and m2 is closed under the pairs
    each third-order key's product rule consumes, plus the pairs (i, dim)
    that become outer first partials.
    """
    m3 = set()
    if outer_m2 is None:
        outer_m2 = {(i, j) for i in dims for j in dims if i <= j}
    for i, j in outer_m2:
        if i != dim and j != dim:
            m3.add(tuple(sorted((i, j, dim))))
    m2 = {(i, dim) if i <= dim else (dim, i) for i in dims}
    for key in m3:
        for a in range(3):
            for b in range(a + 1, 3):
                m2.add(tuple(sorted((key[a], key[b]))))
    m2 |= set(outer_m2)
    return frozenset(m2), frozenset(m3)
