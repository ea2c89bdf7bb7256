"""Constrained expressions: exact imposition of boundary/initial conditions.

A constrained expression wraps an arbitrary "free function" N so that the
result satisfies a set of linear value/derivative constraints identically,
for any N.  Four constructions are provided:

* univariate TFC: f = N + sum_i eta_i s_i with the eta solved from the
  constraint matrix over a chosen support basis,
* multivariate TFC: the univariate construction applied one dimension at
  a time, each stage treating the previous stage's output as its free
  function (one extra free-function evaluation per value constraint),
* reduced TFC: N is multiplied by vanishing factors (x_i - loc)^(k+1) so
  its boundary terms drop out; the correction reduces to the TFC wrapper
  of the zero function and N is evaluated exactly once per point,
* boundary-function form: N * prod_i b_i(x)^(k_i+1) + G for user-supplied
  boundary functions b_i and boundary-value function G (non-rectangular
  geometries), plus a composition for vanishing conditions at infinity.

Free functions are callables ``free(x_jets, tag) -> Jet``; the tag names
the evaluation site so callers can cache network passes per point set.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import linalg
from .autodiff import ops
from .autodiff.jet import Jet, jpow, jtanh, mask_for_reduce, reduce_dim
from .rng import make_rng


class TfcError(ValueError):
    pass


@dataclass(frozen=True)
class LinearConstraint1D:
    """k-th derivative along one variable pinned at a fixed location.

    `target` is either a constant or a callable of the full jet tuple that
    must only read the remaining variables.
    """

    dim: int
    order: int
    location: float
    target: object = 0.0

    def __post_init__(self):
        if self.order < 0 or self.order > 2:
            raise TfcError("constraint derivative order must be 0, 1, or 2")


class Monomial:
    """Support function x^degree with exact derivative values."""

    def __init__(self, degree: int):
        self.degree = degree

    def deriv_value(self, k: int, x: float) -> float:
        d = self.degree
        if k > d:
            return 0.0
        coef = 1.0
        for i in range(k):
            coef *= d - i
        return coef * x ** (d - k)

    def eval_jet(self, x: Jet) -> Jet:
        if self.degree == 0:
            return Jet.const(1.0, x.order, x.m2, x.m3)
        out = x
        for _ in range(self.degree - 1):
            out = out * x
        return out


def monomial_basis(n: int) -> list[Monomial]:
    return [Monomial(d) for d in range(n)]


class ConstrainedExpression:
    """Callable wrapper (x_jets, free) -> Jet satisfying its constraints."""

    def __init__(self, call, n_free_evals: int, constraints=()):
        self._call = call
        self.n_free_evals = n_free_evals
        self.constraints = tuple(constraints)

    def __call__(self, x_jets, free) -> Jet:
        return self._call(x_jets, free)


def _prefix_free(free, prefix: str):
    return lambda pts, tag: free(pts, prefix + "/" + tag)


def _target_jet(target, x_jets, like: Jet) -> Jet:
    if callable(target):
        out = target(x_jets)
        if isinstance(out, Jet):
            return out
        return Jet.const(out, like.order, like.m2, like.m3)
    return Jet.const(float(target), like.order, like.m2, like.m3)


def _constraint_matrix_inv(constraints, basis):
    n = len(constraints)
    if len(basis) != n:
        raise TfcError(f"{n} constraints need a basis of size {n}, got {len(basis)}")
    m = np.array(
        [[basis[b].deriv_value(c.order, c.location) for b in range(n)] for c in constraints]
    )
    cond = linalg.condition_number(m)
    if not np.isfinite(cond) or cond > 1e12:
        raise TfcError(
            f"singular constraint matrix for this support basis (condition number {cond:.3e})"
        )
    return np.linalg.inv(m)


def _lift_affine(jet: Jet, order: int, m2, m3) -> Jet:
    # Raising the order of a jet is only exact when its higher coefficients
    # are structurally zero (variables, constants, derivative seeds).
    if jet.h or jet.t3:
        raise TfcError("cannot raise the order of a jet with computed curvature")
    return Jet(order, jet.v, dict(jet.g), m2=m2, m3=m3)


def _stage_call(prev_call, dim, constraints, basis, minv, stage_tag, n_dims):
    dims = range(n_dims)

    def call(x_jets, free):
        base = prev_call(x_jets, free)
        x_d = x_jets[dim]
        defects = []
        for a, con in enumerate(constraints):
            free_a = _prefix_free(free, f"{stage_tag}c{a}")
            if con.order == 0:
                pts = list(x_jets)
                pts[dim] = Jet.const(con.location, x_d.order, x_d.m2, x_d.m3)
                c_val = prev_call(pts, free_a)
            elif con.order == 1:
                inner_order = x_d.order + 1
                if inner_order > 3:
                    raise TfcError(
                        "derivative constraints inside a constrained expression "
                        "support output jets up to order 2"
                    )
                m2_in, m3_in = mask_for_reduce(x_d.m2, dims, dim)
                pts = [_lift_affine(j, inner_order, m2_in, m3_in) for j in x_jets]
                pts[dim] = Jet(inner_order, con.location, g={dim: 1.0}, m2=m2_in, m3=m3_in)
                c_val = reduce_dim(prev_call(pts, free_a), dim, dims)
            else:
                raise TfcError(
                    "second-derivative constraints are only supported for "
                    "univariate constrained expressions"
                )
            defects.append(_target_jet(con.target, x_jets, base) - c_val)
        out = base
        for b in range(len(constraints)):
            eta = None
            for a in range(len(constraints)):
                w = minv[b, a]
                if w == 0.0:
                    continue
                term = defects[a] * w
                eta = term if eta is None else eta + term
            if eta is not None:
                out = out + basis[b].eval_jet(x_d) * eta
        return out

    return call


def build_univariate_tfc(constraints, basis=None) -> ConstrainedExpression:
    """TFC wrapper for constraints acting on a single-variable function.

    Constraint functionals of the free function are numbers here, so
    derivative constraints of any supported order cost one extra
    free-function evaluation at the constraint location.
    """
    constraints = list(constraints)
    if not constraints:
        return ConstrainedExpression(lambda x, free: free(x, "main"), 1, ())
    dim = constraints[0].dim
    if any(c.dim != dim for c in constraints):
        raise TfcError("univariate constraints must share the variable index")
    if basis is None:
        basis = monomial_basis(len(constraints))
    minv = _constraint_matrix_inv(constraints, basis)

    def main(x_jets, free):
        return free(x_jets, "main")

    def call(x_jets, free):
        base = main(x_jets, free)
        x_d = x_jets[dim]
        defects = []
        for a, con in enumerate(constraints):
            free_a = _prefix_free(free, f"u{a}")
            if con.order == 0:
                pts = list(x_jets)
                pts[dim] = Jet.const(con.location, x_d.order, x_d.m2, x_d.m3)
                c_val = free_a(pts, "main")
                c_jet = Jet.const(c_val.v, base.order, base.m2, base.m3)
            else:
                # The functional value is a constant; evaluate a small jet
                # at the location seeded along `dim` and read it off.
                pts = [Jet.const(j.v, con.order) for j in x_jets]
                pts[dim] = Jet(con.order, con.location, g={dim: 1.0})
                out = free_a(pts, "main")
                val = out.d(dim) if con.order == 1 else out.d2(dim, dim)
                c_jet = Jet.const(val, base.order, base.m2, base.m3)
            defects.append(_target_jet(con.target, x_jets, base) - c_jet)
        out = base
        for b in range(len(constraints)):
            eta = None
            for a in range(len(constraints)):
                w = minv[b, a]
                if w == 0.0:
                    continue
                term = defects[a] * w
                eta = term if eta is None else eta + term
            if eta is not None:
                out = out + basis[b].eval_jet(x_d) * eta
        return out

    return ConstrainedExpression(call, 1 + len(constraints), constraints)


def _group_by_dim(constraints, dim_order=None):
    groups: dict[int, list[LinearConstraint1D]] = {}
    for c in constraints:
        groups.setdefault(c.dim, []).append(c)
    if dim_order is None:
        dim_order = sorted(groups)
    return [(d, groups[d]) for d in dim_order if d in groups]


def build_multivariate_tfc(
    constraints, n_dims: int, bases=None, dim_order=None
) -> ConstrainedExpression:
    """Iterated TFC: apply each dimension's constraints in turn.

    Every constraint must act on a single variable at a fixed location
    (boundaries of a box).  The wrapper evaluates its free function
    prod_i (n_i + 1) times per point.
    """
    groups = _group_by_dim(constraints, dim_order)

    call = lambda x_jets, free: free(x_jets, "main")
    n_evals = 1
    for d, group in groups:
        basis = None if bases is None else bases.get(d)
        if basis is None:
            basis = monomial_basis(len(group))
        minv = _constraint_matrix_inv(group, basis)
        call = _stage_call(call, d, group, basis, minv, f"d{d}", n_dims)
        n_evals *= 1 + len(group)
    return ConstrainedExpression(call, n_evals, constraints)


def _apply_vanishing(free_jet: Jet, factor_jets) -> Jet:
    out = free_jet
    for f in factor_jets:
        out = out * f
    return out


def _pow_jet(base: Jet, k: int) -> Jet:
    out = base
    for _ in range(k - 1):
        out = out * base
    return out


def build_reduced_tfc(
    constraints, n_dims: int, bases=None, dim_order=None
) -> ConstrainedExpression:
    """Reduced TFC: vanishing factors on N plus the zero-function TFC wrapper.

    The free function is evaluated exactly once per point; the correction
    term G is the multivariate TFC expression of N = 0, whose coefficients
    involve only the constraint targets.
    """
    constraints = list(constraints)
    g_expr = build_multivariate_tfc(constraints, n_dims, bases, dim_order)

    def zero_free(pts, tag):
        like = pts[0]
        return Jet.const(0.0, like.order, like.m2, like.m3)

    def call(x_jets, free):
        factors = [
            _pow_jet(x_jets[c.dim] - c.location, c.order + 1) for c in constraints
        ]
        out = _apply_vanishing(free(x_jets, "main"), factors)
        return out + g_expr(x_jets, zero_free)

    return ConstrainedExpression(call, 1, constraints)


def build_boundary_function_form(boundaries, g_fn) -> ConstrainedExpression:
    """f = N * prod_i b_i(x)^(k_i+1) + G for general boundary geometry.

    `boundaries` is a list of (b_fn, k) pairs where b_fn(x_jets) -> Jet
    vanishes on the boundary carrying a k-th order condition; `g_fn(x_jets)`
    must satisfy the boundary values itself.
    """

    def call(x_jets, free):
        factors = [_pow_jet(b_fn(x_jets), k + 1) for b_fn, k in boundaries]
        out = _apply_vanishing(free(x_jets, "main"), factors)
        g = g_fn(x_jets)
        if not isinstance(g, Jet):
            g = Jet.const(g, out.order, out.m2, out.m3)
        return out + g

    return ConstrainedExpression(call, 1, ())


def build_infinity_bc(profile, modifier, mode: str = "product", dim: int = 0) -> ConstrainedExpression:
    """Vanishing condition at infinity via a decaying profile.

    product: f = modifier(N, x) * profile(x); with a bounded network and a
    profile -> 0 at infinity, f vanishes there for any parameters.
    shift:   f = profile(modifier(N, x) + x_dim).
    """
    if mode not in ("product", "shift"):
        raise TfcError(f"unknown infinity-BC mode {mode!r}")

    def call(x_jets, free):
        n = free(x_jets, "main")
        if mode == "product":
            return modifier(n, x_jets) * profile(x_jets)
        return profile(modifier(n, x_jets) + x_jets[dim])

    return ConstrainedExpression(call, 1, ())


# -- verification ----------------------------------------------------------


def random_bounded_free(seed: int, n_inputs: int, n_units: int = 6, scale: float = 1.0):
    """A fixed random tanh expansion; bounded by n_units * |a| * scale."""
    rng = make_rng(seed, "random-free")
    w = rng.normal(0.0, 1.0, size=(n_units, n_inputs))
    b = rng.normal(0.0, 1.0, size=n_units)
    a = rng.normal(0.0, scale, size=n_units)

    def free(pts, tag):
        out = None
        for j in range(n_units):
            z = None
            for i, p in enumerate(pts):
                term = p * w[j, i]
                z = term if z is None else z + term
            unit = jtanh(z + b[j]) * a[j]
            out = unit if out is None else out + unit
        return out

    return free


def constant_free(value: float):
    def free(pts, tag):
        like = pts[0]
        return Jet.const(value, like.order, like.m2, like.m3)

    return free


def verify_constraints(
    cexpr: ConstrainedExpression,
    constraints,
    bounds,
    n_probe: int = 100,
    seed: int = 0,
    free=None,
) -> float:
    """Max |achieved - target| over random probes on each constraint face."""
    if n_probe < 1:
        raise TfcError("n_probe must be >= 1")
    if free is None:
        free = random_bounded_free(seed, len(bounds))
    rng = make_rng(seed, "verify-probes")
    worst = 0.0
    for con in constraints:
        pts_val = [
            rng.uniform(lo, hi, size=n_probe).astype(np.float64) for lo, hi in bounds
        ]
        x_jets = [Jet.variable(d, v, order=max(con.order, 0)) for d, v in enumerate(pts_val)]
        x_jets[con.dim] = Jet.variable(con.dim, np.full(n_probe, con.location), order=con.order)
        out = cexpr(x_jets, free)
        if con.order == 0:
            achieved = out.v
        elif con.order == 1:
            achieved = out.d(con.dim)
        else:
            achieved = out.d2(con.dim, con.dim)
        target = _target_jet(con.target, x_jets, out).v
        viol = np.max(np.abs(ops.value_of(achieved) - ops.value_of(target)))
        worst = max(worst, float(viol))
    return worst


def counting_free(inner) -> tuple[Callable, list]:
    """Wrap a free function, counting invocations (evaluation-count contract)."""
    calls = []

    def free(pts, tag):
        calls.append(tag)
        return inner(pts, tag)

    return free, calls
