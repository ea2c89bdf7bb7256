"""Fully-connected architectures with a linear final layer.

Two shapes are used throughout: a single hidden layer with random frozen
input weights (the extreme-learning-machine form) and a deep stack whose
last hidden layer is bias-free so that the final linear map `beta` plays
the same role as in the shallow case.  `beta` is the only block the
Gauss-Newton extremizer touches.

Optionally the first periodic input dimensions are replaced by a bank of
sinusoidal features S_i(x) = A_i sin(2 pi x / L + phi_i), which makes every
network output exactly periodic in those inputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .autodiff import ops
from .autodiff.dual import DualArray
from .autodiff.jet import Jet, _isect, jsin, jtanh
from .autodiff.reverse import Var
from .rng import make_rng


@dataclass(frozen=True)
class PeriodicSpec:
    """Sinusoidal embedding of selected input dimensions."""

    dims: tuple[int, ...]
    periods: tuple[float, ...]
    width: int

    def __post_init__(self):
        if len(self.dims) != len(self.periods):
            raise ValueError("one period per periodic dimension required")
        if any(p <= 0 for p in self.periods):
            raise ValueError("periods must be positive")
        if self.width < 1:
            raise ValueError("embedding width must be >= 1")


@dataclass(frozen=True)
class NetworkConfig:
    input_dim: int
    output_dim: int
    hidden_sizes: tuple[int, ...]
    activation: str = "tanh"
    periodic: PeriodicSpec | None = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if self.input_dim < 1 or self.output_dim < 1 or not self.hidden_sizes:
            raise ValueError("all sizes must be >= 1")
        if any(h < 1 for h in self.hidden_sizes):
            raise ValueError("all sizes must be >= 1")
        if self.activation != "tanh":
            raise ValueError(f"unsupported activation {self.activation!r}")
        if self.periodic is not None:
            bad = [d for d in self.periodic.dims if not 0 <= d < self.input_dim]
            if bad:
                raise ValueError(f"periodic dims {bad} outside input range")

    @property
    def n_layers(self) -> int:
        return len(self.hidden_sizes)

    def layer_has_bias(self, k: int) -> bool:
        # Layers are 1-based.  The last hidden layer of a deep stack is
        # bias-free; a single hidden layer keeps its bias (shallow form).
        return k < self.n_layers or self.n_layers == 1

    def feature_dim(self) -> int:
        if self.periodic is None:
            return self.input_dim
        return self.input_dim - len(self.periodic.dims) + len(self.periodic.dims) * self.periodic.width

    def block_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        """Parameter blocks in flat-vector order; `beta` is always last."""
        shapes: list[tuple[str, tuple[int, ...]]] = []
        fan = self.feature_dim()
        for k, h in enumerate(self.hidden_sizes, start=1):
            shapes.append((f"w{k}", (fan, h)))
            if self.layer_has_bias(k):
                shapes.append((f"b{k}", (h,)))
            fan = h
        if self.periodic is not None:
            n = len(self.periodic.dims)
            shapes.append(("amp", (n, self.periodic.width)))
            shapes.append(("phase", (n, self.periodic.width)))
        shapes.append(("beta", (self.hidden_sizes[-1], self.output_dim)))
        return shapes


class NetworkParams:
    """All parameters of a network, backed by one flat float64 vector.

    Block views alias the flat vector, so mutating the beta view mutates
    the flat vector and nothing else.
    """

    __slots__ = ("config", "flat", "blocks", "_offsets")

    def __init__(self, config: NetworkConfig, flat: np.ndarray):
        self.config = config
        self.flat = np.asarray(flat, dtype=np.float64)
        offsets = {}
        blocks = {}
        pos = 0
        for name, shape in config.block_shapes():
            size = int(np.prod(shape))
            offsets[name] = (pos, pos + size)
            blocks[name] = self.flat[pos : pos + size].reshape(shape)
            pos += size
        if pos != self.flat.size:
            raise ValueError(f"flat vector has {self.flat.size} entries, expected {pos}")
        self.blocks = blocks
        self._offsets = offsets

    @property
    def n_params(self) -> int:
        return self.flat.size

    def clone(self) -> "NetworkParams":
        return NetworkParams(self.config, self.flat.copy())

    def with_flat(self, flat: np.ndarray) -> "NetworkParams":
        return NetworkParams(self.config, np.array(flat, dtype=np.float64))

    def beta_slice(self) -> slice:
        a, b = self._offsets["beta"]
        return slice(a, b)


def param_split(params: NetworkParams) -> tuple[np.ndarray, np.ndarray]:
    """Views (hidden-and-embedding block, beta block) of the flat vector."""
    s = params.beta_slice()
    return params.flat[: s.start], params.flat[s]


def param_assemble(config: NetworkConfig, hidden: np.ndarray, beta: np.ndarray) -> NetworkParams:
    return NetworkParams(config, np.concatenate([hidden, beta]))


def init_xavier_uniform(config: NetworkConfig, seed: int | None = None) -> NetworkParams:
    """Xavier-uniform weights, zero biases, Xavier-normal embedding bank.

    Weight entries are uniform on +-sqrt(6/(fan_in+fan_out)).  The fan-based
    bound is ill-defined for bias vectors, which start at zero.  Periodic
    amplitudes/phases use the normal variant with fan_in 1, fan_out equal to
    the embedding width.
    """
    if seed is None:
        seed = config.seed
    rng = make_rng(seed, "xavier-init")
    parts = []
    for name, shape in config.block_shapes():
        if name.startswith("w"):
            fan_in, fan_out = shape
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            parts.append(rng.uniform(-bound, bound, size=shape).ravel())
        elif name.startswith("b") and name != "beta":
            parts.append(np.zeros(int(np.prod(shape))))
        elif name == "beta":
            fan_in, fan_out = shape
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            parts.append(rng.uniform(-bound, bound, size=shape).ravel())
        else:  # amp / phase
            std = np.sqrt(2.0 / (1.0 + config.periodic.width))
            parts.append(rng.normal(0.0, std, size=shape).ravel())
    return NetworkParams(config, np.concatenate(parts))


def periodic_embed(x: np.ndarray, amp: np.ndarray, phase: np.ndarray, period: float) -> np.ndarray:
    """Feature bank S_i(x) = amp_i sin(2 pi x / period + phase_i), shape (N, width)."""
    x = np.asarray(x, dtype=np.float64)
    return amp * np.sin((2.0 * np.pi / period) * x[:, None] + phase)


def forward(params: NetworkParams, x: np.ndarray) -> np.ndarray:
    """Plain value forward pass; x is (N, input_dim), result (N, output_dim)."""
    cfg = params.config
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    b = params.blocks
    if cfg.periodic is None:
        a = x
    else:
        feats = []
        for j, (d, L) in enumerate(zip(cfg.periodic.dims, cfg.periodic.periods)):
            feats.append(periodic_embed(x[:, d], b["amp"][j], b["phase"][j], L))
        rest = [d for d in range(cfg.input_dim) if d not in cfg.periodic.dims]
        if rest:
            feats.append(x[:, rest])
        a = np.concatenate(feats, axis=1)
    for k in range(1, cfg.n_layers + 1):
        z = a @ b[f"w{k}"]
        if cfg.layer_has_bias(k):
            z = z + b[f"b{k}"]
        a = np.tanh(z)
    return a @ b["beta"]


# -- jet evaluation ------------------------------------------------------


def _jet_rows(jets) -> int:
    n = 1
    for j in jets:
        v = ops.value_of(j.v)
        if v.ndim > 0:
            n = max(n, v.shape[0])
        for d in (j.g, j.h, j.t3):
            for c in d.values():
                vc = ops.value_of(c)
                if vc.ndim > 0:
                    n = max(n, vc.shape[0])
    return n


def _stack_jets(jets: list[Jet], n_rows: int) -> Jet:
    """Stack scalar jets into one jet with (n_rows, F) coefficients."""
    order = min(j.order for j in jets)
    m2 = None
    m3 = None
    for j in jets:
        m2 = _isect(m2, j.m2)
        m3 = _isect(m3, j.m3)
    v = ops.stack_cols([j.v for j in jets], n_rows)
    out = Jet(order, v, m2=m2, m3=m3)
    for attr in ("g", "h", "t3"):
        keys = set()
        for j in jets:
            keys |= set(getattr(j, attr))
        for key in keys:
            cols = [getattr(j, attr).get(key, 0.0) for j in jets]
            getattr(out, attr)[key] = ops.stack_cols(cols, n_rows)
    return out


def _jet_map(jet: Jet, fn) -> Jet:
    return Jet(
        jet.order,
        fn(jet.v),
        {k: fn(c) for k, c in jet.g.items()},
        {k: fn(c) for k, c in jet.h.items()},
        {k: fn(c) for k, c in jet.t3.items()},
        jet.m2,
        jet.m3,
    )


def _dense(jet: Jet, w, bias=None) -> Jet:
    out = _jet_map(jet, lambda c: ops.matmul(c, w))
    if bias is not None:
        out.v = out.v + bias
    return out


def _take_row(block, j):
    if isinstance(block, np.ndarray):
        return block[j]
    return block.take_row(j)


def _embed_block(x_jet: Jet, amp_row, phase_row, period: float) -> Jet:
    # Input coordinates are always plain samples; reshape to (N, 1) so the
    # (width,) parameter rows broadcast into (N, width) feature blocks.
    def to_col(c):
        c = np.asarray(c, dtype=np.float64)
        return c[:, None] if c.ndim else c

    col = _jet_map(x_jet, to_col)
    arg = col * (2.0 * np.pi / period) + Jet.const(phase_row, col.order, col.m2, col.m3)
    return jsin(arg) * Jet.const(amp_row, col.order, col.m2, col.m3)


def feature_jets(config: NetworkConfig, blocks, inputs: list[Jet], n_rows: int) -> Jet:
    """First-layer input jet with (N, feature_dim) coefficients."""
    if config.periodic is None:
        return _stack_jets(inputs, n_rows)
    parts = []
    for j, (d, L) in enumerate(zip(config.periodic.dims, config.periodic.periods)):
        amp_row = _take_row(blocks["amp"], j)
        phase_row = _take_row(blocks["phase"], j)
        parts.append(_embed_block(inputs[d], amp_row, phase_row, L))
    rest = [inputs[d] for d in range(config.input_dim) if d not in config.periodic.dims]
    if rest:
        parts.append(_stack_jets(rest, n_rows))
    # Horizontal concatenation of jet blocks, done per coefficient key.
    order = min(p.order for p in parts)
    m2 = None
    m3 = None
    for p in parts:
        m2 = _isect(m2, p.m2)
        m3 = _isect(m3, p.m3)
    widths = []
    for p, src in zip(parts, list(config.periodic.dims) + (["rest"] if rest else [])):
        widths.append(config.periodic.width if src != "rest" else len(rest))
    out = Jet(order, _hcat([p.v for p in parts], widths, n_rows), m2=m2, m3=m3)
    for attr in ("g", "h", "t3"):
        keys = set()
        for p in parts:
            keys |= set(getattr(p, attr))
        for key in keys:
            cols = [getattr(p, attr).get(key) for p in parts]
            getattr(out, attr)[key] = _hcat(cols, widths, n_rows)
    return out


def _hcat(blocks_list, widths, n_rows):
    # Concatenate (N, w_i) coefficient blocks, zero-filling missing ones.
    if any(isinstance(b, DualArray) for b in blocks_list):
        width_t = next(b.width for b in blocks_list if isinstance(b, DualArray))
        prim = []
        tang = []
        for b, w in zip(blocks_list, widths):
            if isinstance(b, DualArray):
                prim.append(np.broadcast_to(b.primal, (n_rows, w)))
                tang.append(np.broadcast_to(b.tangent, (n_rows, w, width_t)))
            else:
                prim.append(np.broadcast_to(_as_block(b, w, n_rows), (n_rows, w)))
                tang.append(np.zeros((n_rows, w, width_t)))
        return DualArray(np.concatenate(prim, axis=1), np.concatenate(tang, axis=1))
    if any(isinstance(b, Var) for b in blocks_list):
        vals = [
            b if isinstance(b, Var) else np.broadcast_to(_as_block(b, w, n_rows), (n_rows, w))
            for b, w in zip(blocks_list, widths)
        ]
        total = sum(widths)
        out_val = np.concatenate([v.value if isinstance(v, Var) else v for v in vals], axis=1)
        parents = tuple(v for v in vals if isinstance(v, Var))
        out = Var(out_val, parents)
        spans = []
        pos = 0
        for v, w in zip(vals, widths):
            spans.append((pos, pos + w, v if isinstance(v, Var) else None))
            pos += w

        def bw(g):
            for a, b_, node in spans:
                if node is not None:
                    node._acc(g[:, a:b_])

        out._bw = bw
        return out
    mats = [np.broadcast_to(_as_block(b, w, n_rows), (n_rows, w)) for b, w in zip(blocks_list, widths)]
    return np.concatenate(mats, axis=1)


def _as_block(b, width, n_rows):
    if b is None:
        return np.zeros((1, width))
    b = np.asarray(b, dtype=np.float64)
    if b.ndim == 0:
        return np.full((1, width), float(b))
    if b.ndim == 1:
        return b.reshape(-1, 1)
    return b


def hidden_jets(config: NetworkConfig, blocks, inputs: list[Jet]) -> Jet:
    """Jet of the last hidden layer, coefficients shaped (N, H_E)."""
    n_rows = _jet_rows(inputs)
    a = feature_jets(config, blocks, inputs, n_rows)
    for k in range(1, config.n_layers + 1):
        bias = blocks.get(f"b{k}") if config.layer_has_bias(k) else None
        a = jtanh(_dense(a, blocks[f"w{k}"], bias))
    return a


def apply_jets(config: NetworkConfig, blocks, inputs: list[Jet]) -> list[Jet]:
    """Jets of all network outputs at the given input jets."""
    hidden = hidden_jets(config, blocks, inputs)
    out = _dense(hidden, blocks["beta"])
    return [_jet_map(out, lambda c, k=k: ops.take_col(c, k)) for k in range(config.output_dim)]


def outputs_with_beta_seeded(hidden: Jet, beta: np.ndarray) -> list[Jet]:
    """Output jets with forward tangents seeded on every beta entry.

    `hidden` must have plain ndarray coefficients.  The tangent layout
    matches the flat-vector order of the beta block (row-major (H_E, l)).
    """
    h_e, n_out = beta.shape
    width = h_e * n_out

    def mk(comp, k):
        comp = np.asarray(comp, dtype=np.float64)
        if comp.ndim == 0:
            comp = np.full((1, h_e), float(comp))
        prim = comp @ beta[:, k]
        tang = np.zeros((comp.shape[0], h_e, n_out))
        tang[:, :, k] = comp
        return DualArray(prim, tang.reshape(comp.shape[0], width))

    outs = []
    for k in range(n_out):
        outs.append(_jet_map(hidden, lambda c, k=k: mk(c, k)))
    return outs


# -- checkpoints -----------------------------------------------------------


def config_to_dict(config: NetworkConfig) -> dict:
    d = {
        "input_dim": config.input_dim,
        "output_dim": config.output_dim,
        "hidden_sizes": list(config.hidden_sizes),
        "activation": config.activation,
        "seed": config.seed,
    }
    if config.periodic is not None:
        d["periodic"] = {
            "dims": list(config.periodic.dims),
            "periods": list(config.periodic.periods),
            "width": config.periodic.width,
        }
    return d


def config_from_dict(d: dict) -> NetworkConfig:
    periodic = None
    if d.get("periodic") is not None:
        p = d["periodic"]
        periodic = PeriodicSpec(tuple(p["dims"]), tuple(p["periods"]), int(p["width"]))
    return NetworkConfig(
        input_dim=int(d["input_dim"]),
        output_dim=int(d["output_dim"]),
        hidden_sizes=tuple(d["hidden_sizes"]),
        activation=d.get("activation", "tanh"),
        periodic=periodic,
        seed=int(d.get("seed", 0)),
    )


def save_checkpoint(params: NetworkParams, path, extra: dict | None = None):
    """JSON checkpoint; floats round-trip exactly (shortest-repr decimals)."""
    payload = {
        "format": "pinnx-checkpoint-v1",
        "config": config_to_dict(params.config),
        "blocks": {name: arr.tolist() for name, arr in params.blocks.items()},
    }
    if extra:
        payload["extra"] = extra
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_checkpoint(path) -> NetworkParams:
    with open(path) as fh:
        payload = json.load(fh)
    config = config_from_dict(payload["config"])
    parts = []
    for name, shape in config.block_shapes():
        arr = np.asarray(payload["blocks"][name], dtype=np.float64)
        if arr.shape != shape:
            raise ValueError(f"checkpoint block {name} has shape {arr.shape}, expected {shape}")
        parts.append(arr.ravel())
    return NetworkParams(config, np.concatenate(parts))
