"""Actor and critic networks built on the autograd engine.

Four actor variants share one interface: an MLP denoiser, a plain
transformer denoiser, the sparse MoE-transformer denoiser, and a
Gaussian policy head for the non-generative baseline.  Transformer
variants tokenize each input as [state, step, noisy action] (three
tokens with learned slot offsets) and read the denoised prediction off
the action token.  All forwards are batched: leading axis is the batch.

Parameters live in plain numpy arrays (a :class:`ParamBag`); every
forward binds them as graph leaves so the same engine differentiates
networks and the downstream reward path alike.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .autograd import Graph, NodeRef
from .channel import rng_from

ACTOR_VARIANTS = ("mlp_diffusion", "transformer_diffusion",
                  "moe_transformer_diffusion", "gaussian")
DIFFUSION_VARIANTS = ACTOR_VARIANTS[:3]

LOG_STD_MIN, LOG_STD_MAX = -5.0, 2.0
_LN_EPS = 1e-6


# ---------------------------------------------------------------------------
# parameter storage


class ParamBag:
    """Ordered name -> float64 array store; the trainer owns the mutable copy."""

    def __init__(self):
        self.arrays: dict[str, np.ndarray] = {}

    def add(self, name: str, arr: np.ndarray):
        if name in self.arrays:
            raise ValueError(f"duplicate parameter {name!r}")
        self.arrays[name] = np.asarray(arr, dtype=np.float64)

    def copy(self) -> "ParamBag":
        out = ParamBag()
        for k, v in self.arrays.items():
            out.arrays[k] = v.copy()
        return out

    def n_params(self) -> int:
        return sum(a.size for a in self.arrays.values())

    def __iter__(self):
        return iter(self.arrays.items())

    def __getitem__(self, name):
        return self.arrays[name]


class BoundParams:
    """One graph's leaf nodes for a bag; adjoints are read back after backward.

    Binding with trainable=False uses plain constants (e.g. the critic
    inside the actor loss), so those weights receive no gradient.
    """

    def __init__(self, g: Graph, bag: ParamBag, trainable: bool = True):
        self.g = g
        bind = g.leaf if trainable else g.constant
        self.nodes = {name: bind(arr) for name, arr in bag}

    def __getitem__(self, name: str) -> NodeRef:
        return self.nodes[name]

    def grads(self) -> dict[str, np.ndarray]:
        return {name: self.g.adjoint(node) for name, node in self.nodes.items()}


def _glorot(rng, fan_out: int, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def _add_linear(bag: ParamBag, rng, name: str, fan_out: int, fan_in: int):
    bag.add(name + ".weight", _glorot(rng, fan_out, fan_in))
    bag.add(name + ".bias", np.zeros(fan_out))


def _add_layernorm(bag: ParamBag, name: str, dim: int):
    bag.add(name + ".scale", np.ones(dim))
    bag.add(name + ".shift", np.zeros(dim))


def linear(g: Graph, bound: BoundParams, name: str, x: NodeRef) -> NodeRef:
    y = g.matmul_t(x, bound[name + ".weight"])
    return g.add_rowvec(y, bound[name + ".bias"])


def layer_norm(g: Graph, bound: BoundParams, name: str, x2: NodeRef) -> NodeRef:
    """Row-wise layer normalization of flattened tokens [T x D]."""
    mu = g.mean(x2, axis=1)
    centered = g.sub_rowscalar(x2, mu)
    var = g.mean(g.elementwise("square", centered), axis=1)
    std = g.elementwise("sqrt", var + _LN_EPS)
    normed = g.div_rowscalar(centered, std)
    return g.add_rowvec(g.mul_rowvec(normed, bound[name + ".scale"]),
                        bound[name + ".shift"])


def sinusoidal_table(n_steps: int, dim: int) -> np.ndarray:
    """Deterministic sin/cos embedding of the diffusion step index."""
    pos = np.arange(n_steps)[:, None]
    i = np.arange(dim // 2)[None, :]
    freq = np.exp(-np.log(10000.0) * (2 * i / dim))
    table = np.zeros((n_steps, dim))
    table[:, 0::2] = np.sin(pos * freq)
    table[:, 1::2] = np.cos(pos * freq)
    return table


# ---------------------------------------------------------------------------
# hyperparameters and containers


@dataclass(frozen=True)
class ActorHyper:
    variant: str
    state_dim: int
    action_dim: int = 64
    model_dim: int = 256
    n_heads: int = 4
    n_blocks: int = 2
    n_experts: int = 4
    top_k: int = 2
    expert_hidden: int = 512
    mlp_hidden: int = 256
    diffusion_steps: int = 6

    def __post_init__(self):
        if self.variant not in ACTOR_VARIANTS:
            raise ValueError(f"unknown actor variant {self.variant!r}")
        if self.model_dim % self.n_heads:
            raise ValueError("model_dim must be divisible by n_heads")
        if not 1 <= self.top_k <= self.n_experts:
            raise ValueError("top_k must lie in [1, n_experts]")

    @property
    def head_dim(self) -> int:
        return self.model_dim // self.n_heads


@dataclass
class ActorParameters:
    hyper: ActorHyper
    bag: ParamBag

    def n_params(self) -> int:
        return self.bag.n_params()

    def copy(self) -> "ActorParameters":
        return ActorParameters(self.hyper, self.bag.copy())

    def save(self, path):
        _save_bag(path, {"kind": "actor", **_hyper_dict(self.hyper)}, self.bag)

    @staticmethod
    def load(path) -> "ActorParameters":
        meta, bag = _load_bag(path)
        if meta.pop("kind") != "actor":
            raise ValueError("not an actor parameter file")
        return ActorParameters(ActorHyper(**meta), bag)


@dataclass
class CriticHyper:
    state_dim: int
    action_dim: int = 64
    hidden: int = 256


@dataclass
class CriticParameters:
    """Twin Q networks; identical architecture, independent weights."""

    hyper: CriticHyper
    bag: ParamBag

    def n_params(self) -> int:
        return self.bag.n_params()

    def copy(self) -> "CriticParameters":
        return CriticParameters(self.hyper, self.bag.copy())

    def save(self, path):
        meta = {"kind": "critic", "state_dim": self.hyper.state_dim,
                "action_dim": self.hyper.action_dim, "hidden": self.hyper.hidden}
        _save_bag(path, meta, self.bag)

    @staticmethod
    def load(path) -> "CriticParameters":
        meta, bag = _load_bag(path)
        if meta.pop("kind") != "critic":
            raise ValueError("not a critic parameter file")
        return CriticParameters(CriticHyper(**meta), bag)


def _hyper_dict(h: ActorHyper) -> dict:
    return {"variant": h.variant, "state_dim": h.state_dim,
            "action_dim": h.action_dim, "model_dim": h.model_dim,
            "n_heads": h.n_heads, "n_blocks": h.n_blocks,
            "n_experts": h.n_experts, "top_k": h.top_k,
            "expert_hidden": h.expert_hidden, "mlp_hidden": h.mlp_hidden,
            "diffusion_steps": h.diffusion_steps}


# ---------------------------------------------------------------------------
# initialization


def init_parameters(variant: str, state_dim: int, rng_seed,
                    **overrides) -> ActorParameters:
    """Fan-in scaled uniform init, zero biases; deterministic per seed."""
    hyper = ActorHyper(variant=variant, state_dim=state_dim, **overrides)
    rng = rng_from(rng_seed, 10)
    bag = ParamBag()
    if variant == "gaussian":
        h = hyper.mlp_hidden
        _add_linear(bag, rng, "lin0", h, state_dim)
        _add_linear(bag, rng, "lin1", h, h)
        _add_linear(bag, rng, "head", 2 * hyper.action_dim, h)
        return ActorParameters(hyper, bag)

    d = hyper.model_dim if variant != "mlp_diffusion" else hyper.mlp_hidden
    _add_linear(bag, rng, "state_embed", d, state_dim)
    _add_linear(bag, rng, "action_embed", d, hyper.action_dim)
    _add_linear(bag, rng, "step_embed", d, d)

    if variant == "mlp_diffusion":
        h = hyper.mlp_hidden
        _add_linear(bag, rng, "lin0", h, 3 * d)
        _add_linear(bag, rng, "lin1", h, h)
        _add_linear(bag, rng, "head", hyper.action_dim, h)
        return ActorParameters(hyper, bag)

    bag.add("pos_offsets", np.zeros((3, d)))
    hd = hyper.head_dim
    for b in range(hyper.n_blocks):
        p = f"block{b}"
        _add_layernorm(bag, f"{p}.ln1", d)
        # per-head projections stacked row-wise: head h owns rows
        # [h*head_dim, (h+1)*head_dim) of each q/k/v weight
        for kind in ("q", "k", "v"):
            weight = np.concatenate(
                [_glorot(rng, hd, d) for _ in range(hyper.n_heads)], axis=0)
            bag.add(f"{p}.attn.{kind}.weight", weight)
            bag.add(f"{p}.attn.{kind}.bias", np.zeros(hyper.n_heads * hd))
        _add_linear(bag, rng, f"{p}.attn.out", d, d)
        _add_layernorm(bag, f"{p}.ln2", d)
        if variant == "moe_transformer_diffusion":
            _add_linear(bag, rng, f"{p}.moe.gate", hyper.n_experts, d)
            for e in range(hyper.n_experts):
                _add_linear(bag, rng, f"{p}.moe.e{e}.lin0", hyper.expert_hidden, d)
                _add_linear(bag, rng, f"{p}.moe.e{e}.lin1", d, hyper.expert_hidden)
        else:
            _add_linear(bag, rng, f"{p}.ffn.lin0", hyper.expert_hidden, d)
            _add_linear(bag, rng, f"{p}.ffn.lin1", d, hyper.expert_hidden)
    _add_layernorm(bag, "final_ln", d)
    _add_linear(bag, rng, "head", hyper.action_dim, d)
    return ActorParameters(hyper, bag)


def init_critic(state_dim: int, action_dim: int, rng_seed,
                hidden: int = 256) -> CriticParameters:
    bag = ParamBag()
    for name, sub_seed in (("q1", 11), ("q2", 12)):
        rng = rng_from(rng_seed, sub_seed)
        _add_linear(bag, rng, f"{name}.lin0", hidden, state_dim + action_dim)
        _add_linear(bag, rng, f"{name}.lin1", hidden, hidden)
        _add_linear(bag, rng, f"{name}.head", 1, hidden)
    return CriticParameters(CriticHyper(state_dim, action_dim, hidden), bag)


# ---------------------------------------------------------------------------
# forward passes


@dataclass
class GateReport:
    """Per-block expert routing statistics for one forward pass."""

    counts: np.ndarray            # hard activation counts per expert
    soft_fractions: NodeRef       # differentiable mean gate weight per expert
    n_tokens: int

    @property
    def activation_fractions(self) -> np.ndarray:
        return self.counts / self.counts.sum()


def head_projection(params: "ActorParameters", block: int, kind: str,
                    head: int) -> np.ndarray:
    """One head's projection matrix [head_dim x D] out of the stacked weight."""
    hd = params.hyper.head_dim
    w = params.bag[f"block{block}.attn.{kind}.weight"]
    return w[head * hd:(head + 1) * hd]


def attention_forward(g: Graph, bound: BoundParams, prefix: str,
                      tokens3: NodeRef, hyper: ActorHyper) -> NodeRef:
    """Scaled dot-product multi-head attention over [B x L x D] tokens.

    All heads share one fused projection gemm; head h occupies feature
    rows [h*head_dim, (h+1)*head_dim) and attends independently.
    """
    batch, length, d = tokens3.value.shape
    nh, hd = hyper.n_heads, hyper.head_dim
    scale = 1.0 / np.sqrt(hd)

    def split_heads(x):  # [B, L, nh*hd] -> [B*nh, L, hd]
        x = g.reshape(x, (batch, length, nh, hd))
        return g.reshape(g.transpose(x, (0, 2, 1, 3)), (batch * nh, length, hd))

    q = split_heads(linear(g, bound, f"{prefix}.q", tokens3))
    k = split_heads(linear(g, bound, f"{prefix}.k", tokens3))
    v = split_heads(linear(g, bound, f"{prefix}.v", tokens3))
    weights = g.softmax_lastdim(g.matmul(q, g.swap_last2(k)) * scale)
    mixed = g.matmul(weights, v)  # [B*nh, L, hd]
    mixed = g.reshape(mixed, (batch, nh, length, hd))
    merged = g.reshape(g.transpose(mixed, (0, 2, 1, 3)), (batch, length, d))
    return linear(g, bound, f"{prefix}.out", merged)


def moe_forward(g: Graph, bound: BoundParams, prefix: str, x2: NodeRef,
                hyper: ActorHyper, top_k: int | None = None):
    """Top-k routed mixture of experts over flattened tokens [T x D].

    Combination weights are the softmax over the selected experts' gate
    scores; ties break toward the lower expert index.  Returns the mixed
    output and a :class:`GateReport`.
    """
    k = hyper.top_k if top_k is None else top_k
    n_exp = hyper.n_experts
    scores = linear(g, bound, f"{prefix}.gate", x2)
    sv = scores.value
    n_tokens = sv.shape[0]
    order = np.argsort(-sv, axis=1, kind="stable")
    mask = np.zeros_like(sv)
    np.put_along_axis(mask, order[:, :k], 1.0, axis=1)

    neg_fill = g.constant((1.0 - mask) * -1e30)
    weights = g.softmax_lastdim(scores * g.constant(mask) + neg_fill)
    out = None
    for e in range(n_exp):
        idx = np.nonzero(mask[:, e])[0]
        if idx.size == 0:
            continue
        rows = g.take_rows(x2, idx)
        hdn = g.elementwise("relu", linear(g, bound, f"{prefix}.e{e}.lin0", rows))
        y = linear(g, bound, f"{prefix}.e{e}.lin1", hdn)
        w_rows = g.take_rows(weights, idx)
        w_col = g.reshape(g.slice_axis(w_rows, 1, e, e + 1), (-1,))
        contrib = g.scatter_rows(g.mul_rowscalar(y, w_col), idx, n_tokens)
        out = contrib if out is None else out + contrib
    report = GateReport(mask.sum(axis=0), g.mean(weights, axis=0), n_tokens)
    return out, report


def _dense_ffn(g, bound, prefix, x2):
    hdn = g.elementwise("relu", linear(g, bound, f"{prefix}.lin0", x2))
    return linear(g, bound, f"{prefix}.lin1", hdn)


def _tile_row(g: Graph, row: NodeRef, batch: int) -> NodeRef:
    ones = g.constant(np.ones((batch, 1)))
    return g.matmul(ones, row)


def _embed_tokens(g, bound, hyper, state, noisy_action, step_index):
    batch = state.value.shape[0]
    d = hyper.model_dim
    table = sinusoidal_table(hyper.diffusion_steps, d)
    step_row = g.constant(table[step_index:step_index + 1])
    s_tok = linear(g, bound, "state_embed", state)
    t_tok = _tile_row(g, linear(g, bound, "step_embed", step_row), batch)
    a_tok = linear(g, bound, "action_embed", noisy_action)
    toks = []
    for i, tok in enumerate((s_tok, t_tok, a_tok)):
        off = g.reshape(g.slice_axis(bound["pos_offsets"], 0, i, i + 1), (d,))
        toks.append(g.reshape(g.add_rowvec(tok, off), (batch, 1, d)))
    return g.concat(toks, axis=1)


def actor_forward(g: Graph, params: ActorParameters, bound: BoundParams,
                  state: NodeRef, noisy_action: NodeRef | None,
                  step_index: int | None, top_k: int | None = None):
    """Predicted noise [B x A] for diffusion variants.

    The gaussian variant ignores noisy_action/step_index and returns the
    (mean, log_std) pair instead.  MoE variants return (noise, reports).
    """
    hyper = params.hyper
    if hyper.variant == "gaussian":
        h = g.elementwise("relu", linear(g, bound, "lin0", state))
        h = g.elementwise("relu", linear(g, bound, "lin1", h))
        out = linear(g, bound, "head", h)
        a = hyper.action_dim
        mean = g.slice_axis(out, 1, 0, a)
        log_std = g.clip(g.slice_axis(out, 1, a, 2 * a), LOG_STD_MIN, LOG_STD_MAX)
        return mean, log_std

    if step_index is None or not 0 <= step_index < hyper.diffusion_steps:
        raise ValueError(f"step_index {step_index} outside "
                         f"[0, {hyper.diffusion_steps})")

    if hyper.variant == "mlp_diffusion":
        d = hyper.mlp_hidden
        table = sinusoidal_table(hyper.diffusion_steps, d)
        batch = state.value.shape[0]
        step_row = g.constant(table[step_index:step_index + 1])
        parts = [linear(g, bound, "state_embed", state),
                 _tile_row(g, linear(g, bound, "step_embed", step_row), batch),
                 linear(g, bound, "action_embed", noisy_action)]
        h = g.concat(parts, axis=1)
        h = g.elementwise("relu", linear(g, bound, "lin0", h))
        h = g.elementwise("relu", linear(g, bound, "lin1", h))
        return linear(g, bound, "head", h)

    # transformer variants
    tokens3 = _embed_tokens(g, bound, hyper, state, noisy_action, step_index)
    batch = state.value.shape[0]
    d = hyper.model_dim
    reports = []
    for b in range(hyper.n_blocks):
        p = f"block{b}"
        flat = g.reshape(tokens3, (batch * 3, d))
        normed = g.reshape(layer_norm(g, bound, f"{p}.ln1", flat), (batch, 3, d))
        tokens3 = tokens3 + attention_forward(g, bound, f"{p}.attn", normed, hyper)
        flat = g.reshape(tokens3, (batch * 3, d))
        normed2 = layer_norm(g, bound, f"{p}.ln2", flat)
        if hyper.variant == "moe_transformer_diffusion":
            mixed, report = moe_forward(g, bound, f"{p}.moe", normed2, hyper,
                                        top_k=top_k)
            reports.append(report)
        else:
            mixed = _dense_ffn(g, bound, f"{p}.ffn", normed2)
        tokens3 = tokens3 + g.reshape(mixed, (batch, 3, d))
    flat = layer_norm(g, bound, "final_ln", g.reshape(tokens3, (batch * 3, d)))
    action_tok = g.take_rows(flat, np.arange(2, batch * 3, 3))
    noise = linear(g, bound, "head", action_tok)
    if hyper.variant == "moe_transformer_diffusion":
        return noise, reports
    return noise


def critic_forward(g: Graph, params: CriticParameters, bound: BoundParams,
                   state: NodeRef, action: NodeRef):
    """Twin scalar value estimates (q1, q2) for a [B x S], [B x A] batch."""
    x = g.concat([state, action], axis=1)
    outs = []
    for name in ("q1", "q2"):
        h = g.elementwise("relu", linear(g, bound, f"{name}.lin0", x))
        h = g.elementwise("relu", linear(g, bound, f"{name}.lin1", h))
        outs.append(linear(g, bound, f"{name}.head", h))
    return outs[0], outs[1]


def moe_balance_loss(g: Graph, reports: list[GateReport],
                     n_experts: int) -> NodeRef:
    """Mean squared deviation of soft expert usage from the uniform 1/E."""
    terms = []
    for rep in reports:
        dev = rep.soft_fractions - (1.0 / n_experts)
        terms.append(g.reshape(g.mean(g.elementwise("square", dev)), (1,)))
    return g.mean(g.concat(terms, axis=0))


# ---------------------------------------------------------------------------
# binary serialization: header (meta JSON + shape table) then LE float64 data


_MAGIC = b"SBPM"
_VERSION = 1


def _save_bag(path, meta: dict, bag: ParamBag):
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<I", _VERSION))
    meta_bytes = json.dumps(meta, sort_keys=True).encode()
    buf.write(struct.pack("<I", len(meta_bytes)))
    buf.write(meta_bytes)
    buf.write(struct.pack("<I", len(bag.arrays)))
    for name, arr in bag:
        nb = name.encode()
        buf.write(struct.pack("<H", len(nb)))
        buf.write(nb)
        buf.write(struct.pack("<B", arr.ndim))
        for dim in arr.shape:
            buf.write(struct.pack("<I", dim))
    for _, arr in bag:
        buf.write(arr.astype("<f8", copy=False).tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def _load_bag(path):
    with open(path, "rb") as fh:
        data = fh.read()
    buf = io.BytesIO(data)
    if buf.read(4) != _MAGIC:
        raise ValueError(f"{path}: not a parameter file")
    version, = struct.unpack("<I", buf.read(4))
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    meta_len, = struct.unpack("<I", buf.read(4))
    meta = json.loads(buf.read(meta_len).decode())
    n_arrays, = struct.unpack("<I", buf.read(4))
    shapes = []
    for _ in range(n_arrays):
        name_len, = struct.unpack("<H", buf.read(2))
        name = buf.read(name_len).decode()
        ndim, = struct.unpack("<B", buf.read(1))
        shape = tuple(struct.unpack("<I", buf.read(4))[0] for _ in range(ndim))
        shapes.append((name, shape))
    bag = ParamBag()
    for name, shape in shapes:
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        raw = buf.read(count * 8)
        bag.add(name, np.frombuffer(raw, dtype="<f8").reshape(shape).copy())
    return meta, bag
