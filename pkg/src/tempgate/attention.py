"""Graph attention layers: GCN/GAT/GATv2 backbones with optional learnable
softmax temperature and sigmoid feature gates, in every combination used by
the eleven-method benchmark matrix.

Temperature is a per-layer scalar shared across heads, parameterized as
softplus(theta) + TEMP_EPS so it stays positive. The gate is one linear map
per layer producing sigmoid values of the projected-feature width (heads *
per-head dim): post-gate multiplies it into the aggregated per-head output
(the concatenated head output) before any head averaging; gate-first
multiplies it into each head's slice of the projected features, which then
feed both the attention logits and the aggregated messages. For GATv2 the
gate enters the logit on the scoring projections (A_dst h_i and A_src h_j),
keeping every parameter shape identical to the ungated backbone.

Multi-head outputs are concatenated on hidden layers and averaged on the
output layer. Hidden activation is ELU for attention backbones and ReLU for
GCN; the final layer emits raw logits. No projection carries a bias; the
gate bias b_g is the single exception.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .graph import Graph

TEMP_EPS = 1e-3

# The eleven benchmark methods: name -> (backbone, temperature, gate).
METHODS = {
    "GCN": ("GCN", "off", "off"),
    "GAT": ("GAT", "off", "off"),
    "GATv2": ("GATv2", "off", "off"),
    "Gated": ("GAT", "off", "post"),
    "Temp_only": ("GAT", "learnable", "off"),
    "Temp_gated": ("GAT", "learnable", "post"),
    "Gated_temp": ("GAT", "learnable", "gate_first"),
    "Gated_v2": ("GATv2", "off", "post"),
    "Temp_only_v2": ("GATv2", "learnable", "off"),
    "Temp_gated_v2": ("GATv2", "learnable", "post"),
    "Gated_temp_v2": ("GATv2", "learnable", "gate_first"),
}

_VALID_TRIPLES = frozenset(METHODS.values())


@dataclass(frozen=True)
class AttentionSpec:
    """One benchmark method plus its architecture hyperparameters."""

    backbone: str
    temperature: str = "off"
    gate: str = "off"
    heads: int = 1
    in_dim: int = 1
    hidden_dim: int = 8
    out_dim: int = 2
    layers: int = 2
    leaky_slope: float = 0.2
    dropout: float = 0.0

    def __post_init__(self):
        triple = (self.backbone, self.temperature, self.gate)
        if triple not in _VALID_TRIPLES:
            raise ValueError(f"no benchmark method has configuration {triple}")
        if self.backbone == "GCN" and self.heads != 1:
            raise ValueError("GCN has no attention heads; use heads=1")
        if min(self.heads, self.in_dim, self.hidden_dim, self.out_dim, self.layers) < 1:
            raise ValueError("dimensions, heads and layers must be positive")
        if not 0.0 < self.leaky_slope < 1.0:
            raise ValueError("leaky_slope must lie in (0, 1)")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")

    @property
    def method_name(self):
        triple = (self.backbone, self.temperature, self.gate)
        for name, t in METHODS.items():
            if t == triple:
                return name
        raise AssertionError  # unreachable: triple validated above

    def layer_dims(self):
        """(d_in, per-head d_out) for every layer."""
        dims = []
        width = self.in_dim
        for i in range(self.layers):
            dh = self.out_dim if i == self.layers - 1 else self.hidden_dim
            dims.append((width, dh))
            width = dh if self.backbone == "GCN" else self.heads * dh
        return dims


def spec_for_method(name, in_dim, hidden_dim, out_dim, heads=8, layers=2,
                    dropout=0.0, leaky_slope=0.2):
    """Build the AttentionSpec for one of the eleven method names."""
    if name not in METHODS:
        raise ValueError(f"unknown method: {name}")
    backbone, temperature, gate = METHODS[name]
    if backbone == "GCN":
        heads = 1
    return AttentionSpec(
        backbone=backbone,
        temperature=temperature,
        gate=gate,
        heads=heads,
        in_dim=in_dim,
        hidden_dim=hidden_dim,
        out_dim=out_dim,
        layers=layers,
        dropout=dropout,
        leaky_slope=leaky_slope,
    )


# ---------------------------------------------------------------------------
# Standalone scoring functions (plain numpy; the theory module and tests use
# these directly, independent of the tape-based layer).
# ---------------------------------------------------------------------------


def gat_logit(hi_proj, hj_proj, a, slope):
    """LeakyReLU(a . [hi_proj || hj_proj]) for one directed edge."""
    hi_proj = np.asarray(hi_proj, dtype=np.float64)
    hj_proj = np.asarray(hj_proj, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    if a.size != hi_proj.size + hj_proj.size:
        raise ValueError("attention vector must match the concatenated size")
    t = a[: hi_proj.size] @ hi_proj + a[hi_proj.size :] @ hj_proj
    return float(t if t >= 0 else slope * t)


def gatv2_logit(hi, hj, W, q, slope):
    """q . LeakyReLU(W [hi || hj]) for one directed edge."""
    hi = np.asarray(hi, dtype=np.float64)
    hj = np.asarray(hj, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    cat = np.concatenate([hi, hj])
    if W.shape[1] != cat.size or W.shape[0] != q.size:
        raise ValueError("scoring shapes do not match the concatenated input")
    z = W @ cat
    return float(q @ np.where(z >= 0, z, slope * z))


def weighted_l1_logit(hi, hj, w):
    """Negative weighted l1 distance: always <= 0, zero iff hi == hj."""
    hi = np.asarray(hi, dtype=np.float64)
    hj = np.asarray(hj, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if np.any(w <= 0):
        raise ValueError("weights must be strictly positive")
    if hi.shape != hj.shape or w.shape != hi.shape:
        raise ValueError("hi, hj and w must share one shape")
    return float(-np.sum(w * np.abs(hi - hj)))


def embed_l1_as_gatv2(w, beta):
    """Exact GATv2 parameters (W, q) reproducing the weighted l1 logit.

    W stacks [[D_w, -D_w], [-D_w, D_w]] and q = -1/(1-beta) * ones, so that
    LeakyReLU(t) + LeakyReLU(-t) = (1-beta)|t| turns the scored pair into
    -sum_l w_l |hi_l - hj_l| for every input pair.
    """
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0, 1)")
    w = np.asarray(w, dtype=np.float64)
    if np.any(w <= 0):
        raise ValueError("weights must be strictly positive")
    d = w.size
    D = np.diag(w)
    W = np.block([[D, -D], [-D, D]])
    q = np.full(2 * d, -1.0 / (1.0 - beta))
    return W, q


def gate_values(h, Wg, bg):
    """sigmoid(h @ Wg + bg) rowwise; entries strictly inside (0, 1).

    Column convention: Wg maps input width to gate width, one gate row per
    node, independent across nodes.
    """
    h = np.asarray(h, dtype=np.float64)
    Wg = np.asarray(Wg, dtype=np.float64)
    bg = np.asarray(bg, dtype=np.float64)
    if h.ndim != 2 or Wg.ndim != 2 or h.shape[1] != Wg.shape[0]:
        raise ValueError("gate shapes do not match")
    if bg.shape != (Wg.shape[1],):
        raise ValueError("gate bias must match the gate width")
    z = h @ Wg + bg
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


# ---------------------------------------------------------------------------
# Parameters and the tape-based layer
# ---------------------------------------------------------------------------


@dataclass
class LayerParams:
    """Learnable tensors of one layer; absent mechanisms hold None."""

    W: ad.Tensor
    a_dst: ad.Tensor = None  # GAT attention vector halves, (heads, d_head)
    a_src: ad.Tensor = None
    att_dst: ad.Tensor = None  # GATv2 scoring blocks, (d_in, heads*d_head)
    att_src: ad.Tensor = None
    q: ad.Tensor = None  # GATv2 scoring vector, (heads, d_head)
    theta: ad.Tensor = None  # temperature pre-parameter, scalar
    Wg: ad.Tensor = None  # gate projection, (d_in, heads*d_head)
    bg: ad.Tensor = None  # gate bias, (heads*d_head,)

    def tensors(self):
        named = [self.W, self.a_dst, self.a_src, self.att_dst, self.att_src,
                 self.q, self.theta, self.Wg, self.bg]
        return [t for t in named if t is not None]

    def temperature_value(self):
        if self.theta is None:
            return None
        return float(np.logaddexp(0.0, self.theta.data) + TEMP_EPS)


def _xavier(rng, fan_in, fan_out, shape):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_layer_params(spec, d_in, d_head, rng):
    """Xavier-uniform weights, zero gate bias, theta chosen so T starts at 1."""
    h = spec.heads
    if spec.backbone == "GCN":
        return LayerParams(W=ad.param(_xavier(rng, d_in, d_head, (d_in, d_head))))
    wide = h * d_head
    p = LayerParams(W=ad.param(_xavier(rng, d_in, d_head, (d_in, wide))))
    if spec.backbone == "GAT":
        p.a_dst = ad.param(_xavier(rng, d_head, 1, (h, d_head)))
        p.a_src = ad.param(_xavier(rng, d_head, 1, (h, d_head)))
    else:
        p.att_dst = ad.param(_xavier(rng, d_in, d_head, (d_in, wide)))
        p.att_src = ad.param(_xavier(rng, d_in, d_head, (d_in, wide)))
        p.q = ad.param(_xavier(rng, d_head, 1, (h, d_head)))
    if spec.gate != "off":
        p.Wg = ad.param(_xavier(rng, d_in, wide, (d_in, wide)))
        p.bg = ad.param(np.zeros(wide))
    if spec.temperature == "learnable":
        p.theta = ad.param(np.log(np.expm1(1.0 - TEMP_EPS)))
    return p


class EdgeCache:
    """Precomputed edge arrays for one graph: endpoints, CSR offsets, and
    the symmetric GCN normalization coefficients."""

    def __init__(self, graph):
        if np.any(graph.degrees == 0):
            raise ValueError("empty neighborhood: add self-loops first")
        self.num_nodes = graph.num_nodes
        self.src, self.dst = graph.edge_endpoints()
        self.offsets = graph.row_offsets
        deg = graph.degrees.astype(np.float64)
        self.gcn_coeff = 1.0 / np.sqrt(deg[self.src] * deg[self.dst])
        self.src_plan = ad.ScatterPlan(self.src, self.num_nodes)
        self.dst_plan = ad.ScatterPlan(self.dst, self.num_nodes)
        self.dst_index = ad.SegmentIndex(self.dst, self.num_nodes)


def _as_cache(graph_or_cache):
    if isinstance(graph_or_cache, EdgeCache):
        return graph_or_cache
    if isinstance(graph_or_cache, Graph):
        return EdgeCache(graph_or_cache)
    raise TypeError("expected a Graph or EdgeCache")


def layer_forward(spec, params, graph, H, combine="concat", training=False, rng=None):
    """One layer's output under the configured variant; rows follow the
    backbone equation with temperature/gate modifications applied."""
    out, _, _ = layer_apply(spec, params, graph, H, combine=combine,
                            training=training, rng=rng)
    return out


def layer_apply(spec, params, graph, H, combine="concat", training=False, rng=None):
    """Like layer_forward but also returns (gate values, temperature)."""
    cache = _as_cache(graph)
    if combine not in ("concat", "mean"):
        raise ValueError("combine must be 'concat' or 'mean'")
    n, h = cache.num_nodes, spec.heads

    if spec.backbone == "GCN":
        proj = ad.matmul(H, params.W)
        msg = ad.mul(ad.gather_rows(proj, cache.src, plan=cache.src_plan),
                     ad.constant(cache.gcn_coeff[:, None]))
        out = ad.segment_sum(msg, cache.dst, n, index=cache.dst_index)
        return out, None, None

    wh_flat = ad.matmul(H, params.W)
    dh = wh_flat.shape[1] // h
    wh = ad.reshape(wh_flat, (n, h, dh))

    gate_t = None
    g3 = None
    if spec.gate != "off":
        glin = ad.add(ad.matmul(H, params.Wg), ad.reshape(params.bg, (1, h * dh)))
        gate_t = ad.sigmoid(glin)
        g3 = ad.reshape(gate_t, (n, h, dh))

    source = ad.mul(wh, g3) if spec.gate == "gate_first" else wh

    if spec.backbone == "GAT":
        s_dst = ad.summ(ad.mul(source, ad.reshape(params.a_dst, (1, h, dh))), axis=2)
        s_src = ad.summ(ad.mul(source, ad.reshape(params.a_src, (1, h, dh))), axis=2)
        e = ad.leaky_relu(
            ad.add(
                ad.gather_rows(s_dst, cache.dst, plan=cache.dst_plan),
                ad.gather_rows(s_src, cache.src, plan=cache.src_plan),
            ),
            spec.leaky_slope,
        )
    else:
        u = ad.reshape(ad.matmul(H, params.att_dst), (n, h, dh))
        v = ad.reshape(ad.matmul(H, params.att_src), (n, h, dh))
        if spec.gate == "gate_first":
            u = ad.mul(u, g3)
            v = ad.mul(v, g3)
        pre = ad.leaky_relu(
            ad.add(
                ad.gather_rows(u, cache.dst, plan=cache.dst_plan),
                ad.gather_rows(v, cache.src, plan=cache.src_plan),
            ),
            spec.leaky_slope,
        )
        e = ad.summ(ad.mul(pre, ad.reshape(params.q, (1, h, dh))), axis=2)

    temp_t = None
    if spec.temperature == "learnable":
        temp_t = ad.add(ad.softplus(params.theta), TEMP_EPS)
        alpha = ad.segment_softmax(e, cache.dst, temperature=temp_t,
                                   index=cache.dst_index)
    else:
        alpha = ad.segment_softmax(e, cache.dst, index=cache.dst_index)

    if training and spec.dropout > 0:
        alpha = ad.dropout(alpha, spec.dropout, rng)

    msgs = ad.gather_rows(source, cache.src, plan=cache.src_plan)
    weighted = ad.mul(msgs, ad.reshape(alpha, (-1, h, 1)))
    agg = ad.segment_sum(weighted, cache.dst, n, index=cache.dst_index)

    if spec.gate == "post":
        agg = ad.mul(agg, g3)

    if combine == "concat":
        out = ad.reshape(agg, (n, h * dh))
    else:
        out = ad.reduce_mean(agg, axis=1)
    return out, gate_t, temp_t


def parameter_count(spec):
    """Total learnable scalars; temperature adds 1 per layer, a gate adds
    projected_dim * d_in + projected_dim per layer over the plain backbone."""
    total = 0
    for d_in, dh in spec.layer_dims():
        if spec.backbone == "GCN":
            total += d_in * dh
            continue
        wide = spec.heads * dh
        total += d_in * wide
        if spec.backbone == "GAT":
            total += 2 * wide
        else:
            total += 2 * d_in * wide + wide
        if spec.gate != "off":
            total += d_in * wide + wide
        if spec.temperature == "learnable":
            total += 1
    return total


class AttentionModel:
    """A stack of layers for one spec; owns parameters and the forward pass."""

    def __init__(self, spec, seed=0):
        self.spec = spec
        rng = np.random.default_rng(seed)
        self.layers = [
            init_layer_params(spec, d_in, dh, rng) for d_in, dh in spec.layer_dims()
        ]

    def parameters(self):
        return [t for lp in self.layers for t in lp.tensors()]

    def num_parameters(self):
        return sum(t.data.size for t in self.parameters())

    def forward(self, graph, X, training=False, rng=None):
        """Full forward pass: returns (logits, per-layer gates, per-layer T).

        X may be a Tensor, ndarray, or scipy sparse matrix (held constant).
        Dropout (training only) hits every layer input and the attention
        coefficients, at the spec's single rate.
        """
        cache = _as_cache(graph)
        spec = self.spec
        hidden_act = ad.relu if spec.backbone == "GCN" else ad.elu
        H = X
        gates, temps = [], []
        for i, lp in enumerate(self.layers):
            last = i == len(self.layers) - 1
            if training and spec.dropout > 0:
                H = _dropout_any(H, spec.dropout, rng)
            combine = "mean" if last else "concat"
            H, gate_t, temp_t = layer_apply(
                spec, lp, cache, H, combine=combine, training=training, rng=rng
            )
            gates.append(gate_t)
            temps.append(temp_t)
            if not last:
                H = hidden_act(H)
        return H, gates, temps

    def layer_temperatures(self):
        return [lp.temperature_value() for lp in self.layers]


def _dropout_any(X, rate, rng):
    """Dropout on a Tensor, ndarray, or scipy sparse constant."""
    if isinstance(X, ad.Tensor):
        return ad.dropout(X, rate, rng)
    mask = (rng.random(X.shape) >= rate) / (1.0 - rate)
    if hasattr(X, "multiply"):  # scipy sparse
        return X.multiply(mask).tocsr()
    return np.asarray(X) * mask
