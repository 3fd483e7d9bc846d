"""Grouped graph-attention head that turns an encoder latent into coefficients.

Stages, all sharing the same code path for every grouping mode:

1. per-mode MLPs lift the latent into node features H; one GAT layer runs
   over fully connected intra-group edges (with self-loops) to give H_hat;
2. each group gets a proxy initialised as the mean of its *original* member
   features, refined by directed member -> proxy attention over H_hat;
   a singleton group's proxy is its member's H_hat row;
3. one GAT layer over the fully connected proxy graph;
4. each member attends over {its group's proxy, itself} and a per-mode MLP
   maps the result to one coefficient.

GAT parameters are shared across groups within a stage.  A leaky-ReLU is
applied to every stage output; the attention layer itself is linear.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np

from . import zernike
from .autodiff import Tensor, ops
from .errors import ConfigError, ShapeError, TopologyError

ATTENTION_SLOPE = 0.2
HIDDEN_SLOPE = 0.1
STAGES = ("intra", "agg", "global", "feedback")

Edge = Tuple[int, int]  # (sender, receiver)


@dataclass(frozen=True)
class GraphConfig:
    grouping: str = "azimuthal"
    width: int = 64

    def __post_init__(self):
        if self.grouping not in zernike.GROUPING_MODES:
            raise ConfigError(f"grouping must be one of {zernike.GROUPING_MODES}, got {self.grouping!r}")
        if self.width < 2 or self.width % 2:
            raise ConfigError(f"node width must be an even integer >= 2, got {self.width}")

    def to_dict(self) -> dict:
        return {"grouping": self.grouping, "width": self.width}


@dataclass(frozen=True)
class GatParams:
    W: Tensor  # (d, d)
    a: Tensor  # (2d,): sender half then receiver half


@dataclass(frozen=True)
class GraphTopology:
    """Edge sets over node positions 0..24 (ANSI 3..27) and group indices.

    ``feedback_edges`` lists (group, member) pairs; every member additionally
    attends to itself in stage 4.
    """

    grouping: zernike.GroupingTable
    member_group: Tuple[int, ...]
    singleton: Tuple[bool, ...]
    intra_edges: Tuple[Edge, ...]
    agg_edges: Tuple[Edge, ...]
    global_edges: Tuple[Edge, ...]
    feedback_edges: Tuple[Edge, ...]

    @property
    def n_nodes(self) -> int:
        return zernike.N_MODES

    @property
    def n_groups(self) -> int:
        return len(self.grouping.groups)


def build_topology(table: zernike.GroupingTable) -> GraphTopology:
    pos = {j: i for i, j in enumerate(zernike.MODE_INDICES)}
    seen = [j for g in table.groups for j in g.members]
    if sorted(seen) != list(zernike.MODE_INDICES):
        raise TopologyError("grouping must cover ANSI modes 3..27 exactly once")
    member_group = [0] * zernike.N_MODES
    intra, agg, feedback = [], [], []
    singleton = []
    for g, group in enumerate(table.groups):
        nodes = [pos[j] for j in group.members]
        singleton.append(len(nodes) == 1)
        for v in nodes:
            member_group[v] = g
            feedback.append((g, v))
            for u in nodes:
                intra.append((u, v))
            if len(nodes) > 1:
                agg.append((v, g))
    n_groups = len(table.groups)
    global_edges = [(u, v) for v in range(n_groups) for u in range(n_groups)]
    return GraphTopology(table, tuple(member_group), tuple(singleton), tuple(intra), tuple(agg),
                         tuple(global_edges), tuple(feedback))


def edge_mask(edges: Iterable[Edge], n_send: int, n_recv: int) -> np.ndarray:
    """Boolean (receivers, senders) adjacency."""
    mask = np.zeros((n_recv, n_send), dtype=bool)
    for u, v in edges:
        mask[v, u] = True
    return mask


def gat_attend(senders: Tensor, receivers: Tensor, mask: np.ndarray, params: GatParams,
               return_attention: bool = False):
    """Single-head attention of each receiver over its masked senders.

    senders: (B, Ns, d), receivers: (B, Nr, d), mask: (Nr, Ns).
    """
    if mask.shape != (receivers.shape[-2], senders.shape[-2]):
        raise ShapeError(f"mask shape {mask.shape} does not match {receivers.shape[-2]} x {senders.shape[-2]}")
    empty = ~mask.any(axis=1)
    if empty.any():
        raise TopologyError(f"receivers {np.flatnonzero(empty).tolist()} have no incoming edges")
    d = params.W.shape[0]
    wt = ops.transpose(params.W)
    ws = ops.matmul(senders, wt)
    wr = ws if receivers is senders else ops.matmul(receivers, wt)
    a_src = ops.reshape(params.a[:d], (d, 1))
    a_dst = ops.reshape(params.a[d:], (d, 1))
    score_src = ops.matmul(ws, a_src)  # (B, Ns, 1)
    score_dst = ops.matmul(wr, a_dst)  # (B, Nr, 1)
    logits = ops.leaky_relu(score_dst + ops.transpose(score_src, (0, 2, 1)), ATTENTION_SLOPE)
    alpha = ops.softmax(logits, axis=-1, mask=mask)
    out = ops.matmul(alpha, ws)
    return (out, alpha) if return_attention else out


def gat_layer(features, edges: Sequence[Edge], params: GatParams, receivers=None,
              return_attention: bool = False):
    """GAT over an explicit edge list.

    ``features`` holds sender rows (B, Ns, d) or (Ns, d); ``receivers`` defaults
    to the same rows.  Each edge (u, v) lets receiver v attend to sender u.
    """
    feats = ops.as_tensor(features)
    squeeze = feats.ndim == 2
    if squeeze:
        feats = ops.reshape(feats, (1,) + feats.shape)
    recv = feats
    if receivers is not None:
        recv = ops.as_tensor(receivers)
        if recv.ndim == 2:
            recv = ops.reshape(recv, (1,) + recv.shape)
    mask = edge_mask(edges, feats.shape[-2], recv.shape[-2])
    result = gat_attend(feats, recv, mask, params, return_attention=True)
    out, alpha = result
    if squeeze:
        out = ops.reshape(out, out.shape[1:])
        alpha = ops.reshape(alpha, alpha.shape[1:])
    return (out, alpha) if return_attention else out


def param_shapes(latent_dim: int, width: int) -> Dict[str, tuple]:
    n, d = zernike.N_MODES, width
    shapes = {
        "zgraph.init.w1": (n, latent_dim, d),
        "zgraph.init.b1": (n, d),
        "zgraph.init.w2": (n, d, d),
        "zgraph.init.b2": (n, d),
        "zgraph.pre_head.w": (n, d),
        "zgraph.pre_head.b": (n,),
    }
    for stage in STAGES:
        shapes[f"zgraph.gat_{stage}.W"] = (d, d)
        shapes[f"zgraph.gat_{stage}.a"] = (2 * d,)
    shapes.update({
        "zgraph.out.w1": (n, d, d // 2),
        "zgraph.out.b1": (n, d // 2),
        "zgraph.out.w2": (n, d // 2),
        "zgraph.out.b2": (n,),
    })
    return shapes


def init_zgraph(latent_dim: int, width: int, rng: np.random.Generator) -> Dict[str, np.ndarray]:
    params = {}
    for name, shape in param_shapes(latent_dim, width).items():
        if name.endswith((".b1", ".b2", ".b")):
            params[name] = np.zeros(shape)
            continue
        if name.endswith(".a"):
            fan_in = shape[0] // 2
        elif name.endswith(".W"):
            fan_in = shape[1]
        elif name.endswith(("pre_head.w", "out.w2")):
            fan_in = shape[-1]
        else:
            fan_in = shape[-2]
        bound = np.sqrt(6.0 / fan_in)
        params[name] = rng.uniform(-bound, bound, size=shape)
    return params


def _gat(params: Dict[str, Tensor], stage: str) -> GatParams:
    return GatParams(params[f"zgraph.gat_{stage}.W"], params[f"zgraph.gat_{stage}.a"])


def node_features(latent: Tensor, params: Dict[str, Tensor]) -> Tensor:
    """Stage-1 per-mode MLPs: (B, latent_dim) -> (B, 25, d)."""
    latent = ops.as_tensor(latent)
    if latent.ndim != 2 or latent.shape[1] != params["zgraph.init.w1"].shape[1]:
        raise ShapeError(f"latent shape {latent.shape} does not match init MLP input "
                         f"{params['zgraph.init.w1'].shape[1]}")
    hidden = ops.einsum("bl,nld->bnd", latent, params["zgraph.init.w1"]) + params["zgraph.init.b1"]
    hidden = ops.leaky_relu(hidden, HIDDEN_SLOPE)
    return ops.einsum("bnd,nde->bne", hidden, params["zgraph.init.w2"]) + params["zgraph.init.b2"]


def direct_head(latent: Tensor, params: Dict[str, Tensor]) -> Tensor:
    """Graph-free prediction used while pretraining: a linear read-out per mode."""
    h = node_features(latent, params)
    return ops.einsum("bnd,nd->bn", h, params["zgraph.pre_head.w"]) + params["zgraph.pre_head.b"]


def proxy_init(h: Tensor, topology: GraphTopology) -> Tensor:
    """Mean of each group's original member features: (B, G, d)."""
    avg = np.zeros((topology.n_groups, topology.n_nodes))
    for v, g in enumerate(topology.member_group):
        avg[g, v] = 1.0
    avg /= avg.sum(axis=1, keepdims=True)
    return ops.einsum("gn,bnd->bgd", avg, h)


def zgraph_forward(latent, params: Dict[str, Tensor], topology: GraphTopology,
                   trace: Optional[dict] = None) -> Tensor:
    """Predict (B, 25) coefficients in ANSI order 3..27.

    When ``trace`` is a dict it receives the intermediate node features and,
    under ``"attention"``, each stage's (B, receivers, senders) weights.
    """
    n, n_groups = topology.n_nodes, topology.n_groups

    attention = {}

    def attend(stage, senders, receivers, mask):
        out, attention[stage] = gat_attend(senders, receivers, mask, _gat(params, stage), return_attention=True)
        return ops.leaky_relu(out, HIDDEN_SLOPE)

    h = node_features(latent, params)
    h_hat = attend("intra", h, h, edge_mask(topology.intra_edges, n, n))

    p0 = proxy_init(h, topology)
    multi = [g for g in range(n_groups) if not topology.singleton[g]]
    parts, index = [], np.zeros(n_groups, dtype=np.intp)
    if multi:
        remap = {g: i for i, g in enumerate(multi)}
        agg_mask = edge_mask([(u, remap[v]) for u, v in topology.agg_edges], n, len(multi))
        receivers = ops.take(p0, multi, axis=1)
        parts.append(attend("agg", h_hat, receivers, agg_mask))
    parts.append(h_hat)
    for g in range(n_groups):
        if topology.singleton[g]:
            (member,) = [v for v, gv in enumerate(topology.member_group) if gv == g]
            index[g] = len(multi) + member
        else:
            index[g] = multi.index(g)
    proxies = ops.take(ops.concat(parts, axis=1), index, axis=1)

    p_hat = attend("global", proxies, proxies, edge_mask(topology.global_edges, n_groups, n_groups))

    fb_edges = [(g, v) for g, v in topology.feedback_edges] + [(n_groups + v, v) for v in range(n)]
    fb_mask = edge_mask(fb_edges, n_groups + n, n)
    senders = ops.concat([p_hat, h_hat], axis=1)
    refined = attend("feedback", senders, h_hat, fb_mask)

    hidden = ops.einsum("bnd,nde->bne", refined, params["zgraph.out.w1"]) + params["zgraph.out.b1"]
    hidden = ops.leaky_relu(hidden, HIDDEN_SLOPE)
    coeffs = ops.einsum("bne,ne->bn", hidden, params["zgraph.out.w2"]) + params["zgraph.out.b2"]

    if trace is not None:
        trace.update(h=h, h_hat=h_hat, p0=p0, proxies=proxies, p_hat=p_hat, refined=refined,
                     attention=attention)
    return coeffs
