"""Heterogeneous two-layer GraphSAGE link classifier with manual backprop.

Per node type the input encoder sums a learned per-node embedding with a
linear transform of the raw features. Each conv layer then computes, for
every node v of type t,

    out[v] = sum over relations r into t of
             W_self(r) . h[v]  +  W_neigh(r) . mean of h[u] over sampled
                                   in-neighbors u of v under r

with a weighted mean when the relation carries edge weights (watch
fraction, final grade) and a zero vector for empty neighborhoods. ReLU sits
between the two conv layers, none after the last. Student-page logits are
plain dot products of the final representations.

Every forward has a matching hand-written backward; the test suite holds
the whole composition to central finite differences. Supervision edges are
rejected from message passing outright (label-leakage guard).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, LeakageError, ShapeError, StaleCache
from .graph import Hkg, NODE_TYPES, PAGE, REL_PASSES, STUDENT
from .split import DirectedRelation, LinkBatch, SparseAgg, Subgraph
from .tensor import Matrix, Parameter, RngStream, glorot_init, relu, relu_backward


@dataclass(frozen=True)
class ModelConfig:
    hidden_dim: int = 64
    out_dim: int = 4
    embed_dim: int = 64
    num_layers: int = 2
    use_edge_weights: bool = True
    embed_dims: dict | None = None

    def embed_for(self, node_type: str) -> int:
        if self.embed_dims and node_type in self.embed_dims:
            return int(self.embed_dims[node_type])
        return self.embed_dim

    def validate(self) -> None:
        dims = [self.hidden_dim, self.out_dim, self.embed_dim]
        if self.embed_dims:
            dims.extend(self.embed_dims.values())
        if any(int(d) < 1 for d in dims):
            raise ConfigError(f"all model dims must be >= 1, got {self}")
        if self.num_layers < 1:
            raise ConfigError("num_layers must be >= 1")

    def to_dict(self) -> dict:
        return {
            "hidden_dim": self.hidden_dim,
            "out_dim": self.out_dim,
            "embed_dim": self.embed_dim,
            "num_layers": self.num_layers,
            "use_edge_weights": self.use_edge_weights,
            "embed_dims": self.embed_dims,
        }


@dataclass
class RelationWeights:
    w_self: Parameter
    w_neigh: Parameter


class HeteroSageModel:
    """Parameter container plus the type/relation layout it was built for."""

    def __init__(
        self,
        cfg: ModelConfig,
        node_counts: dict[str, int],
        feat_dims: dict[str, int],
        relations: tuple[DirectedRelation, ...],
        seed: int,
        init: bool = True,
    ):
        cfg.validate()
        self.cfg = cfg
        self.node_counts = dict(node_counts)
        self.feat_dims = dict(feat_dims)
        self.relations = tuple(relations)
        self.seed = seed
        self.types = [t for t in NODE_TYPES if node_counts.get(t, 0) > 0]
        rng = RngStream(seed)

        def make(name: str, rows: int, cols: int) -> Parameter:
            if init:
                return Parameter(glorot_init(rows, cols, rng.derive("param", name)), name)
            return Parameter(np.zeros((rows, cols)), name)

        self.embeddings = {
            t: make(f"embed.{t}", node_counts[t], cfg.embed_for(t)) for t in self.types
        }
        self.transforms = {
            t: make(f"transform.{t}", feat_dims[t], cfg.embed_for(t)) for t in self.types
        }
        self.layers: list[dict[str, RelationWeights]] = []
        for i in range(cfg.num_layers):
            out_dim = cfg.hidden_dim if i < cfg.num_layers - 1 else cfg.out_dim
            layer: dict[str, RelationWeights] = {}
            for rel in self.relations:
                in_dst = cfg.embed_for(rel.dst_type) if i == 0 else cfg.hidden_dim
                in_src = cfg.embed_for(rel.src_type) if i == 0 else cfg.hidden_dim
                layer[rel.name] = RelationWeights(
                    make(f"layer{i}.{rel.name}.self", in_dst, out_dim),
                    make(f"layer{i}.{rel.name}.neigh", in_src, out_dim),
                )
            self.layers.append(layer)

    def parameters(self) -> list[Parameter]:
        params = [self.embeddings[t] for t in self.types]
        params += [self.transforms[t] for t in self.types]
        for layer in self.layers:
            for rel in self.relations:
                params.append(layer[rel.name].w_self)
                params.append(layer[rel.name].w_neigh)
        return params

    def zero_grads(self) -> None:
        for p in self.parameters():
            p.zero_grad()


def init_model(cfg: ModelConfig, hkg: Hkg, seed: int) -> HeteroSageModel:
    """Glorot-initialized model sized for the graph; deterministic per seed.

    Relations with no edges in the graph (and node types with no nodes) are
    omitted, including their reverses.
    """
    from .split import MessageGraph

    mg = MessageGraph(hkg, use_edge_weights=cfg.use_edge_weights)
    node_counts = {t: hkg.node_count(t) for t in NODE_TYPES}
    feat_dims = {t: hkg.features[t].dim for t in NODE_TYPES}
    return HeteroSageModel(cfg, node_counts, feat_dims, mg.relations, seed)


# One aggregation use inside a forward pass: the (cached) sparse operator
# plus the mean matrix it produced, kept for the weight gradient.
@dataclass
class _AggUse:
    op: SparseAgg
    mean: Matrix


@dataclass
class EncodeCache:
    model: HeteroSageModel
    subgraph: Subgraph
    inputs: list[dict[str, Matrix]] = field(default_factory=list)
    pre: list[dict[str, Matrix]] = field(default_factory=list)
    aggs: list[dict[str, _AggUse]] = field(default_factory=list)
    reps: dict[str, Matrix] = field(default_factory=dict)
    seed_students: np.ndarray | None = None
    seed_pages: np.ndarray | None = None
    consumed: bool = False


def _check_no_leakage(subgraph: Subgraph) -> None:
    for name in subgraph.edges:
        base = name[4:] if name.startswith("rev_") else name
        if base == REL_PASSES:
            raise LeakageError("supervision edges present in message-passing set")


def encode(
    model: HeteroSageModel, subgraph: Subgraph, want_cache: bool = False
) -> dict[str, Matrix] | tuple[dict[str, Matrix], EncodeCache]:
    """Run the input encoder and all conv layers over a subgraph.

    Returns final representations per node type, covering the level-0
    prefix of each type (for a full graph, every node). Layer k is only
    evaluated for nodes still able to influence the level-0 outputs.
    """
    _check_no_leakage(subgraph)
    cache = EncodeCache(model, subgraph)
    num_layers = model.cfg.num_layers

    h: dict[str, Matrix] = {}
    for t in model.types:
        nodes = subgraph.nodes.get(t)
        if nodes is None:
            continue
        h[t] = model.embeddings[t].value[nodes] + subgraph.features[t] @ model.transforms[t].value

    for i in range(num_layers):
        cache.inputs.append(h)
        cache.aggs.append({})
        level = num_layers - 1 - i
        out: dict[str, Matrix] = {}
        out_dim = model.cfg.hidden_dim if i < num_layers - 1 else model.cfg.out_dim
        for t in h:
            bound = subgraph.prefix(t, level)
            out[t] = np.zeros((bound, out_dim))
        for rel in model.relations:
            if rel.dst_type not in h or rel.src_type not in h:
                continue
            bound = out[rel.dst_type].shape[0]
            if bound == 0:
                continue
            weights = model.layers[i][rel.name]
            out[rel.dst_type] += h[rel.dst_type][:bound] @ weights.w_self.value
            h_src = h[rel.src_type]
            op = subgraph.aggregator(rel.name, bound, h_src.shape[0])
            if op is None:
                continue
            mean = op.matrix @ h_src
            out[rel.dst_type] += mean @ weights.w_neigh.value
            cache.aggs[i][rel.name] = _AggUse(op, mean)
        cache.pre.append(out)
        if i < num_layers - 1:
            h = {t: relu(m) for t, m in out.items()}
        else:
            h = out

    for t, reps in h.items():
        if not np.all(np.isfinite(reps)):
            raise ShapeError(f"non-finite representations for type {t}")
    cache.reps = h
    if want_cache:
        return h, cache
    return h


def decode(student_repr: Matrix, page_repr: Matrix) -> np.ndarray:
    """Per-edge logit: dot product of paired student and page rows."""
    if student_repr.shape != page_repr.shape:
        raise ShapeError(f"decode shape mismatch: {student_repr.shape} vs {page_repr.shape}")
    return np.einsum("ij,ij->i", student_repr, page_repr)


def forward_batch(model: HeteroSageModel, batch: LinkBatch) -> tuple[np.ndarray, EncodeCache]:
    """Encode the batch subgraph and decode its seed edges, caching
    activations for the backward pass."""
    reps, cache = encode(model, batch.subgraph, want_cache=True)
    cache.seed_students = batch.seed_students
    cache.seed_pages = batch.seed_pages
    logits = decode(reps[STUDENT][batch.seed_students], reps[PAGE][batch.seed_pages])
    return logits, cache


def backward(model: HeteroSageModel, cache: EncodeCache, d_logits: np.ndarray) -> None:
    """Accumulate gradients for every touched parameter.

    Reverses decode, both conv layers and the input encoder, reusing the
    cached activations. A cache can back exactly one backward pass for the
    model that produced it.
    """
    if cache.consumed or cache.model is not model:
        raise StaleCache("no matching forward pass for this backward call")
    if cache.seed_students is None:
        raise StaleCache("cache was built without seed edges")
    cache.consumed = True

    reps = cache.reps
    d_out: dict[str, Matrix] = {t: np.zeros_like(m) for t, m in reps.items()}
    hs = reps[STUDENT][cache.seed_students]
    hp = reps[PAGE][cache.seed_pages]
    np.add.at(d_out[STUDENT], cache.seed_students, d_logits[:, None] * hp)
    np.add.at(d_out[PAGE], cache.seed_pages, d_logits[:, None] * hs)

    num_layers = model.cfg.num_layers
    subgraph = cache.subgraph
    for i in reversed(range(num_layers)):
        if i < num_layers - 1:
            d_pre = {t: relu_backward(cache.pre[i][t], d_out[t]) for t in d_out}
        else:
            d_pre = d_out
        h_in = cache.inputs[i]
        d_in: dict[str, Matrix] = {t: np.zeros_like(m) for t, m in h_in.items()}
        for rel in model.relations:
            if rel.dst_type not in d_pre or rel.src_type not in h_in:
                continue
            grad_out = d_pre[rel.dst_type]
            bound = grad_out.shape[0]
            if bound == 0:
                continue
            weights = model.layers[i][rel.name]
            h_dst = h_in[rel.dst_type][:bound]
            weights.w_self.grad += h_dst.T @ grad_out
            d_in[rel.dst_type][:bound] += grad_out @ weights.w_self.value.T
            use = cache.aggs[i].get(rel.name)
            if use is None:
                continue
            weights.w_neigh.grad += use.mean.T @ grad_out
            d_mean = grad_out @ weights.w_neigh.value.T
            d_in[rel.src_type] += use.op.transpose @ d_mean
        d_out = d_in

    for t, grad in d_out.items():
        nodes = subgraph.nodes[t]
        model.embeddings[t].grad[nodes] += grad
        model.transforms[t].grad += subgraph.features[t].T @ grad


CHECKPOINT_MAGIC = b"HKGMODL1"


def save_model(model: HeteroSageModel, path) -> None:
    """Checkpoint: magic, u32 JSON header length, header, float64 blobs in
    parameter registry order."""
    header = {
        "config": model.cfg.to_dict(),
        "node_counts": model.node_counts,
        "feat_dims": model.feat_dims,
        "relations": [[r.name, r.src_type, r.dst_type] for r in model.relations],
        "seed": model.seed,
        "params": [{"name": p.name, "shape": list(p.shape)} for p in model.parameters()],
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as handle:
        handle.write(CHECKPOINT_MAGIC)
        handle.write(struct.pack("<I", len(head)))
        handle.write(head)
        for p in model.parameters():
            handle.write(p.value.astype("<f8").tobytes())


def load_model(path) -> HeteroSageModel:
    with open(path, "rb") as handle:
        blob = handle.read()
    if blob[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise ConfigError("not a model checkpoint (bad magic)")
    head_len = struct.unpack_from("<I", blob, len(CHECKPOINT_MAGIC))[0]
    offset = len(CHECKPOINT_MAGIC) + 4
    header = json.loads(blob[offset : offset + head_len].decode("utf-8"))
    offset += head_len
    cfg_dict = dict(header["config"])
    cfg = ModelConfig(**cfg_dict)
    relations = tuple(DirectedRelation(*r) for r in header["relations"])
    model = HeteroSageModel(
        cfg, header["node_counts"], header["feat_dims"], relations, header["seed"], init=False
    )
    for p, spec in zip(model.parameters(), header["params"]):
        if p.name != spec["name"] or list(p.shape) != spec["shape"]:
            raise ConfigError(f"checkpoint layout mismatch at {spec['name']}")
        flat = np.frombuffer(blob, dtype="<f8", count=p.value.size, offset=offset).copy()
        offset += flat.nbytes
        p.value[:] = flat.reshape(p.shape)
    return model
