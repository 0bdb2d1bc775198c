"""Supervision-edge splitting and mini-batch neighborhood sampling.

The 80/10/10 partition shuffles supervision edges with a seeded generator
and slices contiguously, so a seed fully determines the split. Batches are
built breadth-first from the seed edge endpoints: at hop k every frontier
node samples up to fanout[k] in-neighbors per message-passing relation,
without replacement. Supervision edges never enter the sampled
message-passing set. Reverse relations are materialized so information
flows both directions.

Nodes in a batch are ordered by discovery level (seeds first), which lets
the encoder run layer k only over the prefix of nodes whose
representations that layer can still influence.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, TooFewEdges
from .graph import (
    Hkg,
    MESSAGE_RELATIONS,
    RELATION_SCHEMA,
    REL_ATTEMPTS,
    REL_PASSES,
    REL_WATCHES,
)
from .tensor import RngStream

REVERSE_PREFIX = "rev_"


@dataclass(frozen=True)
class DirectedRelation:
    name: str
    src_type: str
    dst_type: str


@dataclass(frozen=True)
class LinkSplit:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    seed: int
    mode: str = "edge"


def random_link_split(
    hkg: Hkg,
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
    by_user: bool = False,
) -> LinkSplit:
    """Deterministic train/val/test partition of the supervision edges.

    Edge mode (default) shuffles edge indices and slices at floor(r0*n) and
    floor(r1*n). User mode keeps each student's edges in one part, filling
    parts in shuffled-user order until their edge quotas are reached.
    """
    n = len(hkg.supervision)
    if n < 10:
        raise TooFewEdges(f"need at least 10 supervision edges, have {n}")
    if abs(sum(ratios) - 1.0) > 1e-9 or any(r < 0 for r in ratios):
        raise ConfigError(f"ratios must be nonnegative and sum to 1, got {ratios}")
    n_train = int(ratios[0] * n)
    n_val = int(ratios[1] * n)
    rng = RngStream(seed).derive("link_split")
    if not by_user:
        order = rng.permutation(n)
        return LinkSplit(
            np.sort(order[:n_train]),
            np.sort(order[n_train : n_train + n_val]),
            np.sort(order[n_train + n_val :]),
            seed,
        )
    students = hkg.supervision.src
    users = np.unique(students)
    user_order = users[rng.permutation(len(users))]
    parts: list[list[np.ndarray]] = [[], [], []]
    quotas = [n_train, n_train + n_val]
    assigned = 0
    bucket = 0
    for user in user_order:
        edges = np.flatnonzero(students == user)
        while bucket < 2 and assigned >= quotas[bucket]:
            bucket += 1
        parts[bucket].append(edges)
        assigned += len(edges)
    packed = [np.sort(np.concatenate(p)) if p else np.empty(0, dtype=np.int64) for p in parts]
    return LinkSplit(packed[0], packed[1], packed[2], seed, mode="user")


@dataclass
class EdgeArrays:
    """One relation's edges inside a subgraph, sorted by destination."""

    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray


class SparseAgg:
    """Row-normalized weighted-mean operator built from one edge list.

    ``matrix @ h_src`` yields the per-destination weighted mean of source
    rows (zero rows where the weights sum to zero); the cached transpose
    routes gradients back to sources.
    """

    def __init__(self, src, dst, weight, n_dst: int, n_src: int):
        wsum = np.bincount(dst, weights=weight, minlength=n_dst)
        denom = wsum[dst]
        scale = np.divide(weight, denom, out=np.zeros_like(weight), where=denom != 0)
        indptr = np.zeros(n_dst + 1, dtype=np.int64)
        np.cumsum(np.bincount(dst, minlength=n_dst), out=indptr[1:])
        self.matrix = sp.csr_matrix((scale, src, indptr), shape=(n_dst, n_src))
        self._transpose: sp.csr_matrix | None = None

    @property
    def transpose(self) -> sp.csr_matrix:
        if self._transpose is None:
            self._transpose = self.matrix.T.tocsr()
        return self._transpose


@dataclass
class Subgraph:
    """Sampled (or full) message-passing neighborhood with level ordering.

    ``nodes[t]`` holds global node ids ordered by discovery level and
    ``bounds[t][k]`` is the number of nodes of type t at level <= k; the
    full graph stores a single bound (every node is level 0).
    """

    nodes: dict[str, np.ndarray]
    bounds: dict[str, list[int]]
    features: dict[str, np.ndarray]
    edges: dict[str, EdgeArrays]
    relations: tuple[DirectedRelation, ...]
    _aggs: dict = field(default_factory=dict, repr=False)

    def prefix(self, node_type: str, level: int) -> int:
        b = self.bounds[node_type]
        return b[min(level, len(b) - 1)]

    def count(self, node_type: str) -> int:
        return len(self.nodes[node_type])

    def aggregator(self, rel_name: str, bound: int, n_src_rows: int) -> SparseAgg | None:
        """Mean-aggregation operator over this relation's edges with
        destination below ``bound``; None when that prefix is empty.

        Operators are memoized; on the full graph they persist across
        every epoch and run that reuses the subgraph.
        """
        key = (rel_name, bound, n_src_rows)
        if key in self._aggs:
            return self._aggs[key]
        edges = self.edges.get(rel_name)
        agg = None
        if edges is not None and len(edges.dst):
            n_edges = int(np.searchsorted(edges.dst, bound, side="left"))
            if n_edges:
                agg = SparseAgg(
                    edges.src[:n_edges], edges.dst[:n_edges], edges.weight[:n_edges],
                    bound, n_src_rows,
                )
        self._aggs[key] = agg
        return agg


@dataclass
class LinkBatch:
    subgraph: Subgraph
    seed_students: np.ndarray
    seed_pages: np.ndarray
    labels: np.ndarray
    edge_indices: np.ndarray


class MessageGraph:
    """Per-relation in-neighbor adjacency over the message-passing edges.

    Includes the reverse of every base relation. Watch edges weight the
    mean aggregation by the watched fraction and attempt edges by the
    final grade; ``use_edge_weights=False`` reverts to plain means.
    """

    def __init__(self, hkg: Hkg, use_edge_weights: bool = True):
        self.hkg = hkg
        self.use_edge_weights = use_edge_weights
        self.relations: tuple[DirectedRelation, ...] = ()
        self._adj: dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
        self._full: Subgraph | None = None
        relations = []
        for name in MESSAGE_RELATIONS:
            table = hkg.edges.get(name)
            if table is None or len(table) == 0:
                continue
            src_t, dst_t, _, _ = RELATION_SCHEMA[name]
            if name == REL_WATCHES and use_edge_weights:
                weight = table.features[:, 0].copy()
            elif name == REL_ATTEMPTS and use_edge_weights:
                weight = table.features[:, 1].copy()
            else:
                weight = np.ones(len(table))
            relations.append(DirectedRelation(name, src_t, dst_t))
            self._index(name, table.src, table.dst, weight, hkg.node_count(dst_t))
            rev = DirectedRelation(REVERSE_PREFIX + name, dst_t, src_t)
            relations.append(rev)
            self._index(rev.name, table.dst, table.src, weight, hkg.node_count(src_t))
        self.relations = tuple(relations)

    def _index(self, name: str, src, dst, weight, n_dst: int) -> None:
        order = np.argsort(dst, kind="stable")
        counts = np.bincount(dst, minlength=n_dst)
        indptr = np.zeros(n_dst + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        self._adj[name] = (indptr, src[order].astype(np.int64), weight[order])

    def in_neighbors(self, relation: str, node: int) -> tuple[np.ndarray, np.ndarray]:
        indptr, src, weight = self._adj[relation]
        return src[indptr[node] : indptr[node + 1]], weight[indptr[node] : indptr[node + 1]]

    def full_subgraph(self) -> Subgraph:
        """The whole graph as a level-0 subgraph (used for exact eval)."""
        if self._full is None:
            nodes = {}
            bounds = {}
            features = {}
            edges = {}
            for t, table in self.hkg.features.items():
                n = self.hkg.node_count(t)
                nodes[t] = np.arange(n, dtype=np.int64)
                bounds[t] = [n]
                features[t] = table.rows
            for rel in self.relations:
                indptr, src, weight = self._adj[rel.name]
                dst = np.repeat(np.arange(len(indptr) - 1, dtype=np.int64), np.diff(indptr))
                edges[rel.name] = EdgeArrays(src.copy(), dst, weight.copy())
            self._full = Subgraph(nodes, bounds, features, edges, self.relations)
        return self._full


def _ranges(counts: np.ndarray) -> np.ndarray:
    """Concatenated [0..c-1) ramps, one per segment size in ``counts``."""
    offsets = np.cumsum(counts) - counts
    return np.arange(int(counts.sum())) - np.repeat(offsets, counts)


def _sample_in_edges(
    adj: tuple[np.ndarray, np.ndarray, np.ndarray],
    dst_nodes: np.ndarray,
    fanout: int,
    rng: RngStream,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sample up to ``fanout`` distinct in-edges for each destination node.

    Nodes at or under the fanout keep their whole neighborhood; the rest
    draw index tuples until distinct (uniform over subsets). Returns
    (src_global, dst_position, weight) grouped by destination in input
    order.
    """
    indptr, src, weight = adj
    starts = indptr[dst_nodes]
    degs = (indptr[dst_nodes + 1] - starts).astype(np.int64)
    if fanout <= 0 or int(degs.sum()) == 0:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty, np.empty(0)
    caps = np.minimum(degs, fanout)
    out_off = np.cumsum(caps) - caps
    sel = np.empty(int(caps.sum()), dtype=np.int64)

    full_rows = degs <= fanout
    if full_rows.any():
        idx = np.flatnonzero(full_rows)
        d = degs[idx]
        within = _ranges(d)
        sel[np.repeat(out_off[idx], d) + within] = np.repeat(starts[idx], d) + within

    if not full_rows.all():
        idx = np.flatnonzero(~full_rows)
        d = degs[idx]
        draws = np.floor(rng.random((len(idx), fanout)) * d[:, None]).astype(np.int64)
        for _ in range(64):
            ordered = np.sort(draws, axis=1)
            bad = (ordered[:, 1:] == ordered[:, :-1]).any(axis=1)
            if not bad.any():
                break
            draws[bad] = np.floor(
                rng.random((int(bad.sum()), fanout)) * d[bad, None]
            ).astype(np.int64)
        else:
            ordered = np.sort(draws, axis=1)
            for row in np.flatnonzero((ordered[:, 1:] == ordered[:, :-1]).any(axis=1)):
                draws[row] = rng.gen.choice(int(d[row]), size=fanout, replace=False)
        slots = out_off[idx, None] + np.arange(fanout)
        sel[slots.ravel()] = (starts[idx, None] + draws).ravel()

    owner = np.repeat(np.arange(len(dst_nodes)), caps)
    return src[sel], owner, weight[sel]


class _LocalIndex:
    """Global-to-local node numbering in discovery order, per type."""

    def __init__(self, hkg: Hkg):
        self._local = {t: np.full(hkg.node_count(t), -1, dtype=np.int64) for t in hkg.features}
        self.nodes: dict[str, list[np.ndarray]] = {t: [] for t in hkg.features}
        self.counts = {t: 0 for t in hkg.features}

    def add(self, node_type: str, globals_sorted: np.ndarray) -> np.ndarray:
        """Register unseen nodes (sorted globals); returns the new ones."""
        table = self._local[node_type]
        fresh = globals_sorted[table[globals_sorted] < 0]
        if len(fresh):
            table[fresh] = self.counts[node_type] + np.arange(len(fresh))
            self.counts[node_type] += len(fresh)
            self.nodes[node_type].append(fresh)
        return fresh

    def local(self, node_type: str, globals_: np.ndarray) -> np.ndarray:
        return self._local[node_type][globals_]


def sample_link_batch(
    mg: MessageGraph,
    edge_indices: np.ndarray,
    fanouts: tuple[int, ...],
    rng: RngStream,
) -> LinkBatch:
    """Build one training batch around the given supervision edges.

    Breadth-first expansion: level-0 nodes are the seed endpoints; each hop
    samples in-neighbors of the newest frontier per relation. Sampled edges
    are stored destination-sorted per relation, which is exactly the order
    the encoder's segmented mean expects.
    """
    hkg = mg.hkg
    sup = hkg.supervision
    edge_indices = np.asarray(edge_indices, dtype=np.int64)
    seed_src = sup.src[edge_indices]
    seed_dst = sup.dst[edge_indices]
    labels = sup.labels[edge_indices]

    index = _LocalIndex(hkg)
    src_t, dst_t = RELATION_SCHEMA[REL_PASSES][0], RELATION_SCHEMA[REL_PASSES][1]
    frontier: dict[str, np.ndarray] = {}
    frontier[src_t] = index.add(src_t, np.unique(seed_src))
    frontier[dst_t] = index.add(dst_t, np.unique(seed_dst))
    bounds_at = [dict(index.counts)]

    edge_parts: dict[str, list[tuple[np.ndarray, np.ndarray, np.ndarray]]] = {
        rel.name: [] for rel in mg.relations
    }
    for hop, fanout in enumerate(fanouts):
        discovered: dict[str, list[np.ndarray]] = {}
        for rel in mg.relations:
            dst_nodes = frontier.get(rel.dst_type)
            if dst_nodes is None or len(dst_nodes) == 0:
                continue
            src_g, owner, weight = _sample_in_edges(
                mg._adj[rel.name], dst_nodes, fanout, rng.derive("hop", hop, rel.name)
            )
            if len(src_g) == 0:
                continue
            dst_local = index.local(rel.dst_type, dst_nodes)[owner]
            edge_parts[rel.name].append((src_g, dst_local, weight))
            discovered.setdefault(rel.src_type, []).append(src_g)
        frontier = {}
        for t, parts in discovered.items():
            fresh = index.add(t, np.unique(np.concatenate(parts)))
            if len(fresh):
                frontier[t] = fresh
        bounds_at.append(dict(index.counts))

    nodes = {
        t: (np.concatenate(chunks) if chunks else np.empty(0, dtype=np.int64))
        for t, chunks in index.nodes.items()
    }
    bounds = {t: [b[t] for b in bounds_at] for t in nodes}
    features = {t: hkg.features[t].rows[nodes[t]] for t in nodes}
    edges: dict[str, EdgeArrays] = {}
    for name, parts in edge_parts.items():
        if not parts:
            continue
        rel = next(r for r in mg.relations if r.name == name)
        src_g = np.concatenate([p[0] for p in parts])
        dst_l = np.concatenate([p[1] for p in parts])
        weight = np.concatenate([p[2] for p in parts])
        edges[name] = EdgeArrays(index.local(rel.src_type, src_g), dst_l, weight)

    subgraph = Subgraph(nodes, bounds, features, edges, mg.relations)
    return LinkBatch(
        subgraph,
        index.local(src_t, seed_src),
        index.local(dst_t, seed_dst),
        labels.astype(np.float64),
        edge_indices,
    )


def full_link_batch(mg: MessageGraph, edge_indices: np.ndarray) -> LinkBatch:
    """Batch over the full graph: exact neighborhoods, no sampling noise."""
    sup = mg.hkg.supervision
    edge_indices = np.asarray(edge_indices, dtype=np.int64)
    return LinkBatch(
        mg.full_subgraph(),
        sup.src[edge_indices],
        sup.dst[edge_indices],
        sup.labels[edge_indices].astype(np.float64),
        edge_indices,
    )
