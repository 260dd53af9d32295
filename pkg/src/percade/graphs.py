"""Immutable graphs and the six structural node measures used as features.

Graphs are loaded from plain edge-list text (two whitespace-separated node
labels per line, optional ``# directed=true`` header).  Labels are mapped to
dense 0-based ids in lexicographic label order, self-loops are dropped and
duplicate edges deduplicated, both with counters.

Measures follow the usual definitions: k-core by peeling, PageRank with
damping 0.85 and uniform dangling redistribution, hub/authority and
eigenvector scores by power iteration with unit-L2 normalization, local
clustering as triangles over neighbor pairs.  Coreness, clustering and
eigenvector centrality are computed on the undirected projection; PageRank
and hub/authority respect edge direction.
"""

from __future__ import annotations

import numpy as np

from . import kernels


class GraphError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    """Power iteration failed; carries the measure name."""


STRUCT_COLUMNS = (
    "coreness",
    "pagerank",
    "hub",
    "authority",
    "eigenvector",
    "clustering",
)

MAX_POWER_ITERS = 10_000


class Graph:
    """Directed or undirected simple graph with dense integer ids."""

    def __init__(self, node_count: int, edges, directed: bool = False,
                 labels=None, dropped_self_loops: int = 0, dropped_duplicates: int = 0):
        if labels is None:
            # zero-padded so lexicographic label order matches id order and
            # edge-list round trips preserve node numbering
            width = len(str(max(node_count - 1, 0)))
            labels = tuple(str(i).zfill(width) for i in range(node_count))
        if len(labels) != node_count:
            raise GraphError("label count must match node count")
        edges = [(int(u), int(v)) for u, v in edges]
        for u, v in edges:
            if not (0 <= u < node_count and 0 <= v < node_count):
                raise GraphError(f"edge ({u}, {v}) out of range")
            if u == v:
                raise GraphError("self-loops must be dropped before construction")
        canon = {(u, v) if directed else (min(u, v), max(u, v)) for u, v in edges}
        if len(canon) != len(edges):
            raise GraphError("duplicate edges must be dropped before construction")

        self.node_count = node_count
        self.directed = bool(directed)
        self.labels = tuple(labels)
        self._label_index = {lab: i for i, lab in enumerate(self.labels)}
        if len(self._label_index) != node_count:
            raise GraphError("labels must be unique")
        self.dropped_self_loops = dropped_self_loops
        self.dropped_duplicates = dropped_duplicates
        self._edges = np.array(sorted(canon), dtype=np.int64).reshape(-1, 2)
        self._build_adjacency()

    def _build_adjacency(self):
        n = self.node_count
        e = self._edges
        if self.directed:
            pairs = e
        else:
            pairs = np.concatenate([e, e[:, ::-1]], axis=0) if len(e) else e
        # influence edges u -> v, sorted by (target, source): aggregation and
        # the cascade simulator both index attempts this way
        if len(pairs):
            order = np.lexsort((pairs[:, 0], pairs[:, 1]))
            pairs = pairs[order]
        self.edge_src = np.ascontiguousarray(pairs[:, 0]) if len(pairs) else np.zeros(0, np.int64)
        self.edge_dst = np.ascontiguousarray(pairs[:, 1]) if len(pairs) else np.zeros(0, np.int64)

        self._out = [[] for _ in range(n)]
        self._in = [[] for _ in range(n)]
        for u, v in self._edges:
            self._out[u].append(v)
            self._in[v].append(u)
            if not self.directed:
                self._out[v].append(u)
                self._in[u].append(v)
        self._out = [np.array(sorted(a), dtype=np.int64) for a in self._out]
        self._in = [np.array(sorted(a), dtype=np.int64) for a in self._in]

        # undirected projection in CSR form (coreness/clustering/eigenvector)
        und = {(min(u, v), max(u, v)) for u, v in self._edges}
        adj = [[] for _ in range(n)]
        for u, v in und:
            adj[u].append(v)
            adj[v].append(u)
        counts = np.array([len(a) for a in adj], dtype=np.int64)
        self.und_indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=self.und_indptr[1:])
        self.und_indices = np.concatenate(
            [np.array(sorted(a), dtype=np.int64) for a in adj]) if n and counts.sum() else np.zeros(0, np.int64)
        self.und_degrees = counts

    # -- queries ----------------------------------------------------------

    @property
    def edge_count(self) -> int:
        return len(self._edges)

    def edges(self) -> np.ndarray:
        return self._edges.copy()

    def neighbors(self, v: int, direction: str = "out") -> list[int]:
        if not (0 <= v < self.node_count):
            raise GraphError(f"node {v} out of range")
        if direction not in ("out", "in"):
            raise GraphError(f"unknown direction '{direction}'")
        arr = self._out[v] if direction == "out" else self._in[v]
        return arr.tolist()

    def id_of(self, label: str) -> int:
        if label not in self._label_index:
            raise GraphError(f"unknown node label '{label}'")
        return self._label_index[label]

    def has_label(self, label: str) -> bool:
        return label in self._label_index

    def to_edge_list(self) -> str:
        lines = [f"# directed={'true' if self.directed else 'false'}"]
        for u, v in self._edges:
            lines.append(f"{self.labels[u]} {self.labels[v]}")
        return "\n".join(lines) + "\n"


def parse_edge_list(text: str) -> Graph:
    """Build a Graph from edge-list text; malformed lines report their number."""
    directed = False
    raw_edges = []
    seen_any = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            body = stripped.lstrip("#").strip().lower()
            if body in ("directed", "directed=true"):
                directed = True
            elif body in ("directed=false", "undirected"):
                directed = False
            continue
        parts = stripped.split()
        if len(parts) != 2:
            raise GraphError(f"line {lineno}: expected two node ids, got {len(parts)}")
        raw_edges.append((parts[0], parts[1]))
        seen_any = True
    if not seen_any:
        raise GraphError("empty edge list")

    labels = sorted({x for e in raw_edges for x in e})
    index = {lab: i for i, lab in enumerate(labels)}
    self_loops = 0
    dupes = 0
    seen = set()
    edges = []
    for a, b in raw_edges:
        u, v = index[a], index[b]
        if u == v:
            self_loops += 1
            continue
        key = (u, v) if directed else (min(u, v), max(u, v))
        if key in seen:
            dupes += 1
            continue
        seen.add(key)
        edges.append(key)
    return Graph(len(labels), edges, directed=directed, labels=tuple(labels),
                 dropped_self_loops=self_loops, dropped_duplicates=dupes)


def load_edge_list(path) -> Graph:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_edge_list(fh.read())


def save_edge_list(graph: Graph, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(graph.to_edge_list())


# ---------------------------------------------------------------------------
# structural measures


def coreness(graph: Graph) -> np.ndarray:
    """k-core numbers by degree peeling on the undirected projection."""
    n = graph.node_count
    deg = graph.und_degrees.copy()
    core = np.zeros(n, dtype=np.int64)
    alive = np.ones(n, dtype=bool)
    k = 0
    remaining = n
    while remaining:
        k_candidates = deg[alive]
        k = max(k, int(k_candidates.min()))
        queue = [v for v in range(n) if alive[v] and deg[v] <= k]
        while queue:
            v = queue.pop()
            if not alive[v]:
                continue
            alive[v] = False
            remaining -= 1
            core[v] = k
            for u in graph.und_indices[graph.und_indptr[v]:graph.und_indptr[v + 1]]:
                if alive[u]:
                    deg[u] -= 1
                    if deg[u] <= k:
                        queue.append(int(u))
    return core


def pagerank(graph: Graph, damping: float = 0.85, tol: float = 1e-10) -> np.ndarray:
    """PageRank with uniform dangling-mass redistribution, L1 tolerance."""
    n = graph.node_count
    src, dst = graph.edge_src, graph.edge_dst
    outdeg = np.bincount(src, minlength=n).astype(np.float64)
    x = np.full(n, 1.0 / n)
    for _ in range(MAX_POWER_ITERS):
        share = np.where(outdeg > 0, x / np.maximum(outdeg, 1.0), 0.0)
        flowed = np.bincount(dst, weights=share[src], minlength=n) if len(src) else np.zeros(n)
        dangling = x[outdeg == 0].sum()
        new = damping * (flowed + dangling / n) + (1.0 - damping) / n
        if np.abs(new - x).sum() < tol:
            return new
        x = new
    raise ConvergenceError("pagerank failed to converge")


def _l2_normalize(x: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(x))
    if norm == 0.0:
        return np.full(x.shape, 1.0 / np.sqrt(len(x)))
    out = x / norm
    if out.sum() < 0:
        out = -out
    return out


def hits(graph: Graph, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Hub and authority scores by power iteration, unit-L2 normalized."""
    n = graph.node_count
    src, dst = graph.edge_src, graph.edge_dst
    if len(src) == 0:
        uniform = np.full(n, 1.0 / np.sqrt(n))
        return uniform, uniform.copy()
    hub = np.full(n, 1.0 / np.sqrt(n))
    auth = np.full(n, 1.0 / np.sqrt(n))
    for _ in range(MAX_POWER_ITERS):
        new_auth = _l2_normalize(np.bincount(dst, weights=hub[src], minlength=n))
        new_hub = _l2_normalize(np.bincount(src, weights=new_auth[dst], minlength=n))
        delta = np.abs(new_auth - auth).sum() + np.abs(new_hub - hub).sum()
        hub, auth = new_hub, new_auth
        if delta < tol:
            return hub, auth
    raise ConvergenceError("hits failed to converge")


def eigenvector_centrality(graph: Graph, tol: float = 1e-10) -> np.ndarray:
    """Dominant eigenvector of the undirected adjacency, unit-L2, nonnegative.

    Iterates on A + I, which shares eigenvectors with symmetric A but cannot
    oscillate on bipartite graphs.
    """
    n = graph.node_count
    indptr, indices = graph.und_indptr, graph.und_indices
    if len(indices) == 0:
        return np.full(n, 1.0 / np.sqrt(n))
    src = indices
    dst = np.repeat(np.arange(n, dtype=np.int64), np.diff(indptr))
    x = np.full(n, 1.0 / np.sqrt(n))
    for _ in range(MAX_POWER_ITERS):
        new = _l2_normalize(np.bincount(dst, weights=x[src], minlength=n) + x)
        if np.abs(new - x).sum() < tol:
            return new
        x = new
    raise ConvergenceError("eigenvector centrality failed to converge")


def clustering_coefficients(graph: Graph) -> np.ndarray:
    """Local clustering: triangles over neighbor pairs, 0 for degree < 2."""
    tri = kernels.triangles_per_node(graph.und_indptr, graph.und_indices)
    deg = graph.und_degrees.astype(np.float64)
    pairs = deg * (deg - 1.0) / 2.0
    out = np.zeros(graph.node_count)
    mask = deg >= 2
    out[mask] = tri[mask] / pairs[mask]
    return out


def structural_features(graph: Graph) -> np.ndarray:
    """The (node_count, 6) feature matrix, columns per STRUCT_COLUMNS."""
    if graph.node_count == 0:
        raise GraphError("graph has no nodes")
    hub, auth = hits(graph)
    cols = [
        coreness(graph).astype(np.float64),
        pagerank(graph),
        hub,
        auth,
        eigenvector_centrality(graph),
        clustering_coefficients(graph),
    ]
    return np.column_stack(cols)


def validate_features(feats: np.ndarray) -> None:
    """Assert the documented feature invariants; raises GraphError."""
    if feats.ndim != 2 or feats.shape[1] != len(STRUCT_COLUMNS):
        raise GraphError("feature matrix must have six columns")
    core, pr, hub, auth, eig, clust = feats.T
    if np.any(core < 0) or np.any(core != np.round(core)):
        raise GraphError("coreness must hold non-negative integers")
    if abs(pr.sum() - 1.0) > 1e-9:
        raise GraphError("pagerank column must sum to 1")
    for name, col in (("hub", hub), ("authority", auth), ("eigenvector", eig)):
        if abs(np.linalg.norm(col) - 1.0) > 1e-9:
            raise GraphError(f"{name} column must have unit L2 norm")
    if np.any(clust < 0) or np.any(clust > 1):
        raise GraphError("clustering must lie in [0, 1]")


def features_to_csv(graph: Graph, feats: np.ndarray) -> str:
    lines = ["node," + ",".join(STRUCT_COLUMNS)]
    for i in range(graph.node_count):
        vals = ",".join(repr(float(x)) for x in feats[i])
        lines.append(f"{graph.labels[i]},{vals}")
    return "\n".join(lines) + "\n"


def features_from_csv(text: str, graph: Graph) -> np.ndarray:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    header = "node," + ",".join(STRUCT_COLUMNS)
    if not lines or lines[0] != header:
        raise GraphError("bad feature CSV header")
    out = np.zeros((graph.node_count, len(STRUCT_COLUMNS)))
    seen = np.zeros(graph.node_count, dtype=bool)
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 1 + len(STRUCT_COLUMNS):
            raise GraphError("bad feature CSV row")
        idx = graph.id_of(parts[0])
        out[idx] = [float(x) for x in parts[1:]]
        seen[idx] = True
    if not seen.all():
        raise GraphError("feature CSV missing nodes")
    return out
