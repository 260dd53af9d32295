"""Cascade data, deterministic splits, and the trait-driven synthetic generator.

The generator plants a known signal: each node draws five trait scores, and
an information cascade spreads over the graph by independent activations
whose per-node probability rises with the target's extroversion score and
falls with its neuroticism score.  Because the signal is planted, a model
that recovers traits from cascade behavior can be checked against ground
truth instead of an external labeling service.

Each cascade pre-samples one uniform per directed edge, so a cascade is the
set of nodes reachable from its seeds across "live" edges (uniform below the
target's activation probability).  That construction makes cascade sizes
monotone in the trait weights under a shared random stream, which the test
suite exploits.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace

import numpy as np

from . import graphs
from .graphs import Graph


class DataError(ValueError):
    pass


class DatasetIOError(DataError):
    pass


class DegenerateDatasetError(DataError):
    pass


TRAIT_NAMES = ("O", "C", "E", "A", "N")
SPLIT_NAMES = ("train", "val", "test")


@dataclass
class Cascade:
    """Ordered adopter sequence; ``observed_len`` marks the visible prefix."""

    cid: str
    adopters: list[int]
    observed_len: int | None = None
    degenerate: bool = False

    @property
    def total_size(self) -> int:
        return len(self.adopters)

    def validate(self, node_count: int) -> None:
        if not self.adopters:
            raise DataError(f"cascade {self.cid}: empty adopter list")
        if len(set(self.adopters)) != len(self.adopters):
            raise DataError(f"cascade {self.cid}: duplicate adopter")
        for a in self.adopters:
            if not (0 <= a < node_count):
                raise DataError(f"cascade {self.cid}: adopter {a} out of range")
        if self.observed_len is not None and not (1 <= self.observed_len <= self.total_size):
            raise DataError(f"cascade {self.cid}: bad observed_len")


@dataclass
class SynthConfig:
    """Knobs of the synthetic generator; see module docstring."""

    graph_model: str = "ba"          # "ba" or "er"
    nodes: int = 300
    ba_m: int = 2
    er_p: float = 0.02
    cascades: int = 200
    base_prob: float = 0.1
    w_e: float = 0.4                 # extroversion pull on activation
    w_n: float = 0.4                 # neuroticism drag on activation
    trait_low: float = 20.0
    trait_high: float = 80.0
    cascade_seeds: int = 1
    seed: int = 0

    def validate(self) -> None:
        if self.graph_model not in ("ba", "er"):
            raise DataError(f"unknown graph model '{self.graph_model}'")
        if self.nodes < 2:
            raise DataError("need at least two nodes")
        if self.w_e < 0 or self.w_n < 0:
            raise DataError("trait weights must be non-negative")
        if not (0.0 < self.trait_low < self.trait_high):
            raise DataError("trait range must be positive and increasing")
        if not (1 <= self.cascade_seeds <= self.nodes):
            raise DataError("cascade_seeds out of range")
        if self.cascades < 1:
            raise DataError("need at least one cascade")


@dataclass
class Dataset:
    graph: Graph
    features: np.ndarray
    cascades: list[Cascade]
    personalities: np.ndarray        # (node_count, 5), strictly positive
    split: dict[str, str] | None = None

    def validate(self) -> None:
        n = self.graph.node_count
        if self.personalities.shape != (n, 5):
            raise DataError("personalities must be (node_count, 5)")
        if np.any(self.personalities <= 0) or not np.all(np.isfinite(self.personalities)):
            raise DataError("personality traits must be strictly positive and finite")
        if self.features.shape != (n, len(graphs.STRUCT_COLUMNS)):
            raise DataError("feature matrix has wrong shape")
        seen = set()
        for c in self.cascades:
            c.validate(n)
            if c.cid in seen:
                raise DataError(f"duplicate cascade id {c.cid}")
            seen.add(c.cid)
        if self.split is not None:
            if set(self.split) != seen:
                raise DataError("split must cover exactly the cascade ids")
            for s in self.split.values():
                if s not in SPLIT_NAMES:
                    raise DataError(f"unknown split label '{s}'")

    def cascades_in(self, split: str) -> list[Cascade]:
        if self.split is None:
            raise DataError("dataset has no split assignment")
        return [c for c in self.cascades if self.split[c.cid] == split]


# ---------------------------------------------------------------------------
# parsing and prefix observation


def parse_cascades(text: str, graph: Graph) -> list[Cascade]:
    """One cascade per line: ``id<TAB>label1,label2,...`` in activation order."""
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 2:
            raise DataError(f"line {lineno}: expected 'id<TAB>adopters'")
        cid, adopters_field = parts
        labels = [x for x in adopters_field.split(",") if x != ""]
        if not labels:
            raise DataError(f"line {lineno}: cascade {cid} has no adopters")
        ids = []
        for lab in labels:
            if not graph.has_label(lab):
                raise DataError(f"line {lineno}: unknown node id '{lab}'")
            ids.append(graph.id_of(lab))
        cascade = Cascade(cid, ids)
        cascade.validate(graph.node_count)
        out.append(cascade)
    if not out:
        raise DataError("no cascades found")
    return out


def load_cascades(path, graph: Graph) -> list[Cascade]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_cascades(fh.read(), graph)


def observe_prefix(cascade: Cascade, fraction: float) -> Cascade:
    """Mark the first ``max(1, floor(fraction * size))`` adopters as observed."""
    if not (0.0 < fraction < 1.0):
        raise DataError("fraction must lie strictly between 0 and 1")
    n = cascade.total_size
    observed = max(1, int(np.floor(fraction * n)))
    return replace(cascade, observed_len=observed, degenerate=(n == 1))


def split_cascades(cascades: list[Cascade], r_val: float, r_test: float, seed: int) -> dict[str, str]:
    """Seeded shuffle, then floor(N*r_val) val / floor(N*r_test) test / rest train."""
    if r_val < 0 or r_test < 0 or r_val + r_test >= 1.0:
        raise DataError("validation and test fractions must leave room for training")
    n = len(cascades)
    if n < 3:
        raise DataError("need at least three cascades to split")
    order = np.random.default_rng(seed).permutation(n)
    n_val = int(np.floor(n * r_val))
    n_test = int(np.floor(n * r_test))
    out = {}
    for pos, idx in enumerate(order):
        cid = cascades[int(idx)].cid
        if pos < n_val:
            out[cid] = "val"
        elif pos < n_val + n_test:
            out[cid] = "test"
        else:
            out[cid] = "train"
    return out


# ---------------------------------------------------------------------------
# graph sampling


def generate_ba_graph(n: int, m: int, rng: np.random.Generator) -> Graph:
    """Preferential attachment: each new node links to m distinct earlier nodes."""
    if not (1 <= m < n):
        raise DataError("ba_m must satisfy 1 <= m < nodes")
    edges = set()
    targets_pool = []  # node repeated once per incident edge endpoint
    # start from a star on m+1 nodes so every early node has degree >= 1
    for v in range(1, m + 1):
        edges.add((0, v))
        targets_pool += [0, v]
    for v in range(m + 1, n):
        chosen = set()
        while len(chosen) < m:
            pick = int(targets_pool[int(rng.integers(len(targets_pool)))])
            chosen.add(pick)
        for u in sorted(chosen):
            edges.add((min(u, v), max(u, v)))
            targets_pool += [u, v]
    return Graph(n, sorted(edges), directed=False)


def generate_er_graph(n: int, p: float, rng: np.random.Generator) -> Graph:
    if not (0.0 <= p <= 1.0):
        raise DataError("er_p must lie in [0, 1]")
    edges = []
    for u in range(n):
        draws = rng.random(n - u - 1)
        for off in np.nonzero(draws < p)[0]:
            edges.append((u, u + 1 + int(off)))
    return Graph(n, edges, directed=False)


# ---------------------------------------------------------------------------
# cascade simulation


def activation_probabilities(personalities: np.ndarray, base: float,
                             w_e: float, w_n: float) -> np.ndarray:
    """Per-node activation probability, clamped to [0, 1].

    Extroversion (column E) and neuroticism (column N) are min-max normalized
    across nodes before weighting.
    """
    ext = personalities[:, TRAIT_NAMES.index("E")]
    neu = personalities[:, TRAIT_NAMES.index("N")]

    def norm(col):
        span = col.max() - col.min()
        if span == 0.0:
            return np.full_like(col, 0.5)
        return (col - col.min()) / span

    q = base + w_e * norm(ext) - w_n * norm(neu)
    return np.clip(q, 0.0, 1.0)


def simulate_cascade(graph: Graph, probs: np.ndarray, seeds, uniforms: np.ndarray) -> list[int]:
    """Independent-cascade spread from ``seeds`` over pre-sampled edge uniforms.

    ``uniforms`` holds one draw per directed influence edge (aligned with
    ``graph.edge_src``/``edge_dst``); the attempt along edge i succeeds when
    ``uniforms[i] < probs[edge_dst[i]]``.  Adopters are recorded in breadth
    rounds, ties within a round broken by node id.
    """
    if uniforms.shape[0] != graph.edge_src.shape[0]:
        raise DataError("need one uniform per directed edge")
    live = uniforms < probs[graph.edge_dst]
    live_src = graph.edge_src[live]
    live_dst = graph.edge_dst[live]

    active = set(int(s) for s in seeds)
    if len(active) != len(list(seeds)):
        raise DataError("duplicate seed adopters")
    order = sorted(active)
    frontier = set(active)
    while frontier:
        mask = np.isin(live_src, np.fromiter(frontier, dtype=np.int64))
        nxt = {int(v) for v in live_dst[mask] if int(v) not in active}
        if not nxt:
            break
        batch = sorted(nxt)
        order.extend(batch)
        active.update(nxt)
        frontier = nxt
    return order


def synth_generate(config: SynthConfig) -> Dataset:
    """Sample a graph, trait vectors, and trait-driven cascades.

    Deterministic per config seed: the graph, traits, and every cascade use
    rng streams derived from ``(seed, stream tag, cascade index)``, so
    cascades could be generated independently without changing the output.
    """
    config.validate()
    graph_rng = np.random.default_rng([config.seed, 0])
    if config.graph_model == "ba":
        graph = generate_ba_graph(config.nodes, config.ba_m, graph_rng)
    else:
        graph = generate_er_graph(config.nodes, config.er_p, graph_rng)

    trait_rng = np.random.default_rng([config.seed, 1])
    personalities = trait_rng.uniform(config.trait_low, config.trait_high,
                                      size=(config.nodes, 5))
    probs = activation_probabilities(personalities, config.base_prob,
                                     config.w_e, config.w_n)

    cascades = []
    for m in range(config.cascades):
        rng = np.random.default_rng([config.seed, 2, m])
        seeds = rng.choice(config.nodes, size=config.cascade_seeds, replace=False)
        uniforms = rng.random(graph.edge_src.shape[0])
        adopters = simulate_cascade(graph, probs, sorted(int(s) for s in seeds), uniforms)
        cascades.append(Cascade(f"c{m:04d}", adopters))

    if all(c.total_size == 1 for c in cascades):
        raise DegenerateDatasetError("every generated cascade has size 1")

    features = graphs.structural_features(graph)
    ds = Dataset(graph, features, cascades, personalities)
    ds.validate()
    return ds


# ---------------------------------------------------------------------------
# directory round trip

_FILES = {
    "graph": "graph.edges",
    "cascades": "cascades.tsv",
    "personalities": "personalities.csv",
    "features": "features.csv",
    "split": "splits.csv",
}


def export_dataset(ds: Dataset, directory) -> None:
    """Write the dataset as plain text; floats use shortest round-trip repr."""
    ds.validate()
    if ds.split is None:
        raise DataError("dataset needs a split assignment before export")
    os.makedirs(directory, exist_ok=True)
    g = ds.graph
    graphs.save_edge_list(g, os.path.join(directory, _FILES["graph"]))

    lines = ["# id\tobserved_len\tadopters"]
    for c in ds.cascades:
        obs = "-" if c.observed_len is None else str(c.observed_len)
        labels = ",".join(g.labels[a] for a in c.adopters)
        lines.append(f"{c.cid}\t{obs}\t{labels}")
    _write(os.path.join(directory, _FILES["cascades"]), lines)

    lines = ["node," + ",".join(TRAIT_NAMES)]
    for i in range(g.node_count):
        vals = ",".join(repr(float(x)) for x in ds.personalities[i])
        lines.append(f"{g.labels[i]},{vals}")
    _write(os.path.join(directory, _FILES["personalities"]), lines)

    with open(os.path.join(directory, _FILES["features"]), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(graphs.features_to_csv(g, ds.features))

    lines = ["cascade,split"]
    for c in ds.cascades:
        lines.append(f"{c.cid},{ds.split[c.cid]}")
    _write(os.path.join(directory, _FILES["split"]), lines)


def _write(path, lines):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _read(directory, key):
    path = os.path.join(directory, _FILES[key])
    if not os.path.exists(path):
        raise DatasetIOError(f"missing dataset file: {_FILES[key]}")
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def import_dataset(directory) -> Dataset:
    graph = graphs.parse_edge_list(_read(directory, "graph"))

    cascades = []
    for lineno, line in enumerate(_read(directory, "cascades").splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise DatasetIOError(f"cascades.tsv line {lineno}: expected three fields")
        cid, obs, adopters_field = parts
        ids = [graph.id_of(lab) for lab in adopters_field.split(",") if lab]
        observed = None if obs == "-" else int(obs)
        cascade = Cascade(cid, ids, observed_len=observed,
                          degenerate=(observed is not None and len(ids) == 1))
        cascades.append(cascade)

    personalities = np.zeros((graph.node_count, 5))
    lines = [ln for ln in _read(directory, "personalities").splitlines() if ln.strip()]
    if not lines or lines[0] != "node," + ",".join(TRAIT_NAMES):
        raise DatasetIOError("personalities.csv: bad header")
    seen = np.zeros(graph.node_count, dtype=bool)
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 6:
            raise DatasetIOError("personalities.csv: bad row")
        idx = graph.id_of(parts[0])
        personalities[idx] = [float(x) for x in parts[1:]]
        seen[idx] = True
    if not seen.all():
        raise DatasetIOError("personalities.csv: missing nodes")

    features = graphs.features_from_csv(_read(directory, "features"), graph)

    split = {}
    lines = [ln for ln in _read(directory, "split").splitlines() if ln.strip()]
    if not lines or lines[0] != "cascade,split":
        raise DatasetIOError("splits.csv: bad header")
    for ln in lines[1:]:
        cid, _, s = ln.partition(",")
        split[cid] = s

    ds = Dataset(graph, features, cascades, personalities, split)
    ds.validate()
    return ds


def datasets_equal(a: Dataset, b: Dataset) -> bool:
    """Bitwise equality of every dataset component."""
    if a.graph.labels != b.graph.labels or a.graph.directed != b.graph.directed:
        return False
    if not np.array_equal(a.graph.edges(), b.graph.edges()):
        return False
    if not (np.array_equal(a.features, b.features)
            and np.array_equal(a.personalities, b.personalities)):
        return False
    if len(a.cascades) != len(b.cascades) or a.split != b.split:
        return False
    for ca, cb in zip(a.cascades, b.cascades):
        if (ca.cid, ca.adopters, ca.observed_len) != (cb.cid, cb.adopters, cb.observed_len):
            return False
    return True
