"""Coupled cascade/trait message-passing models and their prediction heads.

Two networks run in lockstep over the same graph: the cascade network carries
per-node activation evidence (random embedding, structural features, and a
membership flag for the observed adopters), while the trait network carries a
per-node personality embedding.  At every layer each side aggregates its
neighbors' vectors weighted by a scalar edge gate computed from the *other*
side:

* cascade messages into v are weighted by a gate over the trait vectors of
  (u, v) - personality modulates how much influence u exerts on v;
* trait messages into v are weighted by a gate over the cascade vectors of
  (u, v) - participation behavior reveals personality.

A gate is a learned weighted sum of the weighted concatenation of the pair,
``beta . (W x_u || W x_v)``, optionally squashed by a sigmoid or normalized
per neighborhood with a softmax.  With gating disabled each side falls back
to its base model's edge weight: the symmetric-degree normalization (gcn),
softmax attention (gat), or a learned influence weight (stategnn).  For gat
and stategnn an enabled gate multiplies the base weight; gcn uses the gate
alone.

The stategnn variant additionally tracks a per-node activation state in
[0, 1], seeded to 1 on observed adopters and pushed monotonically upward by
active neighbors; its size prediction is the sum of final states.  The other
bases predict size as the sum of per-node sigmoid scores.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import Tape, Tensor
from .graphs import Graph, STRUCT_COLUMNS

BASES = ("gcn", "gat", "stategnn")
SQUASHES = ("raw", "sigmoid", "softmax")
ACTIVATIONS = ("relu", "tanh")

N_TRAITS = 5


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    base: str = "gcn"
    gated: bool = True
    layers: int = 3
    d_c: int = 38
    d_p: int = 38
    embed_dim: int = 32
    gate_squash: str = "sigmoid"
    activation: str = "relu"

    def validate(self) -> None:
        if self.base not in BASES:
            raise ModelError(f"unknown base model '{self.base}'")
        if self.gate_squash not in SQUASHES:
            raise ModelError(f"unknown gate squash '{self.gate_squash}'")
        if self.activation not in ACTIVATIONS:
            raise ModelError(f"unknown activation '{self.activation}'")
        if self.layers < 1 or self.d_c < 1 or self.d_p < 1 or self.embed_dim < 1:
            raise ModelError("layers and dimensions must be at least 1")

    @property
    def uses_membership_slot(self) -> bool:
        return self.base in ("gcn", "gat")

    def input_dim_c(self, k: int) -> int:
        if k == 0:
            return self.embed_dim + len(STRUCT_COLUMNS) + (1 if self.uses_membership_slot else 0)
        return self.d_c

    def input_dim_p(self, k: int) -> int:
        return self.d_p


class ParameterStore:
    """Named trainable tensors plus the frozen structural features."""

    def __init__(self, params: dict[str, Tensor], features: np.ndarray,
                 config: ModelConfig, seed: int):
        self.params = params
        self.features = np.ascontiguousarray(features, dtype=np.float64)
        self.config = config
        self.seed = seed

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def names(self) -> list[str]:
        return list(self.params)

    def trainable(self) -> list[Tensor]:
        return list(self.params.values())

    def layer(self, k: int) -> dict[str, Tensor]:
        out = {}
        for name, t in self.params.items():
            stem, dot, idx = name.rpartition(".")
            if dot and idx == str(k):
                out[stem] = t
        return out

    @property
    def node_count(self) -> int:
        return self.features.shape[0]

    def copy(self) -> "ParameterStore":
        params = {name: Tensor(t.data.copy(), requires_grad=True, name=name)
                  for name, t in self.params.items()}
        return ParameterStore(params, self.features.copy(), self.config, self.seed)

    def load_values(self, snapshot: dict[str, np.ndarray]) -> None:
        for name, arr in snapshot.items():
            np.copyto(self.params[name].data, arr)

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.params.items()}


def _glorot(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    if len(shape) == 2:
        fan_in, fan_out = shape[1], shape[0]
    else:
        fan_in, fan_out = shape[0], 1
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


def init_params(config: ModelConfig, graph: Graph, features: np.ndarray,
                seed: int) -> ParameterStore:
    """Deterministic initialization: Glorot-uniform weights, zero gate biases,
    N(0, 0.1) embeddings."""
    config.validate()
    n = graph.node_count
    if features.shape != (n, len(STRUCT_COLUMNS)):
        raise ModelError(f"features must be ({n}, {len(STRUCT_COLUMNS)})")
    rng = np.random.default_rng(seed)
    params: dict[str, Tensor] = {}

    def add(name, arr):
        params[name] = Tensor(arr, requires_grad=True, name=name)

    add("cas_embed", rng.normal(0.0, 0.1, size=(n, config.embed_dim)))
    add("trait_embed", rng.normal(0.0, 0.1, size=(n, config.d_p)))

    for k in range(config.layers):
        in_c, in_p = config.input_dim_c(k), config.input_dim_p(k)
        add(f"cas_w.{k}", _glorot(rng, (config.d_c, in_c)))
        add(f"trait_w.{k}", _glorot(rng, (config.d_p, in_p)))
        if config.gated:
            add(f"cas_gate_w.{k}", _glorot(rng, (config.d_c, in_c)))
            add(f"cas_gate_b.{k}", np.zeros(2 * config.d_c))
            add(f"trait_gate_w.{k}", _glorot(rng, (config.d_p, in_p)))
            add(f"trait_gate_b.{k}", np.zeros(2 * config.d_p))
        if config.base == "gat":
            add(f"cas_att.{k}", _glorot(rng, (2 * config.d_c,)))
            add(f"trait_att.{k}", _glorot(rng, (2 * config.d_p,)))
        if config.base == "stategnn":
            add(f"infl_w.{k}", _glorot(rng, (config.d_c, in_c)))
            add(f"infl_b.{k}", np.zeros(2 * config.d_c))
            add(f"state_w.{k}", _glorot(rng, (in_c,)))

    add("size_head_w", _glorot(rng, (config.d_c,)))
    add("trait_head_w", _glorot(rng, (N_TRAITS, config.d_p)))
    return ParameterStore(params, features, config, seed)


# ---------------------------------------------------------------------------
# gate and layer


def gate_value(x_u, x_v, w, beta, squash: str = "raw") -> float:
    """Scalar edge gate ``beta . (W x_u || W x_v)`` for a single node pair.

    ``raw`` returns the weighted sum unchanged; ``sigmoid`` squashes it; a
    ``softmax`` gate is also returned raw here because its normalization runs
    across a whole neighborhood inside the layer.
    """
    w = np.atleast_2d(np.asarray(w, dtype=np.float64))
    x_u = np.asarray(x_u, dtype=np.float64).reshape(-1)
    x_v = np.asarray(x_v, dtype=np.float64).reshape(-1)
    beta = np.asarray(beta, dtype=np.float64).reshape(-1)
    if w.shape[1] != x_u.shape[0] or x_u.shape != x_v.shape:
        raise ModelError("gate: representation dimensions do not match")
    if beta.shape[0] != 2 * w.shape[0]:
        raise ModelError("gate: weight vector must cover both halves")
    r = float(beta @ np.concatenate([w @ x_u, w @ x_v]))
    if squash == "sigmoid":
        return float(1.0 / (1.0 + np.exp(-r)))
    if squash in ("raw", "softmax"):
        return r
    raise ModelError(f"unknown gate squash '{squash}'")


def _edge_pair_score(tape: Tape, h: Tensor, vec: Tensor, src, dst) -> Tensor:
    """Per-edge ``vec . (h_u || h_v)`` for transformed node features ``h``."""
    gu = tape.gather_rows(h, src)
    gv = tape.gather_rows(h, dst)
    return tape.matmul(tape.concat([gu, gv], axis=1), vec)


def _gate_edges(tape: Tape, x: Tensor, w: Tensor, beta: Tensor,
                src, dst, n: int, squash: str) -> Tensor:
    h = tape.matmul(x, tape.transpose(w))
    raw = _edge_pair_score(tape, h, beta, src, dst)
    if squash == "sigmoid":
        return tape.sigmoid(raw)
    if squash == "softmax":
        return tape.segment_softmax(raw, dst, n)
    return raw


def _aggregate(tape: Tape, x: Tensor, weights: Tensor, src, dst, n: int) -> Tensor:
    msgs = tape.scale_rows(tape.gather_rows(x, src), weights)
    return tape.segment_sum(msgs, dst, n)


def _activate(tape: Tape, x: Tensor, kind: str) -> Tensor:
    return tape.relu(x) if kind == "relu" else tape.tanh(x)


def coupled_layer(tape: Tape, config: ModelConfig, layer_params: dict[str, Tensor],
                  consts: dict, c: Tensor, p: Tensor, s: Tensor | None):
    """One round of the coupled update; returns (c', p', s').

    ``consts`` carries the per-forward constants: ``src``/``dst`` edge arrays,
    node count ``n``, the gcn normalization tensor, and an all-ones vector for
    the state update.
    """
    src, dst, n = consts["src"], consts["dst"], consts["n"]

    # base edge weights per side
    if config.base == "gcn":
        base_c = base_p = consts["gcn_norm"]
    elif config.base == "gat":
        # tanh keeps the scores bounded and smooth; a plain linear score
        # would make the target-side attention half cancel inside softmax
        hc = tape.matmul(c, tape.transpose(layer_params["cas_w"]))
        ec = tape.tanh(_edge_pair_score(tape, hc, layer_params["cas_att"], src, dst))
        base_c = tape.segment_softmax(ec, dst, n)
        hp = tape.matmul(p, tape.transpose(layer_params["trait_w"]))
        ep = tape.tanh(_edge_pair_score(tape, hp, layer_params["trait_att"], src, dst))
        base_p = tape.segment_softmax(ep, dst, n)
    else:  # stategnn: learned influence weight shared by both sides
        infl = _gate_edges(tape, c, layer_params["infl_w"], layer_params["infl_b"],
                           src, dst, n, "sigmoid")
        base_c = base_p = infl

    if config.gated:
        trait_gate = _gate_edges(tape, p, layer_params["trait_gate_w"],
                                 layer_params["trait_gate_b"], src, dst, n,
                                 config.gate_squash)
        cas_gate = _gate_edges(tape, c, layer_params["cas_gate_w"],
                               layer_params["cas_gate_b"], src, dst, n,
                               config.gate_squash)
        if config.base == "gcn":
            w_cas, w_trait = trait_gate, cas_gate
        else:
            w_cas = tape.mul(base_c, trait_gate)
            w_trait = tape.mul(base_p, cas_gate)
    else:
        w_cas, w_trait = base_c, base_p

    agg_c = _aggregate(tape, c, w_cas, src, dst, n)
    c_next = _activate(tape, tape.matmul(tape.add(c, agg_c),
                                         tape.transpose(layer_params["cas_w"])),
                       config.activation)
    agg_p = _aggregate(tape, p, w_trait, src, dst, n)
    p_next = _activate(tape, tape.matmul(tape.add(p, agg_p),
                                         tape.transpose(layer_params["trait_w"])),
                       config.activation)

    s_next = None
    if config.base == "stategnn":
        s_next = state_layer(tape, layer_params, consts, s, c, w_cas)
    return c_next, p_next, s_next


def state_layer(tape: Tape, layer_params: dict[str, Tensor], consts: dict,
                s: Tensor, influence: Tensor, edge_weights: Tensor) -> Tensor:
    """Monotone activation-state update in [0, 1].

    Each node receives neighbor drive ``sum_u g_uv * s_u * (w . influence_u)``
    and moves a sigmoid fraction of its remaining headroom toward 1.  The
    update is suppressed where the drive is exactly zero (an all-inactive
    neighborhood must not activate anyone, and sigma(0) = 0.5 would).
    """
    src, dst, n = consts["src"], consts["dst"], consts["n"]
    if np.any(s.data < 0.0) or np.any(s.data > 1.0):
        raise ModelError("activation states left [0, 1]")
    drive = tape.matmul(influence, layer_params["state_w"])
    per_edge = tape.mul(tape.mul(tape.gather_rows(s, src),
                                 tape.gather_rows(drive, src)),
                        edge_weights)
    total = tape.segment_sum(per_edge, dst, n)
    alive = Tensor((total.data != 0.0).astype(np.float64))
    headroom = tape.sub(consts["ones"], s)
    bump = tape.mul(tape.mul(headroom, tape.sigmoid(total)), alive)
    s_next = tape.add(s, bump)
    assert np.all(s_next.data >= s.data) and np.all(s_next.data <= 1.0)
    return s_next


# ---------------------------------------------------------------------------
# full forward


@dataclass
class ForwardResult:
    tape: Tape
    cascade_reps: Tensor       # (n, d_c) final-layer cascade vectors
    trait_reps: Tensor         # (n, d_p) final-layer trait vectors
    size_pred: Tensor          # scalar predicted cascade size
    trait_pred: Tensor         # (n, 5) nonnegative trait predictions
    states: Tensor | None      # (n,) final activation states (stategnn)


def forward_constants(graph: Graph) -> dict:
    """Per-graph constants reused by every forward pass."""
    deg = graph.und_degrees.astype(np.float64)
    norm = 1.0 / np.sqrt((deg[graph.edge_src] + 1.0) * (deg[graph.edge_dst] + 1.0))
    return {
        "src": graph.edge_src,
        "dst": graph.edge_dst,
        "n": graph.node_count,
        "gcn_norm_data": norm,
        "ones_data": np.ones(graph.node_count),
    }


def forward_cascade(store: ParameterStore, graph: Graph, config: ModelConfig,
                    cascade, tape: Tape | None = None,
                    graph_consts: dict | None = None) -> ForwardResult:
    """Full-graph forward pass for one partially observed cascade."""
    config.validate()
    if cascade.observed_len is None:
        raise ModelError(f"cascade {cascade.cid} has no observed prefix")
    n = graph.node_count
    if store.node_count != n:
        raise ModelError("parameter store does not match the graph")
    if tape is None:
        tape = Tape()
    if graph_consts is None:
        graph_consts = forward_constants(graph)
    consts = {
        "src": graph_consts["src"],
        "dst": graph_consts["dst"],
        "n": n,
        "gcn_norm": Tensor(graph_consts["gcn_norm_data"]),
        "ones": Tensor(graph_consts["ones_data"]),
    }

    member = np.zeros(n)
    member[np.asarray(cascade.adopters[: cascade.observed_len], dtype=np.int64)] = 1.0

    parts = [store["cas_embed"], Tensor(store.features)]
    if config.uses_membership_slot:
        parts.append(Tensor(member[:, None]))
    c = tape.concat(parts, axis=1)
    p = store["trait_embed"]
    s = Tensor(member) if config.base == "stategnn" else None

    for k in range(config.layers):
        c, p, s = coupled_layer(tape, config, store.layer(k), consts, c, p, s)

    if config.base == "stategnn":
        size_pred = tape.sum(s)
    else:
        probs = tape.sigmoid(tape.matmul(c, store["size_head_w"]))
        size_pred = tape.sum(probs)
    trait_pred = tape.relu(tape.matmul(p, tape.transpose(store["trait_head_w"])))
    return ForwardResult(tape, c, p, size_pred, trait_pred, s)


# ---------------------------------------------------------------------------
# checkpoints

CHECKPOINT_FORMAT = 1


def save_params(store: ParameterStore, stem) -> None:
    """Manifest JSON plus flat little-endian float64 arrays, one per name."""
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "seed": store.seed,
        "config": asdict(store.config),
        "params": [{"name": name, "shape": list(t.shape)}
                   for name, t in store.params.items()],
        "features_shape": list(store.features.shape),
    }
    with open(f"{stem}.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    with open(f"{stem}.bin", "wb") as fh:
        for t in store.params.values():
            fh.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(store.features, dtype="<f8").tobytes())


def load_params(stem) -> ParameterStore:
    json_path, bin_path = f"{stem}.json", f"{stem}.bin"
    for path in (json_path, bin_path):
        if not os.path.exists(path):
            raise ModelError(f"missing checkpoint file: {path}")
    with open(json_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise ModelError("unknown checkpoint format")
    config = ModelConfig(**manifest["config"])
    raw = np.frombuffer(open(bin_path, "rb").read(), dtype="<f8")
    params: dict[str, Tensor] = {}
    offset = 0
    for entry in manifest["params"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape)) if shape else 1
        arr = raw[offset: offset + size].reshape(shape).astype(np.float64)
        params[entry["name"]] = Tensor(arr, requires_grad=True, name=entry["name"])
        offset += size
    fshape = tuple(manifest["features_shape"])
    fsize = int(np.prod(fshape))
    if offset + fsize != raw.size:
        raise ModelError("checkpoint payload size mismatch")
    features = raw[offset:].reshape(fshape).astype(np.float64)
    return ParameterStore(params, features, config, manifest["seed"])


def stores_equal(a: ParameterStore, b: ParameterStore) -> bool:
    if a.names() != b.names() or a.config != b.config or a.seed != b.seed:
        return False
    if not np.array_equal(a.features, b.features):
        return False
    return all(np.array_equal(a[name].data, b[name].data) for name in a.names())
