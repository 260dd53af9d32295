import numpy as np
import pytest

from percade.data import (Cascade, DataError, DatasetIOError, DegenerateDatasetError,
                          SynthConfig, activation_probabilities, datasets_equal,
                          export_dataset, generate_ba_graph, generate_er_graph,
                          import_dataset, observe_prefix, parse_cascades,
                          simulate_cascade, split_cascades, synth_generate)
from percade.graphs import Graph, parse_edge_list


@pytest.fixture
def small_graph():
    return parse_edge_list("a b\nb c\nc d\n")


# ---------------------------------------------------------------------------
# cascade parsing


def test_parse_cascade_basic(small_graph):
    cascades = parse_cascades("c1\ta,b,c\n", small_graph)
    assert cascades[0].total_size == 3
    assert cascades[0].adopters == [0, 1, 2]
    assert cascades[0].observed_len is None


def test_parse_cascade_duplicate_adopter(small_graph):
    with pytest.raises(DataError, match="duplicate"):
        parse_cascades("c2\ta,a\n", small_graph)


def test_parse_cascade_unknown_id(small_graph):
    with pytest.raises(DataError, match="unknown"):
        parse_cascades("c3\tzz\n", small_graph)


def test_parse_cascade_empty_adopters(small_graph):
    with pytest.raises(DataError):
        parse_cascades("c4\t\n", small_graph)


# ---------------------------------------------------------------------------
# prefix observation


def test_observe_prefix_half_of_ten():
    c = Cascade("c", list(range(10)))
    assert observe_prefix(c, 0.5).observed_len == 5


def test_observe_prefix_floors_to_one():
    c = Cascade("c", [0, 1, 2])
    out = observe_prefix(c, 0.1)
    assert out.observed_len == 1
    assert not out.degenerate


def test_observe_prefix_singleton_degenerate():
    out = observe_prefix(Cascade("c", [4]), 0.5)
    assert out.observed_len == 1
    assert out.degenerate


def test_observe_prefix_strictly_partial():
    for n in range(2, 40):
        out = observe_prefix(Cascade("c", list(range(n))), 0.999)
        assert out.observed_len < n


def test_observe_prefix_rejects_bad_fraction():
    with pytest.raises(DataError):
        observe_prefix(Cascade("c", [0]), 1.0)


# ---------------------------------------------------------------------------
# splits


def _cascades(n):
    return [Cascade(f"c{i}", [i]) for i in range(n)]


def test_split_99_cascades():
    split = split_cascades(_cascades(99), 0.15, 0.15, seed=0)
    counts = {s: sum(1 for v in split.values() if v == s) for s in ("train", "val", "test")}
    assert counts == {"train": 71, "val": 14, "test": 14}


def test_split_exact_division():
    split = split_cascades(_cascades(10), 0.2, 0.2, seed=1)
    counts = {s: sum(1 for v in split.values() if v == s) for s in ("train", "val", "test")}
    assert counts == {"train": 6, "val": 2, "test": 2}


def test_split_deterministic():
    a = split_cascades(_cascades(50), 0.2, 0.2, seed=7)
    b = split_cascades(_cascades(50), 0.2, 0.2, seed=7)
    assert a == b


def test_split_too_few():
    with pytest.raises(DataError):
        split_cascades(_cascades(2), 0.2, 0.2, seed=0)


def test_split_fractions_must_leave_training_data():
    with pytest.raises(DataError):
        split_cascades(_cascades(10), 0.6, 0.5, seed=0)


# ---------------------------------------------------------------------------
# simulation


def test_zero_propagation_sizes_equal_seed_count():
    cfg = SynthConfig(nodes=30, cascades=10, base_prob=0.0, w_e=0.0, w_n=0.0,
                      cascade_seeds=2, seed=1)
    ds = synth_generate(cfg)
    assert all(c.total_size == 2 for c in ds.cascades)


def test_certain_propagation_reaches_everything():
    cfg = SynthConfig(graph_model="ba", nodes=25, ba_m=2, cascades=4,
                      base_prob=1.0, w_e=0.0, w_n=0.0, seed=3)
    ds = synth_generate(cfg)
    # the preferential-attachment graph is connected by construction
    assert all(c.total_size == 25 for c in ds.cascades)


def test_all_singletons_raises():
    cfg = SynthConfig(nodes=20, cascades=5, base_prob=0.0, w_e=0.0, w_n=0.0,
                      cascade_seeds=1, seed=0)
    with pytest.raises(DegenerateDatasetError):
        synth_generate(cfg)


def test_path_graph_expected_size():
    # seed A on directed path A->B->C with q=0.5: exact mean size is
    # 1 + 1/2 + 1/4 = 1.75 (enumeration over live-edge patterns)
    g = Graph(3, [(0, 1), (1, 2)], directed=True)
    probs = np.full(3, 0.5)
    rng = np.random.default_rng(12345)
    total = 0
    runs = 10_000
    for _ in range(runs):
        adopters = simulate_cascade(g, probs, [0], rng.random(g.edge_src.shape[0]))
        total += len(adopters)
    assert abs(total / runs - 1.75) < 0.05


def test_adopters_connected_to_seeds():
    cfg = SynthConfig(nodes=60, cascades=20, base_prob=0.25, w_e=0.3, w_n=0.2, seed=5)
    ds = synth_generate(cfg)
    adj = {v: set(ds.graph.neighbors(v)) for v in range(ds.graph.node_count)}
    for c in ds.cascades:
        for i, v in enumerate(c.adopters[1:], start=1):
            assert any(u in adj[v] for u in c.adopters[:i])


def test_bfs_round_order_breaks_ties_by_id():
    # star: all leaves activate in round 1 and must appear sorted
    g = Graph(5, [(0, 1), (0, 2), (0, 3), (0, 4)])
    probs = np.ones(5)
    adopters = simulate_cascade(g, probs, [0], np.zeros(g.edge_src.shape[0]))
    assert adopters == [0, 1, 2, 3, 4]


def test_activation_probabilities_clamped():
    rng = np.random.default_rng(0)
    traits = rng.uniform(20, 80, size=(50, 5))
    q = activation_probabilities(traits, 0.1, 5.0, 5.0)
    assert np.all(q >= 0.0) and np.all(q <= 1.0)


# ---------------------------------------------------------------------------
# common-random-numbers monotonicity


@pytest.mark.parametrize("seed", range(20))
def test_crn_monotone_in_trait_weights(seed):
    rng = np.random.default_rng(seed + 1000)
    base = float(rng.uniform(0.05, 0.3))
    w_e = float(rng.uniform(0.0, 0.5))
    w_n = float(rng.uniform(0.0, 0.5))
    kw = dict(graph_model="er", nodes=25, er_p=0.15, cascades=6,
              cascade_seeds=2, seed=seed)

    def sizes(we, wn):
        ds = synth_generate(SynthConfig(base_prob=base, w_e=we, w_n=wn, **kw))
        return np.array([c.total_size for c in ds.cascades])

    ref = sizes(w_e, w_n)
    assert np.all(sizes(w_e + 0.2, w_n) >= ref)
    assert np.all(sizes(w_e, w_n + 0.2) <= ref)


def test_generator_deterministic():
    cfg = SynthConfig(nodes=40, cascades=8, base_prob=0.2, w_e=0.3, w_n=0.1, seed=9)
    a = synth_generate(cfg)
    b = synth_generate(cfg)
    assert datasets_equal(a, b) or a.split is None  # split unset on both
    assert np.array_equal(a.personalities, b.personalities)
    assert [c.adopters for c in a.cascades] == [c.adopters for c in b.cascades]


# ---------------------------------------------------------------------------
# graph samplers


def test_ba_graph_edge_count():
    g = generate_ba_graph(50, 2, np.random.default_rng(0))
    assert g.node_count == 50
    assert g.edge_count == 2 + (50 - 3) * 2


def test_ba_graph_rejects_bad_m():
    with pytest.raises(DataError):
        generate_ba_graph(5, 5, np.random.default_rng(0))


def test_er_graph_probability_extremes():
    rng = np.random.default_rng(0)
    assert generate_er_graph(10, 0.0, rng).edge_count == 0
    assert generate_er_graph(10, 1.0, rng).edge_count == 45


# ---------------------------------------------------------------------------
# export / import


def _full_dataset(seed=0):
    cfg = SynthConfig(nodes=30, cascades=12, base_prob=0.3, w_e=0.3, w_n=0.2, seed=seed)
    ds = synth_generate(cfg)
    ds.cascades = [observe_prefix(c, 0.5) for c in ds.cascades]
    ds.split = split_cascades(ds.cascades, 0.25, 0.25, seed)
    return ds


def test_export_import_round_trip(tmp_path):
    ds = _full_dataset()
    export_dataset(ds, tmp_path / "d")
    back = import_dataset(tmp_path / "d")
    assert datasets_equal(ds, back)


def test_import_rejects_nonpositive_personality(tmp_path):
    ds = _full_dataset()
    export_dataset(ds, tmp_path / "d")
    path = tmp_path / "d" / "personalities.csv"
    lines = path.read_text().splitlines()
    parts = lines[1].split(",")
    parts[1] = "0.0"
    lines[1] = ",".join(parts)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(DataError, match="positive"):
        import_dataset(tmp_path / "d")


def test_import_missing_split_names_file(tmp_path):
    ds = _full_dataset()
    export_dataset(ds, tmp_path / "d")
    (tmp_path / "d" / "splits.csv").unlink()
    with pytest.raises(DatasetIOError, match="splits.csv"):
        import_dataset(tmp_path / "d")


def test_export_requires_split(tmp_path):
    cfg = SynthConfig(nodes=20, cascades=6, base_prob=0.3, seed=2)
    ds = synth_generate(cfg)
    with pytest.raises(DataError, match="split"):
        export_dataset(ds, tmp_path / "d")


def test_export_is_byte_deterministic(tmp_path):
    export_dataset(_full_dataset(), tmp_path / "a")
    export_dataset(_full_dataset(), tmp_path / "b")
    for name in ("graph.edges", "cascades.tsv", "personalities.csv",
                 "features.csv", "splits.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
