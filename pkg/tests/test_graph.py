import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from rfgesture.graph import build_temporal_knn_graph, build_tensor, knn_sources, write_edge_list
from rfgesture.ingest import Dataframe


def _dfs(rng, n=8, length=30, order=None):
    order = range(1, n + 1) if order is None else order
    base = {e: (rng.normal(size=length), rng.normal(size=length)) for e in range(1, n + 1)}
    return [Dataframe(e, np.arange(length, dtype=float), *base[e]) for e in order]


def test_build_tensor_shape_zero_and_order():
    rng = np.random.default_rng(0)
    t = build_tensor(_dfs(rng), n_tags=8)
    assert t.shape == (30, 8, 2)
    rng = np.random.default_rng(0)
    shuffled = build_tensor(_dfs(rng, order=[3, 1, 8, 2, 7, 5, 4, 6]), n_tags=8)
    assert shuffled.tobytes() == t.tobytes()
    zeros = [Dataframe(e, np.zeros(30), np.zeros(30), np.zeros(30)) for e in range(1, 9)]
    assert not build_tensor(zeros).any()


def test_build_tensor_rejects_bad_lengths():
    rng = np.random.default_rng(0)
    dfs = _dfs(rng)
    dfs[3] = Dataframe(4, np.arange(29.0), np.zeros(29), np.zeros(29))
    with pytest.raises(ValueError):
        build_tensor(dfs)
    with pytest.raises(ValueError):
        build_tensor(_dfs(rng)[:7], n_tags=8)


def test_two_node_example():
    x = np.array([[[0, 0], [10, 10]], [[1, 0], [9, 10]]], dtype=float)
    g = build_temporal_knn_graph(x, k=1)
    assert g.edges() == [(1, 1, 2, 1), (1, 2, 2, 2)]


def test_complete_bipartite_when_k_is_n():
    x = np.random.default_rng(1).normal(size=(6, 4, 2))
    g = build_temporal_knn_graph(x, k=4)
    assert len(g.edges()) == 5 * 4 * 4
    assert set(g.edges()) == {(t, i, t + 1, j) for t in range(1, 6) for i in range(1, 5) for j in range(1, 5)}


def test_identical_features_tie_to_first_epc():
    g = build_temporal_knn_graph(np.ones((5, 8, 2)), k=1)
    assert {e[1] for e in g.edges()} == {1}


def test_k_bounds():
    x = np.zeros((3, 8, 2))
    for k in (0, 9):
        with pytest.raises(ValueError):
            build_temporal_knn_graph(x, k)


@given(st.integers(0, 10_000), st.integers(2, 12), st.integers(1, 8), st.booleans())
def test_matches_bruteforce(seed, T, N, integer_valued):
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 3, size=(T, N, 2)).astype(float) if integer_valued else rng.normal(size=(T, N, 2))
    k = int(rng.integers(1, N + 1))
    g = build_temporal_knn_graph(x, k)
    assert g.edges() == oracles.knn_edges(x, k)
    # DAG with exact in-degree k
    assert all(e[2] == e[0] + 1 for e in g.edges())
    assert g.n_nodes == T * N and len(g.edges()) == (T - 1) * N * k
    deg = g.in_degree()
    assert (deg[0] == 0).all() and (deg[1:] == k).all()


def test_batched_sources_match_single():
    x = np.random.default_rng(2).normal(size=(4, 10, 8, 2))
    batch = knn_sources(x, 3)
    assert batch.shape == (4, 9, 8, 3)
    for b in range(4):
        assert batch[b].tobytes() == knn_sources(x[b], 3).tobytes()
        assert knn_sources(x[b], 3).tobytes() == knn_sources(x[b].copy(), 3).tobytes()


def test_edge_list_file(tmp_path):
    x = np.array([[[0, 0], [10, 10]], [[1, 0], [9, 10]]], dtype=float)
    write_edge_list(tmp_path / "g.csv", build_temporal_knn_graph(x, 1))
    assert (tmp_path / "g.csv").read_text() == "t_src,epc_src,t_dst,epc_dst\n1,1,2,1\n1,2,2,2\n"
