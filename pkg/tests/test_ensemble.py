import numpy as np
import pytest
from hypothesis import given, strategies as st

from scldpc.ensemble import (
    EnsembleParams, Kind, read_graph, sample_erasures, sample_graph, write_graph,
)


def small_params():
    return st.builds(
        lambda dv, k, L, n, kind: EnsembleParams(dv, k * dv, L, n * k, kind),
        st.integers(2, 5), st.integers(2, 3), st.integers(1, 8), st.integers(1, 6),
        st.sampled_from(list(Kind)),
    )


def test_param_validation():
    with pytest.raises(ValueError):
        EnsembleParams(1, 4, 5, 10)
    with pytest.raises(ValueError):
        EnsembleParams(4, 4, 5, 10)
    with pytest.raises(ValueError):
        EnsembleParams(3, 6, 5, 7)  # dv*N/dc not integral
    p = EnsembleParams(5, 10, 50, 1000)
    assert p.M == 500
    assert p.n_cn_positions == 54
    assert EnsembleParams(5, 10, 50, 1000, "truncated").n_cn_positions == 50


def test_terminated_example_counts():
    g = sample_graph(EnsembleParams(5, 10, 50, 1000), seed=1)
    assert g.n_vns == 50_000
    assert g.n_cns == 54 * 500
    assert np.all(g.vn_degree() == 5)
    deg = g.cn_degree().reshape(54, 500)
    # interior CN positions see dv feeding VN positions
    assert np.all(deg[4:50] == 10)
    assert deg.sum() == g.n_edges == 250_000


def test_truncated_example_counts():
    g = sample_graph(EnsembleParams(5, 10, 50, 1000, Kind.TRUNCATED), seed=1)
    vdeg = g.vn_degree().reshape(50, 1000)
    # the last dv-1 VN positions lose the edges that would leave the chain
    for i in range(50):
        assert np.all(vdeg[i] == min(5, 50 - i))
    assert np.all(g.cn_degree().reshape(50, 500)[4:] == 10)


@given(small_params(), st.integers(0, 2**32))
def test_structure_invariants(p, seed):
    g = sample_graph(p, seed)
    pos = g.vn_position[:, None] + np.arange(p.dv)[None, :]
    ok = g.vn_cns >= 0
    # edge k of a VN at position i lands in CN position i + k
    assert np.all(g.vn_cns[ok] // p.M == pos[ok])
    assert np.all(ok == (pos < p.n_cn_positions))
    # each VN position sends exactly N edges into each CN position it reaches
    cnpos = g.edges[:, 1] // p.M
    vpos = g.edges[:, 0] // p.N
    counts = np.zeros((p.L, p.n_cn_positions), int)
    np.add.at(counts, (vpos, cnpos), 1)
    for i in range(p.L):
        for j in range(p.n_cn_positions):
            assert counts[i, j] == (p.N if 0 <= j - i < p.dv else 0)
    assert g.cn_degree().max() <= p.dc
    # no repeated CN within one VN
    for row in g.vn_cns:
        r = row[row >= 0]
        assert len(set(r.tolist())) == len(r)


@given(small_params(), st.integers(0, 2**32))
def test_seed_determinism(p, seed):
    assert sample_graph(p, seed).same_as(sample_graph(p, seed))


def test_different_seeds_differ():
    p = EnsembleParams(3, 6, 5, 20)
    assert not sample_graph(p, 1).same_as(sample_graph(p, 2))


def test_independent_construction_structure():
    p = EnsembleParams(3, 6, 6, 10, Kind.TRUNCATED)
    g = sample_graph(p, 3, construction="independent")
    pos = g.vn_position[:, None] + np.arange(3)[None, :]
    ok = g.vn_cns >= 0
    assert np.all(g.vn_cns[ok] // p.M == pos[ok])
    with pytest.raises(ValueError):
        sample_graph(p, 3, construction="nope")


def test_erasures():
    assert not sample_erasures(100, 0.0, 1).erased.any()
    assert sample_erasures(100, 1.0, 1).erased.all()
    e = sample_erasures(200_000, 0.3, 7)
    assert abs(e.n_erased / 200_000 - 0.3) < 0.005
    with pytest.raises(ValueError):
        sample_erasures(10, 1.5)


def test_graph_roundtrip(tmp_path):
    for kind in Kind:
        g = sample_graph(EnsembleParams(4, 8, 6, 10, kind), seed=5)
        write_graph(g, tmp_path / "g.txt")
        assert read_graph(tmp_path / "g.txt").same_as(g)


def test_cn_adjacency_matches_edges():
    g = sample_graph(EnsembleParams(3, 6, 4, 8), seed=2)
    indptr, vns = g.cn_adjacency()
    for c in range(g.n_cns):
        expect = sorted(np.flatnonzero((g.vn_cns == c).any(axis=1)).tolist())
        assert sorted(vns[indptr[c]:indptr[c + 1]].tolist()) == expect
