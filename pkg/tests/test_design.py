import numpy as np
import pytest

from conftest import rand_herm
from mfcsim.design import (
    DEFAULT_ALPHA_GRID,
    ControlGraph,
    DesignProblem,
    build_A,
    components,
    control_graph,
    design_report,
    find_alpha,
    is_connected,
    krylov_rows,
    numerical_rank,
    path_hb,
    rank_condition,
)
from mfcsim.states import SystemModel, TargetState

SX = np.array([[0, 1], [1, 0]])


def qubit(alpha_model=True):
    return SystemModel(np.diag([0.0, 1.0]), SX, np.diag([1.0, -1.0]))


def block_hb(rng, sizes):
    n = sum(sizes)
    h = np.zeros((n, n), dtype=complex)
    k = 0
    for s in sizes:
        h[k : k + s, k : k + s] = rand_herm(rng, s)
        k += s
    return h


def test_default_grid():
    assert len(DEFAULT_ALPHA_GRID) == 41
    assert DEFAULT_ALPHA_GRID[0] == -10 and DEFAULT_ALPHA_GRID[-1] == 10
    assert 0.0 in DEFAULT_ALPHA_GRID


def test_build_a_examples(rng):
    m = SystemModel(np.diag([0.0, 2.0, 5.0]), np.zeros((3, 3)), np.diag([1.0, 2.0, 3.0]))
    A = build_A(m, 1.5).A
    assert np.allclose(A, np.diag(np.diag(A)))
    hb = rand_herm(rng, 3)
    l = np.diag([0.5, -1.0, 2.0])
    m = SystemModel(np.zeros((3, 3)), hb, l)
    assert np.allclose(build_A(m, 0.0).A, -1j * hb - l.conj().T @ l)
    assert np.allclose(build_A(qubit(), 0.0).A, [[-1, -1j], [-1j, -1 - 1j]])


def test_build_a_off_diagonal_is_minus_i_hb_for_diagonal_l(rng):
    hb = rand_herm(rng, 4)
    m = SystemModel(np.diag([0.0, 1.0, 2.0, 4.0]), hb, np.diag(rng.normal(size=4)), kappa=2.0)
    A = build_A(m, 3.0).A
    off = ~np.eye(4, dtype=bool)
    assert np.allclose(A[off], (-1j * hb)[off])


def test_design_problem_rejects_inconsistent_a():
    m = qubit()
    with pytest.raises(ValueError):
        DesignProblem(m, 0.0, np.zeros((2, 2)))


def test_rank_condition_examples(rng):
    m = SystemModel(np.diag([0.0, 1.0, 3.0]), np.zeros((3, 3)), np.diag([1.0, 2.0, 3.0]))
    for d in (1, 2, 3):
        assert not rank_condition(build_A(m, 0.7), TargetState(d, 3))
    for a in DEFAULT_ALPHA_GRID:
        assert rank_condition(build_A(qubit(), a), TargetState(1, 2))
    mb = SystemModel(np.diag([0.0, 1.0, 2.5, 4.0]), block_hb(rng, [2, 2]), np.diag([1.0, -1.0, 0.5, 2.0]))
    for a in DEFAULT_ALPHA_GRID:
        assert not rank_condition(build_A(mb, a), TargetState(1, 4))


def test_rank_invariant_under_phase_and_scaling(rng):
    m = SystemModel(np.diag([0.0, 1.0, 2.2]), path_hb(3, [0.8, 1.3]), np.diag([1.0, -0.4, 0.3]))
    A = build_A(m, 1.0).A
    psi = TargetState(2, 3).vector
    r = numerical_rank(krylov_rows(A, psi))
    for c in (2.5, -0.3, 1j, 3 - 4j):
        assert numerical_rank(krylov_rows(c * A, psi)) == r
        assert numerical_rank(krylov_rows(A, np.exp(1j * 0.7) * psi)) == r


def test_numerical_rank_basics():
    assert numerical_rank(np.zeros((3, 3))) == 0
    assert numerical_rank(np.diag([1, 1e-12, 0])) == 1
    assert numerical_rank(np.eye(4)) == 4


def test_control_graph_examples(rng):
    assert control_graph(np.zeros((3, 3))).edges == frozenset()
    anti = np.fliplr(np.eye(4))
    sec = np.diag(np.ones(3), 1) + np.diag(np.ones(3), -1)
    g = control_graph(sec)
    assert g.edge_list() == [(1, 2), (2, 3), (3, 4)]
    assert g.neighbours(2) == [1, 3]
    g2 = control_graph(block_hb(rng, [2, 2]))
    assert components(g2) == [[1, 2], [3, 4]]
    assert control_graph(anti).edge_list() == [(1, 4), (2, 3)]
    assert control_graph(np.diag([0, 1e-13]) + 1e-13 * np.ones((2, 2))).edges == frozenset()


def test_control_graph_ignores_diagonal(rng):
    h = np.diag([1.0, 2.0, 3.0])
    assert control_graph(h).edges == frozenset()


def test_control_graph_rejects_bad_edges():
    with pytest.raises(ValueError):
        ControlGraph(3, frozenset({(1, 1)}))
    with pytest.raises(ValueError):
        ControlGraph(3, frozenset({(1, 4)}))


def test_is_connected_examples(rng):
    assert is_connected(control_graph(path_hb(4, [1, 2, 3])))
    assert not is_connected(control_graph(np.zeros((3, 3))))
    assert not is_connected(control_graph(block_hb(rng, [2, 2])))
    assert is_connected(control_graph(np.zeros((1, 1))))


def test_path_hb_examples():
    assert np.array_equal(path_hb(2, [1]).data, SX)
    h = path_hb(3, [1, 1]).data
    assert np.array_equal(h, [[0, 1, 0], [1, 0, 1], [0, 1, 0]])
    assert is_connected(control_graph(path_hb(5, [1, -2, 0.5, 3])))
    with pytest.raises(ValueError):
        path_hb(3, [1, 0])
    with pytest.raises(ValueError):
        path_hb(3, [1])


def test_path_hb_complex_weights_hermitian():
    h = path_hb(3, [1j, 2 - 1j]).data
    assert np.allclose(h, h.conj().T)
    assert h[0, 1] == 1j and h[1, 0] == -1j


def test_find_alpha_examples(rng):
    m = SystemModel(np.diag([0.0, 1.0, 2.5]), path_hb(3, [1, 1]), np.diag([1.0, 0.0, -1.0]))
    assert find_alpha(m) is not None
    assert find_alpha(SystemModel(np.diag([0.0, 1.0]), np.zeros((2, 2)), np.diag([1.0, -1.0]))) is None
    mb = SystemModel(np.diag([0.0, 1.0, 2.5, 4.0]), block_hb(rng, [2, 2]), np.diag([1.0, -1.0, 0.5, 2.0]))
    assert find_alpha(mb) is None
    with pytest.raises(ValueError):
        find_alpha(m, [])


def test_necessity_over_random_disconnected_channels(rng):
    for k in range(200):
        n = 3 + k % 3
        cut = int(rng.integers(1, n))
        hb = block_hb(rng, [cut, n - cut])
        perm = rng.permutation(n)
        hb = hb[np.ix_(perm, perm)]
        m = SystemModel(np.diag(np.sort(rng.normal(size=n))), hb, np.diag(rng.normal(size=n)))
        assert not is_connected(control_graph(hb))
        assert find_alpha(m) is None


def test_design_report_contents():
    rep = design_report(qubit())
    assert rep["alpha"] == -10.0
    assert rep["edges"] == [[1, 2]]
    assert rep["connected"] is True
    assert [r["d"] for r in rep["per_eigenstate"]] == [1, 2]
    assert rep["commuting_channel"] is True
