import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import dense_oracle
from nwnrc.circuit import EdgeState, MemristorParams
from nwnrc.graph import generate_random_graph
from nwnrc.reservoir import (
    Reservoir,
    ReservoirWiring,
    WiringError,
    drive,
    make_wiring,
    read_wiring,
    routed_wiring,
    write_wiring,
)

P = MemristorParams()


@given(n=st.integers(8, 60), seed=st.integers(0, 2**31), n_in=st.integers(1, 4), n_gnd=st.integers(1, 2))
def test_wiring_partition(n, seed, n_in, n_gnd):
    g = generate_random_graph(n, n + 3, seed)
    w = make_wiring(g, n_in, n_gnd, 3, 1.0, 0.05, seed)
    every = np.concatenate((w.input_nodes, w.ground_nodes, w.readout_nodes))
    assert sorted(every.tolist()) == list(range(n))
    assert w.W_in.shape == (n_in, 3) and np.all(np.abs(w.W_in) <= 1.0)
    assert np.all(np.abs(w.b_in) <= 0.05)
    same = make_wiring(g, n_in, n_gnd, 3, 1.0, 0.05, seed)
    assert all(np.array_equal(getattr(w, f), getattr(same, f))
               for f in ("input_nodes", "ground_nodes", "readout_nodes", "W_in", "b_in"))


def test_lorenz_wiring_shape():
    g = generate_random_graph(500, 9905, 1)
    w = make_wiring(g, 24, 1, 3, 1.0, 0.05, 9)
    assert w.W_in.shape == (24, 3) and len(set(w.input_nodes.tolist())) == 24
    assert w.n_readouts == 475


def test_zero_win_is_constant_drive():
    g = generate_random_graph(20, 40, 1)
    w = make_wiring(g, 3, 1, 3, 0.0, 0.05, 2)
    for u in np.random.default_rng(0).normal(size=(5, 3)):
        assert np.array_equal(w.boundary_voltages(u)[:3], w.b_in)


def test_wiring_validation():
    with pytest.raises(WiringError):
        ReservoirWiring([0, 1], [1], [2], np.ones((2, 1)), np.zeros(2))
    with pytest.raises(WiringError):
        ReservoirWiring([0], [1], [2], np.ones((2, 1)), np.zeros(2))
    with pytest.raises(WiringError):
        ReservoirWiring([0], [], [2], np.ones((1, 1)), np.zeros(1))
    g = generate_random_graph(5, 6, 0)
    with pytest.raises(WiringError):
        make_wiring(g, 3, 2, 1, 1.0, 0.0, 0)
    with pytest.raises(WiringError):
        Reservoir(g, ReservoirWiring([0], [1], [2], np.ones((1, 1)), np.zeros(1)), P, 0.01)
    w = make_wiring(g, 1, 1, 1, 1.0, 0.0, 0)
    assert w.W_in.flags.writeable is False


def test_wiring_round_trip(tmp_path):
    g = generate_random_graph(50, 100, 3)
    w = make_wiring(g, 7, 2, 3, 1.0, 0.05, 2**62 + 1)
    write_wiring(w, tmp_path / "w.json")
    back = read_wiring(tmp_path / "w.json")
    assert back.seed == w.seed
    assert np.array_equal(back.W_in, w.W_in) and np.array_equal(back.b_in, w.b_in)
    assert np.array_equal(back.readout_nodes, w.readout_nodes)


def test_quiescent_drive(backend):
    g = generate_random_graph(30, 60, 1)
    w = make_wiring(g, 4, 1, 3, 1.0, 0.0, 5)
    res = Reservoir(g, w, P, 0.005, backend=backend)
    tr = res.drive(np.zeros((20, 3)))
    assert np.all(tr.readouts == 0.0) and np.all(tr.activity == 0.0)
    assert np.all(tr.mean_g == P.g_off)


def test_routed_readout_is_node_voltage(backend):
    g = generate_random_graph(30, 60, 2)
    w = routed_wiring(g, 3, 1, 4)
    res = Reservoir(g, w, P, 0.005, backend=backend)
    u = np.array([0.3, -0.2, 0.1])
    state = res.edge_state
    r = res.step(u)
    pinned = list(w.input_nodes) + list(w.ground_nodes)
    v = dense_oracle(30, g.edges, state.g, pinned, [0.3, -0.2, 0.1, 0.0])
    assert np.allclose(r, v[w.readout_nodes], atol=1e-12)


def test_frozen_conductance_has_no_memory(backend):
    # with no edge dynamics the readout is a fixed linear map of the current input
    p = MemristorParams(k_grow=0.0, k_decay=0.0)
    g = generate_random_graph(25, 50, 3)
    w = make_wiring(g, 3, 1, 2, 1.0, 0.0, 1)
    res = Reservoir(g, w, p, 0.005, backend=backend)
    U = np.random.default_rng(1).normal(size=(30, 2))
    R = res.drive(U).readouts
    M = np.linalg.lstsq(U, R, rcond=None)[0]
    assert np.allclose(U @ M, R, atol=1e-11)


def test_session_continuation_matches_single_drive(backend):
    g = generate_random_graph(40, 100, 4)
    w = make_wiring(g, 5, 1, 3, 1.0, 0.05, 2)
    U = 0.2 * np.random.default_rng(2).normal(size=(60, 3))
    whole, end = drive(g, w, None, U, 0.005, MemristorParams(k_grow=50.0), backend)
    a, mid = drive(g, w, None, U[:25], 0.005, MemristorParams(k_grow=50.0), backend)
    b, end2 = drive(g, w, mid, U[25:], 0.005, MemristorParams(k_grow=50.0), backend)
    assert np.allclose(np.vstack((a.readouts, b.readouts)), whole.readouts, atol=1e-12)
    assert np.allclose(end.s, end2.s, atol=1e-13)


def test_backends_agree():
    from nwnrc import kernels
    if not kernels.HAVE_COMPILED:
        pytest.skip("compiled kernel not built")
    g = generate_random_graph(200, 2000, 5)
    w = make_wiring(g, 24, 1, 3, 1.0, 0.05, 3)
    U = 0.2 * np.random.default_rng(3).normal(size=(300, 3))
    p = MemristorParams(k_grow=50.0, k_decay=1.0)
    a, sa = drive(g, w, None, U, 0.005, p, "python")
    b, sb = drive(g, w, None, U, 0.005, p, "compiled")
    assert np.allclose(a.readouts, b.readouts, atol=1e-10)
    assert np.allclose(sa.s, sb.s, atol=1e-9)
    assert np.array_equal(a.activity, b.activity)


def test_drive_validation():
    g = generate_random_graph(10, 15, 0)
    res = Reservoir(g, make_wiring(g, 2, 1, 3, 1.0, 0.0, 0), P, 0.01)
    with pytest.raises(ValueError):
        res.drive(np.zeros((5, 2)))
    with pytest.raises(ValueError):
        res.drive(np.full((5, 3), np.nan))


def test_reset_restores_start(backend):
    g = generate_random_graph(30, 70, 6)
    w = make_wiring(g, 4, 1, 3, 1.0, 0.05, 6)
    res = Reservoir(g, w, P, 0.005, backend=backend)
    U = 0.3 * np.random.default_rng(4).normal(size=(40, 3))
    first = res.drive(U).readouts
    res.reset()
    assert res.t == 0 and np.all(res.edge_state.s == 0)
    assert np.array_equal(res.drive(U).readouts, first)


def test_grounds_read_zero_and_are_excluded(backend):
    g = generate_random_graph(30, 60, 7)
    w = make_wiring(g, 4, 3, 3, 1.0, 0.05, 7)
    res = Reservoir(g, w, P, 0.005, backend=backend)
    res.drive(0.3 * np.ones((5, 3)))
    assert np.all(res.session.voltages[w.ground_nodes] == 0.0)
    assert not set(w.readout_nodes.tolist()) & set(w.pinned.tolist())


def test_memory_without_reset(backend):
    g = generate_random_graph(30, 60, 8)
    w = make_wiring(g, 4, 1, 3, 1.0, 0.05, 8)
    res = Reservoir(g, w, MemristorParams(k_grow=50.0), 0.005, backend=backend)
    U = 0.3 * np.random.default_rng(5).normal(size=(50, 3))
    a = res.drive(U).readouts
    assert np.any(res.edge_state.s > 0)
    b = res.drive(U).readouts
    assert not np.array_equal(a, b)
