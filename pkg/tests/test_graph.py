import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridflock import scenarios
from gridflock.errors import AsymmetricAdjacency
from gridflock.graph import (Event, GraphSchedule, LossProcess, NoiseProcess, adjacency_at,
                             check_bounds, expanded_laplacian, expanded_laplacian_at, laplacian,
                             noise_factor, transmit, uniform_draw)
from gridflock.linalg import symmetric_eigenvalues

RING4_L = np.array([[2, -1, 0, -1], [-1, 2, -1, 0], [0, -1, 2, -1], [-1, 0, -1, 2]], float)


def ring(n=4, **kw):
    edges = tuple((i, (i + 1) % n, 1.0, 0.0) for i in range(n))
    kw.setdefault("reference_flags", (1,) + (0,) * (n - 1))
    return GraphSchedule(n_agents=n, edges=edges, **kw)


def lbar_oracle_eigs():
    # characteristic polynomial of the pinned ring-4, solved independently
    Lb = RING4_L + np.diag([1.0, 0, 0, 0])
    return np.sort(np.roots(np.poly(Lb)).real)


def test_ring_adjacency_any_time():
    g = ring()
    for t in (0.0, 0.37, 5.0):
        W = adjacency_at(g, t)
        for i in range(4):
            for j in range(4):
                assert W[i, j] == (1.0 if (i - j) % 4 in (1, 3) else 0.0)


def test_loss_process_on_off():
    g = ring(loss=(LossProcess((1, 2), period=0.1, duty=0.5, phase=0.0),))
    assert adjacency_at(g, 0.02)[1, 2] == 1.0
    assert adjacency_at(g, 0.07)[1, 2] == 0.0
    assert adjacency_at(g, 0.07)[2, 1] == 0.0
    # switching instants are right-continuous, including after roundoff
    assert adjacency_at(g, 0.05)[1, 2] == 0.0
    assert adjacency_at(g, 0.1)[1, 2] == 1.0
    assert adjacency_at(g, 0.3 - 1e-13)[1, 2] == 1.0


def test_loss_process_validation():
    with pytest.raises(ValueError):
        LossProcess((0, 1), period=0.0)
    with pytest.raises(ValueError):
        LossProcess((0, 1), duty=0.0)
    assert LossProcess((0, 1), duty=1.0).is_on(0.999)


def test_isolation_zeroes_row_and_column():
    g = ring(events=(Event(0.6, "isolate", {"agent": 2}),))
    assert np.any(adjacency_at(g, 0.59)[2] != 0)
    for t in (0.6, 0.61, 3.0):
        W = adjacency_at(g, t)
        assert np.all(W[2] == 0) and np.all(W[:, 2] == 0)


def test_edge_events():
    g = ring(events=(Event(0.5, "remove_edge", {"edge": [0, 1]}),
                     Event(1.0, "add_edge", {"edge": [0, 2], "weight": 3.0, "delay_s": 0.01}),
                     Event(1.5, "reweight", {"edge": [0, 2], "weight": 0.5}),
                     Event(2.0, "set_flag", {"agent": 3, "value": 1})))
    assert adjacency_at(g, 0.4)[0, 1] == 1 and adjacency_at(g, 0.5)[0, 1] == 0
    assert adjacency_at(g, 1.2)[2, 0] == 3.0
    assert adjacency_at(g, 1.6)[0, 2] == 0.5
    assert g.topology_at(1.6).delays[0, 2] == 0.01
    np.testing.assert_array_equal(g.flags_at(1.9), [1, 0, 0, 0])
    np.testing.assert_array_equal(g.flags_at(2.0), [1, 0, 0, 1])
    assert g.max_delay() == 0.01


def test_schedule_validation():
    with pytest.raises(ValueError):
        GraphSchedule(2, edges=((0, 0, 1.0, 0.0),), reference_flags=(1, 0))
    with pytest.raises(ValueError):
        GraphSchedule(2, edges=((0, 1, -1.0, 0.0),), reference_flags=(1, 0))
    with pytest.raises(ValueError):
        GraphSchedule(2, edges=((0, 1, 1.0, -0.1),), reference_flags=(1, 0))
    with pytest.raises(ValueError):
        GraphSchedule(2, reference_flags=(1, 0), events=(Event(1.0, "isolate", {"agent": 0}),
                                                          Event(0.5, "isolate", {"agent": 1})))


def test_ring_laplacian():
    np.testing.assert_array_equal(laplacian(adjacency_at(ring(), 0.0)), RING4_L)
    np.testing.assert_array_equal(laplacian(np.zeros((3, 3))), np.zeros((3, 3)))


def test_laplacian_rejects_bad_adjacency():
    with pytest.raises(AsymmetricAdjacency):
        laplacian(np.array([[0.0, 1.0], [0.5, 0.0]]))
    with pytest.raises(AsymmetricAdjacency):
        laplacian(np.array([[0.0, -1.0], [-1.0, 0.0]]))
    with pytest.raises(AsymmetricAdjacency):
        laplacian(np.array([[1.0, 1.0], [1.0, 0.0]]))


def test_expanded_laplacian_examples():
    Lb = expanded_laplacian(RING4_L, [1, 0, 0, 0])
    assert Lb[0, 0] == 3.0
    np.testing.assert_array_equal(Lb[1:, :], RING4_L[1:, :])
    w = symmetric_eigenvalues(Lb)
    np.testing.assert_allclose(w, lbar_oracle_eigs(), atol=1e-9)
    np.testing.assert_allclose(w, [0.185, 2.000, 2.470, 4.345], atol=3e-3)
    assert np.all(w > 0)
    np.testing.assert_array_equal(expanded_laplacian(RING4_L, [0, 0, 0, 0]), RING4_L)
    np.testing.assert_array_equal(expanded_laplacian(np.zeros((1, 1)), [1]), [[1.0]])


def test_check_bounds_examples():
    beta, gamma, ok = check_bounds(ring(), [0.0, 1.0])
    assert ok
    assert beta == pytest.approx(lbar_oracle_eigs()[0], abs=1e-9)
    assert gamma == pytest.approx(lbar_oracle_eigs()[-1], abs=1e-9)
    assert beta == pytest.approx(0.185, abs=3e-3) and gamma == pytest.approx(4.345, abs=3e-3)

    beta, _, ok = check_bounds(ring(reference_flags=(0, 0, 0, 0)), [0.0])
    assert beta == 0.0 and not ok

    g4 = scenarios.preset("scenario4").graph
    beta, _, ok = check_bounds(g4, g4.interval_sample_times(0.6, 2.0))
    assert beta == 0.0 and not ok
    with pytest.raises(ValueError):
        check_bounds(g4, [])


def test_interval_sampling_covers_every_loss_phase():
    g = ring(loss=(LossProcess((1, 2)),))
    ts = g.interval_sample_times(0.55, 0.8)
    assert ts[0] == pytest.approx(0.575) and len(ts) == 5
    on = [adjacency_at(g, t)[1, 2] for t in ts]
    assert on == [0.0, 1.0, 0.0, 1.0, 0.0]


def test_transmit_identity_without_noise():
    x = np.array([3.0, -1.5])
    np.testing.assert_array_equal(transmit(x, None, 0.1, 7), x)
    np.testing.assert_array_equal(transmit(x, NoiseProcess((0, 1), 0.0, 5), 0.1, 7), x)


def test_transmit_bounded_and_deterministic():
    nz = NoiseProcess((0, 1), 0.1, seed=42)
    x = np.array([2.0, -4.0])
    outs = np.array([transmit(x, nz, k * 1e-3, k) for k in range(2000)])
    again = np.array([transmit(x, nz, k * 1e-3, k) for k in range(2000)])
    np.testing.assert_array_equal(outs, again)
    ratio = outs / x
    assert np.all(ratio >= 0.9) and np.all(ratio <= 1.1)
    # the draw spans most of the interval and is centred
    assert ratio[:, 0].min() < 0.91 and ratio[:, 0].max() > 1.09
    assert abs(ratio[:, 0].mean() - 1.0) < 0.005


def test_noise_keys_are_independent():
    a = [uniform_draw(1, 0, 1, k) for k in range(50)]
    b = [uniform_draw(1, 1, 0, k) for k in range(50)]
    c = [uniform_draw(2, 0, 1, k) for k in range(50)]
    assert a != b and a != c
    assert len(set(a)) == 50
    # evaluation order does not matter: counter-based generator
    assert uniform_draw(1, 0, 1, 17) == a[17]
    assert noise_factor(None, 0, 1, 0) == 1.0


@st.composite
def random_graph(draw):
    n = draw(st.integers(1, 7))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True)) if pairs else []
    w = draw(st.lists(st.floats(0.1, 5.0), min_size=len(chosen), max_size=len(chosen)))
    flags = draw(st.lists(st.integers(0, 1), min_size=n, max_size=n))
    return n, [(i, j, wk, 0.0) for (i, j), wk in zip(chosen, w)], flags


def _connected(n, edges):
    seen, stack = {0}, [0]
    adj = {i: set() for i in range(n)}
    for i, j, _, _ in edges:
        adj[i].add(j)
        adj[j].add(i)
    while stack:
        for j in adj[stack.pop()] - seen:
            seen.add(j)
            stack.append(j)
    return len(seen) == n


@settings(max_examples=80, deadline=None)
@given(random_graph())
def test_laplacian_properties(g):
    n, edges, flags = g
    sched = GraphSchedule(n, edges=tuple(edges), reference_flags=tuple(flags))
    W = adjacency_at(sched, 0.0)
    L = laplacian(W)
    np.testing.assert_array_equal(L, L.T)
    assert np.all(np.abs(L.sum(axis=1)) <= 1e-12)
    wl = symmetric_eigenvalues(L)
    assert wl[0] >= -1e-10
    Lb = expanded_laplacian_at(sched, 0.0)
    np.testing.assert_array_equal(Lb, Lb.T)
    wb = symmetric_eigenvalues(Lb)
    assert wb[0] >= wl[0] - 1e-12
    if _connected(n, edges) and any(flags):
        assert wb[0] > 0


@settings(max_examples=40, deadline=None)
@given(random_graph(), st.integers(0, 6))
def test_isolated_block_stays_positive(g, k):
    n, edges, flags = g
    flags = [1] + flags[1:]
    iso = k % n
    if iso == 0 or n < 2:
        return
    sched = GraphSchedule(n, edges=tuple(edges), reference_flags=tuple(flags),
                          events=(Event(0.0, "isolate", {"agent": iso}),))
    keep = [i for i in range(n) if i != iso]
    rest = [(i, j, w, t) for i, j, w, t in edges if iso not in (i, j)]
    remap = {a: b for b, a in enumerate(keep)}
    sub_edges = [(remap[i], remap[j], w, t) for i, j, w, t in rest]
    Lb = expanded_laplacian_at(sched, 0.1)
    assert np.all(Lb[iso] == 0)
    if _connected(n - 1, sub_edges):
        block = Lb[np.ix_(keep, keep)]
        assert symmetric_eigenvalues(block)[0] > 0
