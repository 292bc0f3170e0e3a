import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from overshoot.mesh1d import (Mesh1D, OutOfDomain, SpaceKind1D, bisect, coarsen, cut_position,
                              merge, read_mesh, write_mesh)

increasing = st.lists(st.floats(-10, 10, allow_nan=False), min_size=2, max_size=15, unique=True) \
    .map(sorted).filter(lambda x: np.all(np.diff(x) > 1e-6))


def test_rejects_bad_nodes():
    with pytest.raises(ValueError):
        Mesh1D([0.0])
    with pytest.raises(ValueError):
        Mesh1D([0.0, 1.0, 1.0])
    with pytest.raises(ValueError):
        Mesh1D([0.0, 1.0], paths=[(0,), (1,)])


def test_dof_counts():
    m = Mesh1D.uniform(0, 1, 5)
    assert [k.ndofs(m) for k in SpaceKind1D] == [5, 10, 6, 4]


def test_bisect_moves_cut_from_one_third_to_two_thirds():
    m = Mesh1D([-1 / 3, 2 / 3])
    assert cut_position(m, 0.0) == (0, pytest.approx(1 / 3))
    m2 = bisect(m, {0})
    assert np.allclose(m2.nodes, [-1 / 3, 1 / 6, 2 / 3])
    k, t = cut_position(m2, 0.0)
    assert k == 0 and t == pytest.approx(2 / 3)


def test_bisect_nothing_and_everything():
    m = Mesh1D.uniform(0, 1, 4)
    assert bisect(m, set()) is m
    assert np.allclose(bisect(m, range(4)).nodes, np.linspace(0, 1, 9))


def test_bisect_rejects_bad_ids():
    with pytest.raises(IndexError):
        bisect(Mesh1D.uniform(0, 1, 2), {2})


def test_coarsen_needs_both_siblings():
    m = bisect(Mesh1D.uniform(0, 1, 2), {0})
    assert coarsen(m, {0}) == m
    assert coarsen(m, {0, 1}) == Mesh1D.uniform(0, 1, 2)
    # roots never merge
    assert coarsen(Mesh1D.uniform(0, 1, 2), {0, 1}) == Mesh1D.uniform(0, 1, 2)


@given(nodes=increasing, rounds=st.integers(1, 3))
def test_refine_coarsen_round_trip(nodes, rounds):
    m = Mesh1D(nodes)
    r = m
    for _ in range(rounds):
        r = bisect(r, range(r.n_elements))
    for _ in range(rounds):
        r = coarsen(r, range(r.n_elements))
    assert r == m
    assert np.array_equal(r.nodes, m.nodes)


@given(nodes=increasing, data=st.data())
def test_lengths_sum_and_sibling_structure(nodes, data):
    m = Mesh1D(nodes)
    length = m.nodes[-1] - m.nodes[0]
    for _ in range(6):
        ids = data.draw(st.sets(st.integers(0, m.n_elements - 1)))
        m = bisect(m, ids) if data.draw(st.booleans()) else coarsen(m, ids)
        assert abs(m.h.sum() - length) <= 1e-14 * abs(length) + 1e-15
        # every non-root element has exactly one sibling
        paths = set(m.paths)
        for p in m.paths:
            if len(p) > 1:
                sib = p[:-1] + (1 - p[-1],)
                descendants = [q for q in paths if q[:len(sib)] == sib]
                assert descendants


def test_merge_collapses_runs():
    m = Mesh1D.uniform(0, 1, 5)
    out = merge(m, {1, 2, 3})
    assert np.allclose(out.nodes, [0, 0.2, 0.8, 1])
    assert merge(m, {0, 2, 4}) is m


def test_merge_of_siblings_restores_parent():
    m = Mesh1D.uniform(0, 1, 2)
    assert merge(bisect(m, {1}), {1, 2}) == m


def test_cut_position_matched_convention():
    m = Mesh1D([0, 1, 2, 3])
    assert cut_position(m, 1.0) == (1, 0.0)
    assert cut_position(m, 3.0) == (2, 1.0)
    with pytest.raises(OutOfDomain):
        cut_position(m, 3.5)


@given(nodes=increasing, s=st.floats(0, 1))
def test_cut_position_recomputed(nodes, s):
    m = Mesh1D(nodes)
    x0 = m.nodes[0] + s * (m.nodes[-1] - m.nodes[0])
    k, t = cut_position(m, x0)
    a, b = m.nodes[k], m.nodes[k + 1]
    assert a <= x0 <= b
    assert t == pytest.approx((x0 - a) / (b - a), abs=1e-12)


def test_mesh_file_round_trip(tmp_path):
    m = Mesh1D([0, 1 / 3, 0.5, 1])
    path = tmp_path / "m.txt"
    write_mesh(m, path)
    assert path.read_text().splitlines()[0] == "mesh1d 4"
    assert np.array_equal(read_mesh(path).nodes, m.nodes)


def test_mesh_file_count_mismatch(tmp_path):
    path = tmp_path / "m.txt"
    path.write_text("mesh1d 3\n0\n1\n")
    with pytest.raises(ValueError):
        read_mesh(path)
