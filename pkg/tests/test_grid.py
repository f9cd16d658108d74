import numpy as np
import pytest

from kfplab.grid import boundary_geometry, core_region, make_grid


def test_nodes_cell_centered():
    g = make_grid(L=2.0, V=3.0, Nx=4, Nv=6)
    assert g.dx == 0.5 and g.dv == 1.0
    np.testing.assert_allclose(g.x_nodes, [0.25, 0.75, 1.25, 1.75])
    np.testing.assert_allclose(g.v_nodes, [-2.5, -1.5, -0.5, 0.5, 1.5, 2.5])
    assert g.cell_volume == 0.5
    assert g.size == 24


def test_mirror_is_exact_bitwise():
    g = make_grid(L=1.0, V=4.7, Nx=2, Nv=10)
    j = np.arange(g.Nv)
    # bit-for-bit, not approximately: the specular closure relies on it
    assert np.all(g.v_nodes[g.mirror_index(j)] == -g.v_nodes[j])
    assert not np.any(g.v_nodes == 0.0)


def test_flat_index_row_major():
    g = make_grid(1.0, 1.0, 3, 4)
    assert g.flat_index(0, 0) == 0
    assert g.flat_index(1, 0) == 4
    assert g.flat_index(2, 3) == 11


def test_validation_errors():
    with pytest.raises(ValueError, match="positive"):
        make_grid(-1.0, 1.0, 4, 4)
    with pytest.raises(ValueError, match="even"):
        make_grid(1.0, 1.0, 4, 5)
    with pytest.raises(ValueError, match="Nx >= 1"):
        make_grid(1.0, 1.0, 0, 4)


def test_boundary_geometry_sets():
    g = make_grid(1.0, 2.0, 5, 6)
    geom = boundary_geometry(g)
    assert geom.left.normal == -1.0 and geom.right.normal == 1.0
    # incoming at the left wall means moving into the domain: v > 0
    assert np.all(g.v_nodes[geom.left.incoming] > 0)
    assert np.all(g.v_nodes[geom.right.incoming] < 0)
    assert geom.left.cell_index == 0 and geom.right.cell_index == 4
    # incoming/outgoing partition all velocity nodes
    assert sorted([*geom.left.incoming, *geom.left.outgoing]) == list(range(6))


def test_delta_and_normal_extension():
    g = make_grid(2.0, 1.0, 4, 4)
    np.testing.assert_allclose(g.delta(g.x_nodes), [0.25, 0.75, 0.75, 0.25])
    np.testing.assert_allclose(g.normal_extension(g.x_nodes), [-1, -1, 1, 1])


def test_core_region_counts():
    g = make_grid(1.0, 4.0, 8, 8)
    # eps = 1/8: x nodes at 1/16 + k/8; delta > 1/8 keeps the 6 interior
    # columns; 1/eps = 8 > V keeps all velocities.
    core = core_region(g, 1.0 / 8.0)
    assert core.count == 6 * 8
    assert not core.empty
    # huge eps empties the region but does not raise
    assert core_region(g, 10.0).empty
    with pytest.raises(ValueError):
        core_region(g, 0.0)
