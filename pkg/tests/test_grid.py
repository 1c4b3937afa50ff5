import numpy as np
import pytest

from sobolev_gauge.grid import (GridField, Lattice, cell_corners_all, cell_gradient,
                                forward_gradient, max_workers)


def test_lattice_covering_and_anchored():
    lat = Lattice.covering((0, 0), (1, 0.5), 0.25)
    assert lat.shape == (5, 3)
    assert np.allclose(lat.point((4, 2)), (1.0, 0.5))
    anc = Lattice.anchored((-0.3, 0.1), (0.3, 0.2), 0.25)
    # anchored lattices sit on h Z^n
    assert np.allclose(np.asarray(anc.lo) / 0.25, np.round(np.asarray(anc.lo) / 0.25))
    assert anc.axes()[0][0] <= -0.3 and anc.axes()[0][-1] >= 0.3
    with pytest.raises(ValueError):
        Lattice.covering((0, 0), (1, 1), 0.0)


def test_gradients_exact_on_linear_data():
    lat = Lattice.covering((0, 0), (1, 1), 0.1)
    pts = lat.points()
    f = 3 * pts[..., 0] - 2 * pts[..., 1]
    for g in (cell_gradient(f, 0.1), forward_gradient(f, 0.1)):
        assert g.shape == (10, 10, 2)
        assert np.allclose(g[..., 0], 3) and np.allclose(g[..., 1], -2)


def test_cell_gradient_propagates_nan():
    v = np.zeros((3, 3))
    v[0, 0] = np.nan
    g = cell_gradient(v, 1.0)
    assert np.isnan(g[0, 0]).all() and not np.isnan(g[1, 1]).any()


def test_cell_corners_all():
    m = np.ones((4, 4), dtype=bool)
    m[1, 1] = False
    cells = cell_corners_all(m)
    assert cells.sum() == 9 - 4


def test_grid_field_lookup():
    lat = Lattice.covering((0, 0), (1, 1), 0.5)
    vals = np.arange(9.0).reshape(3, 3)
    mask = np.ones((3, 3), dtype=bool)
    mask[2, 2] = False
    f = GridField(lat, vals, mask)
    assert f.at((0.5, 1.0)) == 5.0
    assert np.isnan(f.at((1.0, 1.0)))
    with pytest.raises(IndexError):
        f.at((3.0, 0.0))
    with pytest.raises(ValueError):
        GridField(lat, vals[:2], mask)


def test_max_workers_env(monkeypatch):
    monkeypatch.setenv("SOBOLEV_GAUGE_THREADS", "3")
    assert max_workers() == 3
    monkeypatch.setenv("SOBOLEV_GAUGE_THREADS", "junk")
    assert max_workers() == 1
