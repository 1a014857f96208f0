import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ilscape import shapes
from ilscape.geometry import poisson_disk_sample
from ilscape.sensor_grid import (
    InteractionSpace,
    SensorGridError,
    build_sensor_tree,
    build_space,
    locate,
)

UNIT = InteractionSpace((0.0, 0.0, 0.0), 1.0, 1.0)


def test_space_explicit_size():
    s = build_space(shapes.box(), 6.0)
    assert s.edge == 6.0
    np.testing.assert_allclose(s.center, [0.5, 0.5, 0.5])


def test_space_auto():
    s = build_space(shapes.box())
    assert s.edge == pytest.approx(1.5)
    lo, hi = s.box
    assert np.all(lo <= 0) and np.all(hi >= 1)


def test_space_too_small():
    with pytest.raises(SensorGridError, match="inside U"):
        build_space(shapes.box(), 0.5)


def test_space_bad_axis():
    with pytest.raises(SensorGridError):
        build_space(shapes.box(), up_axis="w")


def test_two_opposite_samples_give_eight_leaves():
    t = build_sensor_tree(UNIT, np.array([[0.1, 0.1, 0.1], [0.9, 0.9, 0.9]]), max_depth=8)
    assert t.n_leaves == 8
    assert set(t.leaf_depth.tolist()) == {1}


def test_no_samples_single_root_leaf():
    t = build_sensor_tree(UNIT, np.zeros((0, 3)))
    assert t.n_leaves == 1 and t.leaf_size[0] == 1.0


def test_sample_outside_reported():
    with pytest.raises(SensorGridError, match="#1"):
        build_sensor_tree(UNIT, np.array([[0.5, 0.5, 0.5], [2.0, 0, 0]]))


@pytest.mark.parametrize("depth", [0, 13])
def test_depth_bounds(depth):
    with pytest.raises(SensorGridError):
        build_sensor_tree(UNIT, np.zeros((0, 3)), depth)


def test_locate_center_half_open():
    t = build_sensor_tree(UNIT, np.array([[0.1, 0.1, 0.1], [0.9, 0.9, 0.9]]))
    i = locate(t, [0.5, 0.5, 0.5])
    np.testing.assert_allclose(t.sensor(i).origin, [0.5, 0.5, 0.5])
    assert locate(t, [1.5, 0.5, 0.5]) is None
    # the upper faces of U are closed
    j = locate(t, [1.0, 1.0, 1.0])
    np.testing.assert_allclose(t.sensor(j).box[1], [1, 1, 1])


def test_table_scale_tree_and_invariants():
    m = shapes.cup()
    space = build_space(m)
    samples = poisson_disk_sample(m, 0.04 * 0.8, rng_seed=0)
    t = build_sensor_tree(space, samples, max_depth=8)
    assert 1000 <= t.n_leaves <= 50_000
    # leaves tile U
    assert (t.leaf_size**3).sum() == pytest.approx(space.edge**3, rel=1e-9)
    np.testing.assert_allclose(t.leaf_size, space.edge / 2.0**t.leaf_depth)
    # every sample sits in a max-depth leaf or alone in its leaf
    leaf = t.locate_many(samples.points)
    counts = np.bincount(leaf, minlength=t.n_leaves)
    assert np.all((t.leaf_depth[leaf] == 8) | (counts[leaf] == 1))
    # and no leaf with more than one sample stops early
    assert np.all(t.leaf_depth[counts > 1] == 8)


def test_random_points_located_in_their_box():
    m = shapes.cup()
    space = build_space(m)
    t = build_sensor_tree(space, poisson_disk_sample(m, 0.05, rng_seed=1))
    rng = np.random.default_rng(0)
    lo, hi = space.box
    q = rng.uniform(lo, hi, size=(10_000, 3))
    ids = t.locate_many(q)
    assert np.all(ids >= 0)
    o = t.leaf_origin[ids]
    s = t.leaf_size[ids, None]
    assert np.all((q >= o - 1e-12) & (q <= o + s + 1e-12))


def test_leaf_csv(tmp_path):
    t = build_sensor_tree(UNIT, np.array([[0.1, 0.1, 0.1], [0.9, 0.9, 0.9]]))
    t.to_csv(tmp_path / "l.csv")
    lines = (tmp_path / "l.csv").read_text().splitlines()
    assert lines[0] == "id,depth,cx,cy,cz,size" and len(lines) == 9


points = st.lists(st.tuples(*[st.floats(0, 1, allow_nan=False)] * 3), min_size=0, max_size=60)


@settings(max_examples=40, deadline=None)
@given(points, st.integers(1, 6))
def test_leaves_tile_space(pts, depth):
    t = build_sensor_tree(UNIT, np.array(pts).reshape(-1, 3), depth)
    assert (t.leaf_size**3).sum() == pytest.approx(1.0, rel=1e-9)
    # subdivision happened iff a parent held more than one sample (checked via leaves)
    if len(pts):
        leaf = t.locate_many(np.array(pts))
        counts = np.bincount(leaf, minlength=t.n_leaves)
        assert np.all((counts <= 1) | (t.leaf_depth == depth))


@settings(max_examples=30, deadline=None)
@given(points, points)
def test_leaf_count_monotone_in_samples(a, b):
    pa = np.array(a).reshape(-1, 3)
    pb = np.vstack([pa, np.array(b).reshape(-1, 3)])
    assert build_sensor_tree(UNIT, pb, 5).n_leaves >= build_sensor_tree(UNIT, pa, 5).n_leaves
