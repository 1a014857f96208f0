import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ilscape.descriptor import (
    ATTRIBUTES,
    DEFAULT_SCALES,
    AttributeWeights,
    DescriptorError,
    DescriptorFormatError,
    IncomparableError,
    InteractionDescriptor,
    LocalHistogram,
    NoInteractionError,
    aggregate,
    attribute_distances,
    bhattacharyya,
    distance,
    distance_weight,
    dumps,
    load_descriptor,
    loads,
    local_histogram,
    save_descriptor,
    to_document,
    volume_weighted_mean,
)
from ilscape.flowfield import AttributeGrid, VectorField


def one_cell_field(size=1.0, n=4):
    count = np.zeros((n, n, n))
    count[1, 1, 1] = 1
    return VectorField(7, np.zeros(3), size, np.zeros((n, n, n, 3)), count)


def grid_with(value, attribute="Md", n=4):
    v = np.zeros((n, n, n))
    v[1, 1, 1] = value
    return AttributeGrid(attribute, v)


def random_descriptor(rng, bins=16, **kw):
    hists = {}
    for a in ATTRIBUTES:
        h = rng.random(bins) ** 3
        hists[a] = h / h.sum()
    meta = dict(resolution=8, norm_mode="average", scales=dict(DEFAULT_SCALES), active_sensors=int(rng.integers(1, 999)))
    meta.update(kw)
    return InteractionDescriptor(hists, bins, **meta)


unit_hist = arrays(float, 12, elements=st.floats(0, 1)).filter(lambda h: h.sum() > 1e-6).map(lambda h: h / h.sum())


# --- local histograms ------------------------------------------------------------

def test_local_histogram_hand_evaluation():
    h = local_histogram(grid_with(0.35), one_cell_field(), bins=10, scale=1.0, distances=np.zeros(64))
    expect = np.zeros(10)
    expect[3] = 0.035
    np.testing.assert_allclose(h.raw, expect, atol=1e-15)
    np.testing.assert_allclose(h.bins, np.eye(10)[3])
    assert h.active and h.sensor_id == 7


def test_distance_weight_at_r():
    assert distance_weight(2.0, 2.0) / distance_weight(0.0, 2.0) == pytest.approx(math.exp(-1))
    far = local_histogram(grid_with(0.35), one_cell_field(2.0), bins=10, scale=1.0, distances=np.full(64, 2.0))
    near = local_histogram(grid_with(0.35), one_cell_field(2.0), bins=10, scale=1.0, distances=np.zeros(64))
    assert far.raw[3] / near.raw[3] == pytest.approx(math.exp(-1))


def test_value_at_scale_goes_to_last_bin_and_clamps():
    h = local_histogram(grid_with(5.0), one_cell_field(), bins=8, scale=1.0, distances=np.zeros(64))
    assert h.bins[-1] == 1.0


def test_empty_sensor_inactive():
    f = VectorField(0, np.zeros(3), 1.0, np.zeros((4, 4, 4, 3)), np.zeros((4, 4, 4)))
    h = local_histogram(grid_with(0.5), f, bins=8, scale=1.0, distances=np.zeros(64))
    assert not h.active and np.all(h.bins == 0)


def test_occupied_zero_valued_sensor_goes_to_bin_zero():
    h = local_histogram(grid_with(0.0), one_cell_field(), bins=8, scale=1.0, distances=np.zeros(64))
    assert h.active and h.bins[0] == 1.0 and np.all(h.raw == 0)


def test_local_histogram_with_mesh_distances():
    from ilscape import shapes

    h = local_histogram(grid_with(0.5), one_cell_field(), mesh=shapes.box(), bins=8, scale=1.0)
    assert h.bins.sum() == pytest.approx(1.0)


# --- aggregation ------------------------------------------------------------------

def lh(sid, size, bins, attribute="Mt", active=True):
    b = np.asarray(bins, dtype=float)
    return LocalHistogram(attribute, sid, size, b, b, active)


def test_volume_weighted_mean_substitution():
    m = volume_weighted_mean(np.array([[0.2, 0.8], [0.8, 0.2]]), np.array([1.0, 2.0]))
    # rows already sum to one, so renormalization leaves the weighted mean as is
    assert m[0] == pytest.approx((0.2 * 1 + 0.8 * 8) / 9)


def locals_for(rows):
    return [lh(sid, size, b, a) for a in ATTRIBUTES for sid, size, b in rows]


def test_aggregate_single_sensor_is_identity():
    d = aggregate(locals_for([(0, 1.0, [0.25, 0.75])]), 8, "average")
    for a in ATTRIBUTES:
        np.testing.assert_allclose(d[a], [0.25, 0.75])
    assert d.active_sensors == 1 and d.bins == 2


def test_aggregate_duplicated_sensors_unchanged():
    rows = [(0, 1.0, [0.2, 0.8]), (1, 2.0, [0.8, 0.2])]
    dup = rows + [(2, 1.0, [0.2, 0.8]), (3, 2.0, [0.8, 0.2])]
    a, b = aggregate(locals_for(rows), 8, "average"), aggregate(locals_for(dup), 8, "average")
    for k in ATTRIBUTES:
        np.testing.assert_allclose(a[k], b[k], atol=1e-15)


def test_aggregate_skips_inactive_and_errors_when_empty():
    rows = locals_for([(0, 1.0, [0.5, 0.5])]) + [lh(1, 4.0, [0, 0], a, active=False) for a in ATTRIBUTES]
    d = aggregate(rows, 8, "average")
    np.testing.assert_allclose(d["Mt"], [0.5, 0.5])
    with pytest.raises(NoInteractionError, match="no interaction captured"):
        aggregate([lh(1, 4.0, [0, 0], a, active=False) for a in ATTRIBUTES], 8, "average")


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.integers(2, 20))
def test_sensor_order_is_irrelevant_bitwise(seed, n):
    rng = np.random.default_rng(seed)
    rows = [(i, float(rng.choice([0.5, 1, 2])), rng.dirichlet(np.ones(8))) for i in range(n)]
    hs = locals_for(rows)
    perm = [hs[i] for i in rng.permutation(len(hs))]
    a, b = aggregate(hs, 8, "average"), aggregate(perm, 8, "average")
    assert a.equals(b)


# --- Bhattacharyya and distance -------------------------------------------------

def test_bhattacharyya_examples():
    assert bhattacharyya([0.3, 0.7], [0.3, 0.7]) == pytest.approx(0.0, abs=1e-7)
    assert bhattacharyya([1, 0], [0, 1]) == 1.0
    bc = math.sqrt(0.45) + math.sqrt(0.05)
    assert bc == pytest.approx(0.8944, abs=1e-4)
    assert bhattacharyya([0.5, 0.5], [0.9, 0.1]) == pytest.approx(math.sqrt(1 - bc), abs=1e-12)
    assert bhattacharyya([0.5, 0.5], [0.9, 0.1]) == pytest.approx(0.3249, abs=1e-4)
    assert bhattacharyya([0.5, 0.5], [0.9, 0.1], "log") == pytest.approx(-math.log(bc))
    assert bhattacharyya([1, 0], [0, 1], "log") == math.inf


def test_bhattacharyya_shape_mismatch():
    with pytest.raises(IncomparableError):
        bhattacharyya([0.5, 0.5], [1 / 3] * 3)
    with pytest.raises(DescriptorError):
        bhattacharyya([1.0], [1.0], "cosine")


@given(unit_hist, unit_hist)
def test_bhattacharyya_bounded_symmetric(h, k):
    d = bhattacharyya(h, k)
    assert 0.0 <= d <= 1.0
    assert d == bhattacharyya(k, h)


def test_distance_arithmetic():
    hists_a = {a: np.array([1.0, 0.0]) for a in ATTRIBUTES}
    bc_half = 0.75  # sqrt(1 - BC) = 0.5
    hists_b = {a: np.array([bc_half**2, 1 - bc_half**2]) for a in ATTRIBUTES}
    meta = dict(bins=2, resolution=8, norm_mode="average", scales=dict(DEFAULT_SCALES), active_sensors=1)
    x, y = InteractionDescriptor(hists_a, **meta), InteractionDescriptor(hists_b, **meta)
    np.testing.assert_allclose(attribute_distances(x, y), 0.5)
    assert distance(x, y, AttributeWeights.uniform()) == pytest.approx(0.5)
    assert distance(x, x) == 0.0


def test_distance_symmetry_sweep():
    rng = np.random.default_rng(0)
    for _ in range(100):
        x, y = random_descriptor(rng), random_descriptor(rng)
        assert abs(distance(x, y) - distance(y, x)) <= 1e-12
        assert distance(x, y) >= 0


@pytest.mark.parametrize("field,kw", [
    ("bins", {"bins": 8}),
    ("resolution", {"resolution": 16}),
    ("norm_mode", {"norm_mode": "direction"}),
    ("scales", {"scales": {**DEFAULT_SCALES, "M": 2.0}}),
])
def test_incomparable_names_field(field, kw):
    rng = np.random.default_rng(1)
    a = random_descriptor(rng)
    b = random_descriptor(rng, **kw)
    with pytest.raises(IncomparableError) as exc:
        distance(a, b)
    assert exc.value.field == field
    assert field in str(exc.value)


def test_weights_validation():
    with pytest.raises(DescriptorError):
        AttributeWeights(Mt=-1)
    with pytest.raises(DescriptorError):
        AttributeWeights(0, 0, 0, 0, 0, 0)
    with pytest.raises(DescriptorError, match="unknown"):
        AttributeWeights.from_mapping({"Mx": 1})
    w = AttributeWeights()
    assert w.Md == w.O == 1.0 and w.Ms == w.M == 0.25
    assert w.scaled(2).as_dict()["Mt"] == 1.5


# --- serialization --------------------------------------------------------------

def test_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    d = random_descriptor(rng, label="pour")
    save_descriptor(d, tmp_path / "x.ild")
    back = load_descriptor(tmp_path / "x.ild")
    assert back.equals(d) and back.label == "pour"
    doc = json.loads((tmp_path / "x.ild").read_text())
    for key in ("version", "bins", "resolution", "norm_mode", "scales", "active_sensors", "label",
                *(f"hist_{a}" for a in ATTRIBUTES)):
        assert key in doc


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([8, 16, 33, 64]))
def test_round_trip_property(seed, bins):
    d = random_descriptor(np.random.default_rng(seed), bins=bins)
    back = loads(dumps(d))
    for a in ATTRIBUTES:
        np.testing.assert_allclose(back[a], d[a], rtol=1e-12, atol=0)
    assert dumps(back) == dumps(d)


def test_truncated_file_reports_offset(tmp_path):
    text = dumps(random_descriptor(np.random.default_rng(4)))
    (tmp_path / "t.ild").write_text(text[:100])
    with pytest.raises(DescriptorFormatError, match="byte"):
        load_descriptor(tmp_path / "t.ild")


def test_version_bump_rejected():
    doc = to_document(random_descriptor(np.random.default_rng(5)))
    doc["version"] = 2
    with pytest.raises(DescriptorFormatError, match="unsupported version"):
        loads(json.dumps(doc))


@pytest.mark.parametrize("mutate", [
    lambda d: d.pop("hist_O"),
    lambda d: d.update(hist_Mt=d["hist_Mt"][:-1]),
    lambda d: d.update(hist_Mt=[0.0] * len(d["hist_Mt"])),
    lambda d: d.update(norm_mode="speed"),
    lambda d: d.update(resolution=5),
    lambda d: d.update(bins=4),
    lambda d: d.update(extra=1),
    lambda d: d["scales"].pop("M"),
])
def test_malformed_documents(mutate):
    doc = to_document(random_descriptor(np.random.default_rng(6)))
    mutate(doc)
    with pytest.raises(DescriptorFormatError):
        loads(json.dumps(doc))


@given(unit_hist)
def test_self_distance_exactly_zero(h):
    assert bhattacharyya(h, h) == 0.0
    d = random_descriptor(np.random.default_rng(int(h[0] * 1e6)))
    assert distance(d, d) == 0.0
