import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from athn.errors import ConfigurationError, InstanceParseError
from athn.instance import (
    GeneratorConfig,
    GeoPoint,
    Instance,
    Load,
    Params,
    distance,
    generate_synthetic,
    instance_to_dict,
    minutes_for_miles,
    read_instance,
    travel_minutes,
    write_instance,
)

coords = st.floats(min_value=-1e4, max_value=1e4, allow_nan=False, allow_infinity=False)
points = st.builds(GeoPoint, coords, coords)


def test_baseline_params():
    p = Params()
    assert (p.alpha, p.beta, p.gamma) == (0.25, 0.25, 0.40)
    assert (p.delta_minutes, p.sigma_minutes, p.num_trucks, p.num_hubs) == (60, 30, 100, 100)
    assert p.horizon_minutes == 4 * 7 * 24 * 60
    assert p.speed_mph == 65.0


def test_params_validation():
    with pytest.raises(ConfigurationError):
        Params(beta=1.0)
    with pytest.raises(ConfigurationError):
        Params(delta_minutes=-1)
    with pytest.raises(ConfigurationError):
        Params(sigma_minutes=1.5)
    assert Params().with_overrides(alpha=None, delta_minutes=30).delta_minutes == 30


def test_geopoint_must_be_finite():
    with pytest.raises(ConfigurationError):
        GeoPoint(float("nan"), 0.0)
    with pytest.raises(ConfigurationError):
        GeoPoint(0.0, float("inf"))


def test_load_invariants():
    a, b = GeoPoint(0, 0), GeoPoint(1, 0)
    with pytest.raises(ConfigurationError):
        Instance((Load(0, a, a, 0),))
    with pytest.raises(ConfigurationError):
        Instance((Load(1, a, b, 0),))
    with pytest.raises(ConfigurationError):
        Instance((Load(0, a, b, Params().horizon_minutes + 1),))


def test_distance_and_minutes():
    assert distance(GeoPoint(0, 0), GeoPoint(3, 4)) == 5.0
    assert travel_minutes(GeoPoint(0, 0), GeoPoint(65, 0), 65.0) == 60
    # 0.923 minutes rounds to 1
    assert travel_minutes(GeoPoint(0, 0), GeoPoint(1, 0), 65.0) == 1
    # half a minute rounds up
    assert minutes_for_miles(65.0 / 120.0, 65.0) == 1
    assert minutes_for_miles(0.0, 65.0) == 0


@given(points, points, points)
def test_distance_metric(a, b, c):
    assert distance(a, b) == distance(b, a)
    assert distance(a, c) <= distance(a, b) + distance(b, c) + 1e-9 * (1 + distance(a, c))


def test_generate_empty():
    inst = generate_synthetic(GeneratorConfig(num_loads=0), seed=5)
    assert inst.loads == ()


def test_generate_deterministic(tmp_path):
    cfg = GeneratorConfig(num_loads=50)
    write_instance(generate_synthetic(cfg, 42), tmp_path / "a.json")
    write_instance(generate_synthetic(cfg, 42), tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert generate_synthetic(cfg, 43) != generate_synthetic(cfg, 42)


def test_generate_case_study_size():
    inst = generate_synthetic(GeneratorConfig(num_loads=6842, horizon_minutes=40320), seed=0)
    assert len(inst.loads) == 6842
    assert all(0 <= ld.release_time <= 40319 for ld in inst.loads)
    assert all(isinstance(ld.release_time, int) for ld in inst.loads)
    assert [ld.id for ld in inst.loads] == list(range(6842))


def test_generator_config_validation():
    with pytest.raises(ConfigurationError):
        generate_synthetic(GeneratorConfig(num_regions=0), seed=0)
    with pytest.raises(ConfigurationError):
        generate_synthetic(GeneratorConfig(bounding_box_miles=(0.0, 10.0)), seed=0)


def test_roundtrip(tmp_path):
    loads = (
        Load(0, GeoPoint(0.5, 1.25), GeoPoint(100.0, 3.0), 10),
        Load(1, GeoPoint(7.0, 8.0), GeoPoint(9.0, 10.0), 0),
        Load(2, GeoPoint(-1.0, 2.0), GeoPoint(3.0, -4.0), 40320),
    )
    inst = Instance(loads, Params(delta_minutes=45), seed=9)
    write_instance(inst, tmp_path / "i.json")
    assert read_instance(tmp_path / "i.json") == inst


def _doc(tmp_path):
    inst = generate_synthetic(GeneratorConfig(num_loads=3), seed=1)
    return instance_to_dict(inst)


def _write(tmp_path, doc):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    return path


def test_missing_field_names_it(tmp_path):
    doc = _doc(tmp_path)
    del doc["params"]["beta"]
    with pytest.raises(InstanceParseError, match="beta"):
        read_instance(_write(tmp_path, doc))


def test_beta_one_rejected(tmp_path):
    doc = _doc(tmp_path)
    doc["params"]["beta"] = 1.0
    with pytest.raises(InstanceParseError, match="beta"):
        read_instance(_write(tmp_path, doc))


def test_unknown_field_rejected(tmp_path):
    doc = _doc(tmp_path)
    doc["loads"][0]["weight"] = 3
    with pytest.raises(InstanceParseError, match="weight"):
        read_instance(_write(tmp_path, doc))


def test_fractional_minutes_rejected(tmp_path):
    doc = _doc(tmp_path)
    doc["loads"][1]["release_time"] = 10.5
    with pytest.raises(InstanceParseError, match="release_time"):
        read_instance(_write(tmp_path, doc))


def test_not_json(tmp_path):
    path = tmp_path / "x.json"
    path.write_text("{")
    with pytest.raises(InstanceParseError):
        read_instance(path)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 40), st.integers(0, 2**16))
def test_generated_times_are_integers(n, seed):
    inst = generate_synthetic(GeneratorConfig(num_loads=n, horizon_minutes=1000), seed)
    assert len(inst.loads) == n
    for ld in inst.loads:
        assert isinstance(ld.release_time, int) and 0 <= ld.release_time < 1000
        assert ld.origin != ld.destination
