"""Problem data model, synthetic instance generation and the instance file format."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, InstanceParseError

MINUTES_PER_WEEK = 7 * 24 * 60


@dataclass(frozen=True)
class GeoPoint:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ConfigurationError(f"non-finite coordinate ({self.x}, {self.y})")


@dataclass(frozen=True)
class Load:
    id: int
    origin: GeoPoint
    destination: GeoPoint
    release_time: int


@dataclass(frozen=True)
class Params:
    """Scenario parameters. Defaults are the baseline case-study values."""

    alpha: float = 0.25
    beta: float = 0.25
    gamma: float = 0.40
    delta_minutes: int = 60
    sigma_minutes: int = 30
    num_trucks: int = 100
    num_hubs: int = 100
    horizon_minutes: int = 4 * MINUTES_PER_WEEK
    speed_mph: float = 65.0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigurationError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not 0.0 <= self.beta < 1.0:
            raise ConfigurationError(f"beta must lie in [0, 1), got {self.beta}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigurationError(f"gamma must lie in [0, 1], got {self.gamma}")
        for name in ("delta_minutes", "sigma_minutes", "num_trucks", "num_hubs", "horizon_minutes"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigurationError(f"{name} must be an integer number of minutes/units, got {value!r}")
        if self.delta_minutes < 0 or self.sigma_minutes < 0 or self.num_trucks < 0:
            raise ConfigurationError("delta_minutes, sigma_minutes and num_trucks must be >= 0")
        if self.num_hubs < 1:
            raise ConfigurationError(f"num_hubs must be >= 1, got {self.num_hubs}")
        if self.horizon_minutes <= 0:
            raise ConfigurationError(f"horizon_minutes must be > 0, got {self.horizon_minutes}")
        if not self.speed_mph > 0:
            raise ConfigurationError(f"speed_mph must be > 0, got {self.speed_mph}")

    def with_overrides(self, **overrides) -> "Params":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


@dataclass(frozen=True)
class Instance:
    loads: tuple[Load, ...]
    params: Params = field(default_factory=Params)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "loads", tuple(self.loads))
        for i, load in enumerate(self.loads):
            if load.id != i:
                raise ConfigurationError(f"load ids must be contiguous from 0; position {i} has id {load.id}")
            if not 0 <= load.release_time <= self.params.horizon_minutes:
                raise ConfigurationError(
                    f"load {load.id}: release_time {load.release_time} outside [0, {self.params.horizon_minutes}]"
                )
            if load.origin == load.destination:
                raise ConfigurationError(f"load {load.id}: origin equals destination")

    def with_params(self, params: Params) -> "Instance":
        return Instance(self.loads, params, self.seed)


@dataclass(frozen=True)
class GeneratorConfig:
    num_loads: int = 2000
    num_regions: int = 25
    region_spread_miles: float = 40.0
    horizon_minutes: int = 4 * MINUTES_PER_WEEK
    bounding_box_miles: tuple[float, float] = (2500.0, 1500.0)

    def validate(self):
        if self.num_loads < 0:
            raise ConfigurationError("num_loads must be >= 0")
        if self.num_regions < 1:
            raise ConfigurationError("num_regions must be >= 1")
        if self.region_spread_miles < 0:
            raise ConfigurationError("region_spread_miles must be >= 0")
        if self.horizon_minutes <= 0:
            raise ConfigurationError("horizon_minutes must be > 0")
        width, height = self.bounding_box_miles
        if not (width > 0 and height > 0):
            raise ConfigurationError("bounding box dimensions must be positive")


def distance(a: GeoPoint, b: GeoPoint) -> float:
    return math.hypot(a.x - b.x, a.y - b.y)


def travel_minutes(a: GeoPoint, b: GeoPoint, speed: float) -> int:
    """Driving time in whole minutes, rounded to nearest."""
    return minutes_for_miles(distance(a, b), speed)


def minutes_for_miles(miles: float, speed: float) -> int:
    # round-half-up: Python's round() would send 0.5 to 0
    return int(math.floor(60.0 * miles / speed + 0.5))


def generate_synthetic(config: GeneratorConfig, seed: int, params: Params | None = None) -> Instance:
    """Draw loads from Gaussian clusters around random region centres.

    Regions are weighted unevenly (Dirichlet) so some metros dominate demand.
    Origin and destination regions are drawn independently; points are
    clipped to the bounding box.
    """
    config.validate()
    if params is None:
        params = Params(horizon_minutes=config.horizon_minutes)
    elif params.horizon_minutes != config.horizon_minutes:
        params = replace(params, horizon_minutes=config.horizon_minutes)

    rng = np.random.default_rng(seed)
    width, height = config.bounding_box_miles
    centres = rng.uniform((0.0, 0.0), (width, height), size=(config.num_regions, 2))
    weights = rng.dirichlet(np.ones(config.num_regions))

    loads = []
    while len(loads) < config.num_loads:
        regions = rng.choice(config.num_regions, size=2, p=weights)
        pts = centres[regions] + rng.normal(0.0, config.region_spread_miles, size=(2, 2))
        pts[:, 0] = np.clip(pts[:, 0], 0.0, width)
        pts[:, 1] = np.clip(pts[:, 1], 0.0, height)
        origin = GeoPoint(float(pts[0, 0]), float(pts[0, 1]))
        destination = GeoPoint(float(pts[1, 0]), float(pts[1, 1]))
        release = int(rng.integers(0, config.horizon_minutes))
        if origin == destination:
            continue
        loads.append(Load(len(loads), origin, destination, release))
    return Instance(tuple(loads), params, seed)


# -- file format -------------------------------------------------------------

_PARAM_TYPES = {
    "alpha": float,
    "beta": float,
    "gamma": float,
    "delta_minutes": int,
    "sigma_minutes": int,
    "num_trucks": int,
    "num_hubs": int,
    "horizon_minutes": int,
    "speed_mph": float,
}
_LOAD_FIELDS = {"id", "origin", "destination", "release_time"}


def instance_to_dict(instance: Instance) -> dict:
    return {
        "params": asdict(instance.params),
        "loads": [
            {
                "id": ld.id,
                "origin": {"x": ld.origin.x, "y": ld.origin.y},
                "destination": {"x": ld.destination.x, "y": ld.destination.y},
                "release_time": ld.release_time,
            }
            for ld in instance.loads
        ],
        "seed": instance.seed,
    }


def write_instance(instance: Instance, path) -> None:
    text = json.dumps(instance_to_dict(instance), indent=1)
    Path(path).write_text(text + "\n", encoding="utf-8")


def read_instance(path) -> Instance:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InstanceParseError(f"{path}: not valid JSON ({exc})") from exc
    except OSError as exc:
        raise InstanceParseError(f"{path}: cannot read ({exc.strerror})") from exc
    return instance_from_dict(doc)


def _check_keys(obj, expected: set, where: str):
    if not isinstance(obj, dict):
        raise InstanceParseError(f"{where}: expected an object")
    missing = expected - obj.keys()
    if missing:
        raise InstanceParseError(f"{where}: missing field(s) " + ", ".join(f"{where}.{m}" for m in sorted(missing)))
    unknown = obj.keys() - expected
    if unknown:
        raise InstanceParseError(f"{where}: unknown field(s) " + ", ".join(f"{where}.{u}" for u in sorted(unknown)))


def _number(value, kind, where):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InstanceParseError(f"{where}: expected a number, got {value!r}")
    if kind is int:
        if isinstance(value, float) and not value.is_integer():
            raise InstanceParseError(f"{where}: expected an integer, got {value!r}")
        return int(value)
    return float(value)


def _point(obj, where) -> GeoPoint:
    _check_keys(obj, {"x", "y"}, where)
    try:
        return GeoPoint(_number(obj["x"], float, f"{where}.x"), _number(obj["y"], float, f"{where}.y"))
    except ConfigurationError as exc:
        raise InstanceParseError(f"{where}: {exc}") from exc


def instance_from_dict(doc) -> Instance:
    _check_keys(doc, {"params", "loads", "seed"}, "instance")
    _check_keys(doc["params"], set(_PARAM_TYPES), "params")
    values = {k: _number(doc["params"][k], t, f"params.{k}") for k, t in _PARAM_TYPES.items()}
    try:
        params = Params(**values)
    except ConfigurationError as exc:
        raise InstanceParseError(f"params: {exc}") from exc

    if not isinstance(doc["loads"], list):
        raise InstanceParseError("loads: expected an array")
    loads = []
    for i, raw in enumerate(doc["loads"]):
        where = f"loads[{i}]"
        _check_keys(raw, _LOAD_FIELDS, where)
        loads.append(
            Load(
                id=_number(raw["id"], int, f"{where}.id"),
                origin=_point(raw["origin"], f"{where}.origin"),
                destination=_point(raw["destination"], f"{where}.destination"),
                release_time=_number(raw["release_time"], int, f"{where}.release_time"),
            )
        )
    seed = _number(doc["seed"], int, "seed")
    try:
        return Instance(tuple(loads), params, seed)
    except ConfigurationError as exc:
        raise InstanceParseError(f"loads: {exc}") from exc
